#include "cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

#include "config.hpp"

namespace msff::cli {

namespace {

constexpr const char* kVersion = "1.0.0";

class Artifacts {
 public:
  explicit Artifacts(std::string dir) : dir_(std::move(dir)) {}

  void write(const std::string& name, const std::string& text) {
    std::filesystem::create_directories(dir_);
    io::write_text_file(path(name), text);
    files_.push_back({{"file", name}, {"fnv1a", io::hex64(io::fnv1a(text))}, {"bytes", text.size()}});
  }
  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }
  std::string path(const std::string& name) const { return (std::filesystem::path(dir_) / name).string(); }

  void manifest(const std::string& command, const RunConfig& c) {
    std::ostringstream eigen;
    eigen << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION;
    const std::string canonical = c.document.dump();
    json m = {{"command", command},
              {"config_hash", io::hex64(io::fnv1a(canonical))},
              {"seed", c.seed},
              {"versions", {{"msff", kVersion}, {"eigen", eigen.str()}, {"compiler", __VERSION__}}},
              {"artifacts", files_},
              {"config", c.document}};
    std::filesystem::create_directories(dir_);
    io::write_text_file(path("manifest_" + command + ".json"), m.dump(2) + "\n");
  }

 private:
  std::string dir_;
  json files_ = json::array();
};

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

struct Context {
  RunConfig cfg;
  Artifacts art;
  std::ostream& out;
  std::ostream& err;
  int status = 0;

  ModeStructure modes() const {
    ModeStructure m = lamb_dicke(normal_modes(cfg.trap), cfg.trap);
    cfg.pair.validate(m);
    return m;
  }
  FMPulse pulse() const {
    if (cfg.pulse_file.empty()) throw ConfigError("pulse.file is required for this command (or pass --pulse)");
    return io::pulse_from_json(io::read_json_file(cfg.pulse_file));
  }
  NoisePSD psd() const { return build_psd(cfg.noise); }
};

json cost_json(const CostBreakdown& c) {
  return {{"c1", c.c1},           {"c2", c.c2},
          {"ff_alpha", c.ff_alpha}, {"ff_theta", c.ff_theta},
          {"penalty", c.penalty},   {"batch_alpha", c.batch_alpha},
          {"batch_theta", c.batch_theta}, {"total", c.total()},
          {"rabi_hz", io::to_hz(c.rabi)}};
}

json prediction_json(const ErrorPrediction& p) {
  return {{"e_alpha", p.e_alpha}, {"e_theta", p.e_theta}, {"e_total", p.e_total()},
          {"f_lo_hz", p.f_lo},    {"f_hi_hz", p.f_hi},     {"grid_points", p.grid_points}};
}

json report_json(const GateErrorReport& r) {
  return {{"slope", r.slope}, {"slope_std", r.slope_std}, {"intercept", r.intercept},
          {"e_alpha", r.e_alpha}, {"e_theta", r.e_theta}};
}

bool distinct_counts(const std::vector<int>& g) {
  for (std::size_t i = 1; i < g.size(); ++i)
    if (g[i] != g[0]) return true;
  return false;
}

OptimizationResult run_optimizer(const OptimizerConfig& oc, const ModeStructure& modes, const IonPair& pair) {
  return oc.method == Method::batch_ff ? optimize_batch(oc, modes, pair) : optimize(oc, modes, pair);
}

// ---- commands -------------------------------------------------------------

void cmd_modes(Context& x) {
  const ModeStructure m = x.modes();
  x.art.write_json("modes.json", io::modes_to_json(m));
  for (int k = 0; k < m.mode_count(); ++k)
    x.out << "mode " << k << ": " << fmt(io::to_hz(m.frequencies(k))) << " Hz" << (k == m.com_index ? " (COM)" : "")
          << '\n';
}

void cmd_optimize(Context& x) {
  const ModeStructure m = x.modes();
  const OptimizationResult r = run_optimizer(x.cfg.optimizer, m, x.cfg.pair);
  json hist = json::array();
  for (double w : r.rabi_history) hist.push_back(io::to_hz(w));
  x.art.write_json("pulse.json", io::pulse_to_json(r.pulse));
  x.art.write_json("optimization.json", {{"method", method_name(x.cfg.optimizer.method)},
                                         {"cost", cost_json(r.cost)},
                                         {"iterations", r.iterations},
                                         {"gradient_norm", r.gradient_norm},
                                         {"converged", r.converged},
                                         {"line_search_failed", r.line_search_failed},
                                         {"start_index", r.start_index},
                                         {"message", r.message},
                                         {"seed", x.cfg.seed},
                                         {"cost_history", r.cost_history},
                                         {"rabi_history_hz", hist}});
  x.out << method_name(x.cfg.optimizer.method) << ": cost " << fmt(r.cost.total()) << " after " << r.iterations
        << " iterations, Omega = " << fmt(io::to_hz(r.pulse.rabi)) << " Hz (" << r.message << ")\n";
  // ff_opt and batch_ff end on their iteration budget; only the robust targets can be missed.
  const Method mt = x.cfg.optimizer.method;
  if (!r.converged && (mt == Method::robust_fm_1 || mt == Method::robust_fm_2)) {
    x.err << "optimizer did not converge: " << r.message << '\n';
    x.status = 4;
  }
}

void cmd_ff(Context& x) {
  const ModeStructure m = x.modes();
  const auto table = filter_table(x.pulse(), m, x.cfg.pair, x.cfg.ff_frequencies);
  x.art.write("ff.csv", filter_table_csv(table));
  x.out << "filter functions at " << table.frequency.size() << " frequencies, fingerprint " << table.fingerprint
        << '\n';
}

void cmd_predict(Context& x) {
  const ModeStructure m = x.modes();
  const FMPulse p = x.pulse();
  const NoisePSD psd = x.psd();
  const ErrorPrediction e = predict_error(p, m, x.cfg.pair, psd, x.cfg.channel, x.cfg.predict);
  json j = prediction_json(e);
  j["channel"] = channel_name(x.cfg.channel);
  if (x.cfg.channel == NoiseChannel::mode_frequency)
    j["static_average"] = static_average_prediction(p, m, x.cfg.pair, psd, x.cfg.simulation.mode_rule);
  x.art.write_json("prediction.json", j);
  x.out << "E_alpha " << fmt(e.e_alpha) << "  E_Theta " << fmt(e.e_theta) << "  E_total " << fmt(e.e_total())
        << '\n';
}

void cmd_sweep_static(Context& x) {
  const ModeStructure m = x.modes();
  SweepOptions opt;
  opt.rule = x.cfg.simulation.mode_rule;
  const auto pts = static_error_sweep(x.pulse(), m, x.cfg.pair, x.cfg.static_deltas, opt);
  x.art.write("static_sweep.csv", static_sweep_csv(pts));
  x.out << "static sweep over " << pts.size() << " offsets\n";
}

void cmd_sweep_monotone(Context& x) {
  const ModeStructure m = x.modes();
  const FMPulse p = x.pulse();
  std::ostringstream csv;
  csv << std::setprecision(12)
      << "f_hz,E_alpha_pred,E_Theta_pred,E_total_pred,mc_eps,mc_eps_stderr,mc_E_alpha,mc_E_Theta,mc_slope,"
         "mc_slope_std\n";
  for (double f : x.cfg.monotone_frequencies) {
    const NoisePSD psd = monotone_psd(x.cfg.monotone_amplitude, f);
    const ErrorPrediction e = predict_error(p, m, x.cfg.pair, psd, x.cfg.channel, x.cfg.predict);
    const MonteCarloReport r = monte_carlo_error(p, m, x.cfg.pair, psd, x.cfg.channel, x.cfg.simulation);
    csv << f << ',' << e.e_alpha << ',' << e.e_theta << ',' << e.e_total() << ',' << r.mean_eps[0] << ','
        << r.stderr_eps[0] << ',' << r.mean_e_alpha << ',' << r.mean_e_theta << ','
        << (r.fit ? r.fit->slope : NAN) << ',' << (r.fit ? r.fit->slope_std : NAN) << '\n';
    x.out << "f' = " << fmt(f) << " Hz: predicted " << fmt(e.e_total()) << ", Monte-Carlo " << fmt(r.mean_eps[0])
          << " +- " << fmt(r.stderr_eps[0]) << '\n';
  }
  x.art.write("monotone_sweep.csv", csv.str());
}

void cmd_montecarlo(Context& x) {
  const ModeStructure m = x.modes();
  const FMPulse p = x.pulse();
  const NoisePSD psd = x.psd();
  const MonteCarloReport r = monte_carlo_error(p, m, x.cfg.pair, psd, x.cfg.channel, x.cfg.simulation);
  const ErrorPrediction e = predict_error(p, m, x.cfg.pair, psd, x.cfg.channel, x.cfg.predict);
  json j = {{"channel", channel_name(x.cfg.channel)},
            {"realizations", r.realizations},
            {"seed", x.cfg.seed},
            {"gate_counts", r.gate_counts},
            {"mean_eps", r.mean_eps},
            {"stderr_eps", r.stderr_eps},
            {"std_eps", r.std_eps},
            {"mean_e_alpha", r.mean_e_alpha},
            {"stderr_e_alpha", r.stderr_e_alpha},
            {"mean_e_theta", r.mean_e_theta},
            {"stderr_e_theta", r.stderr_e_theta},
            {"prediction", prediction_json(e)}};
  if (r.fit) j["fit"] = report_json(*r.fit);
  x.art.write_json("montecarlo.json", j);
  std::ostringstream csv;
  csv << std::setprecision(12) << "gate_count,mean_eps,stderr_eps,std_eps\n";
  for (std::size_t i = 0; i < r.gate_counts.size(); ++i)
    csv << r.gate_counts[i] << ',' << r.mean_eps[i] << ',' << r.stderr_eps[i] << ',' << r.std_eps[i] << '\n';
  x.art.write("montecarlo.csv", csv.str());
  x.out << "Monte-Carlo eps(" << r.gate_counts[0] << ") " << fmt(r.mean_eps[0]) << " +- " << fmt(r.stderr_eps[0])
        << ", predicted " << fmt(e.e_total()) << '\n';
}

void cmd_simulate(Context& x) {
  const ModeStructure m = x.modes();
  NoiseInput noise;
  noise.rabi_offset = x.cfg.rabi_offset;
  if (x.cfg.static_offset != 0.0) {
    noise.static_offsets.resize(m.mode_count());
    for (int k = 0; k < m.mode_count(); ++k)
      noise.static_offsets[k] =
          x.cfg.static_offset * (x.cfg.simulation.mode_rule == OffsetRule::scaled ? m.scaling(k) : 1.0);
  }
  const auto states = evolve_statevector(x.pulse(), m, x.cfg.pair, noise, x.cfg.simulation);
  std::vector<SequencePoint> pts;
  for (const auto& s : states) pts.push_back(sequence_point(s.rho, s.gates));
  x.art.write("sequence.csv", sequence_csv(pts));
  json j = {{"gate_counts", x.cfg.simulation.gate_counts}};
  json eps = json::array();
  for (const auto& q : pts) eps.push_back(q.eps);
  j["eps"] = eps;
  if (distinct_counts(x.cfg.simulation.gate_counts)) {
    const GateErrorReport r = extract_gate_error(pts);
    j["fit"] = report_json(r);
    x.out << "gate error " << fmt(r.slope) << " +- " << fmt(r.slope_std) << '\n';
  } else {
    x.out << "eps " << fmt(pts[0].eps) << '\n';
  }
  x.art.write_json("simulation.json", j);
}

void cmd_budget(Context& x) {
  const ModeStructure m = x.modes();
  BudgetOptions opt = x.cfg.budget;
  opt.rates.heating.assign(m.mode_count(), x.cfg.heating_other);
  opt.rates.heating[m.com_index] = x.cfg.heating_com;
  const BudgetEntry e = error_budget(x.cfg.budget_label, x.pulse(), m, x.cfg.pair, x.psd(), opt);
  const std::string table = budget_table({e});
  x.art.write("budget.txt", table);
  x.art.write("budget.csv", budget_csv({e}));
  json j = {{"label", e.label},     {"dephasing", e.dephasing}, {"heating", e.heating},
            {"heating_std", e.heating_std}, {"laser", e.laser}, {"laser_std", e.laser_std},
            {"total", e.total()}};
  if (std::isfinite(e.dephasing_mc)) {
    j["dephasing_mc"] = e.dephasing_mc;
    j["dephasing_mc_std"] = e.dephasing_mc_std;
  }
  x.art.write_json("budget.json", j);
  x.out << table;
}

void cmd_spectroscopy(Context& x) {
  std::vector<ContrastMeasurement> ms;
  std::optional<NoisePSD> truth;
  if (!x.cfg.measurements_file.empty()) {
    ms = read_measurements(io::read_text_file(x.cfg.measurements_file));
  } else {
    truth = x.psd();
    for (double f : x.cfg.synthetic_peaks) {
      if (!(f > 0.0)) throw ConfigError("spectroscopy.synthetic.peaks_hz must be positive");
      const CPMGSequence seq{x.cfg.synthetic_pulses, 0.5 / f, {}};
      ms.push_back({seq.pulses, seq.interval, forward_contrast(*truth, seq).contrast, x.cfg.synthetic_contrast_std});
    }
    x.art.write("measurements.csv", measurements_csv(ms));
  }
  const InversionResult r = invert_psd(ms, x.cfg.inversion);
  x.art.write("psd.csv", inversion_csv(r));
  json j = {{"warnings", r.warnings}, {"joint_fit", x.cfg.inversion.joint_fit}};
  if (x.cfg.inversion.joint_fit) j["fit_residual"] = r.fit_residual;
  json pts = json::array();
  double worst_nb = 0.0, worst_fit = 0.0;
  for (std::size_t i = 0; i < r.points.size(); ++i) {
    const auto& p = r.points[i];
    json q = {{"f_hz", p.frequency}, {"S", p.density}, {"S_std", p.density_std},
              {"L", p.pulses},       {"tau_tilde_s", p.interval}, {"averaged", p.averaged}};
    if (!r.fit_density.empty()) q["S_fit"] = r.fit_density[i];
    if (truth) {
      const double s = truth->density(p.frequency);
      q["S_true"] = s;
      worst_nb = std::max(worst_nb, std::abs(p.density / s - 1.0));
      if (!r.fit_density.empty()) worst_fit = std::max(worst_fit, std::abs(r.fit_density[i] / s - 1.0));
    }
    pts.push_back(q);
  }
  j["points"] = pts;
  if (truth) {
    j["max_relative_error_narrowband"] = worst_nb;
    if (!r.fit_density.empty()) j["max_relative_error_fit"] = worst_fit;
  }
  x.art.write_json("spectroscopy.json", j);
  for (const auto& w : r.warnings) x.err << "warning: " << w << '\n';
  x.out << "PSD estimated at " << r.points.size() << " filter peaks";
  if (truth)
    x.out << "; worst relative error " << fmt(r.fit_density.empty() ? worst_nb : worst_fit);
  x.out << '\n';
}

void cmd_sweep_length(Context& x) {
  const ModeStructure m = x.modes();
  const NoisePSD psd = x.psd();
  std::ostringstream csv;
  csv << std::setprecision(12)
      << "duration_s,rabi_max_hz,rabi_hz,E_alpha,E_Theta,E_total,iterations,converged\n";
  for (double tau : x.cfg.lengths) {
    for (double cap : x.cfg.rabi_caps) {
      OptimizerConfig oc = x.cfg.optimizer;
      oc.duration = tau;
      oc.rabi_max = cap;
      oc.validate();
      const OptimizationResult r = run_optimizer(oc, m, x.cfg.pair);
      const ErrorPrediction e = predict_error(r.pulse, m, x.cfg.pair, psd, x.cfg.channel, x.cfg.predict);
      csv << tau << ',' << io::to_hz(cap) << ',' << io::to_hz(r.pulse.rabi) << ',' << e.e_alpha << ','
          << e.e_theta << ',' << e.e_total() << ',' << r.iterations << ',' << (r.converged ? 1 : 0) << '\n';
      x.out << "tau " << fmt(tau * 1e6) << " us, Omega_max " << fmt(io::to_hz(cap)) << " Hz: E_total "
            << fmt(e.e_total()) << '\n';
    }
  }
  x.art.write("length_sweep.csv", csv.str());
}

const std::map<std::string, std::pair<std::function<void(Context&)>, const char*>>& commands() {
  static const std::map<std::string, std::pair<std::function<void(Context&)>, const char*>> table = {
      {"modes", {cmd_modes, "normal modes and Lamb-Dicke parameters of the chain"}},
      {"optimize", {cmd_optimize, "optimize an FM pulse (optimizer.method)"}},
      {"ff", {cmd_ff, "tabulate the four filter functions of a pulse"}},
      {"predict", {cmd_predict, "first-order gate error of a pulse under the configured PSD"}},
      {"sweep-static", {cmd_sweep_static, "exact error against a static mode-frequency offset"}},
      {"sweep-monotone", {cmd_sweep_monotone, "prediction vs Monte-Carlo for single-tone noise"}},
      {"montecarlo", {cmd_montecarlo, "Monte-Carlo gate error under the configured PSD"}},
      {"simulate", {cmd_simulate, "noiseless or static-offset gate sequence simulation"}},
      {"budget", {cmd_budget, "dephasing / heating / laser error budget"}},
      {"spectroscopy", {cmd_spectroscopy, "invert CPMG contrasts into a PSD"}},
      {"sweep-length", {cmd_sweep_length, "optimize and predict over pulse lengths and Rabi caps"}},
  };
  return table;
}

int fail(std::ostream& err, int code, const char* kind, const std::string& what) {
  err << json{{"error", kind}, {"exit_code", code}, {"message", what}}.dump() << '\n';
  return code;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Frequency-modulated MS gate design and noise analysis"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, out_dir, pulse_path, method, measurements;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  app.add_option("-c,--config", config_path, "JSON config file (defaults apply to missing keys)");
  app.add_option("-s,--set", sets, "override a config value, e.g. --set noise.center_hz=5000");
  app.add_option("-o,--out", out_dir, "output directory (output_dir)");
  app.add_option("--seed", seed, "random seed (seed)");
  app.add_option("--pulse", pulse_path, "pulse JSON (pulse.file)");
  app.add_option("--method", method, "optimizer method (optimizer.method)");
  app.add_option("--measurements", measurements, "CPMG contrast CSV (spectroscopy.measurements_file)");
  bool print_config = false;
  app.add_flag("--print-config", print_config, "print the resolved config and exit");
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, entry] : commands()) subs[name] = app.add_subcommand(name, entry.second);

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    return fail(err, 2, "usage", e.what());
  }

  try {
    json doc = default_config();
    if (!config_path.empty()) doc = merge_config(doc, io::read_json_file(config_path));
    for (const auto& s : sets) apply_override(doc, s);
    if (!out_dir.empty()) apply_override(doc, "output_dir=" + json(out_dir).dump());
    if (seed) doc["seed"] = *seed;
    if (!pulse_path.empty()) apply_override(doc, "pulse.file=" + json(pulse_path).dump());
    if (!method.empty()) apply_override(doc, "optimizer.method=" + json(method).dump());
    if (!measurements.empty()) apply_override(doc, "spectroscopy.measurements_file=" + json(measurements).dump());
    if (print_config) {
      out << doc.dump(2) << '\n';
      return 0;
    }
    std::string name;
    for (const auto& [n, sub] : subs)
      if (sub->parsed()) name = n;
    Context ctx{resolve(doc), Artifacts(doc.at("output_dir").get<std::string>()), out, err};
    commands().at(name).first(ctx);
    ctx.art.manifest(name, ctx.cfg);
    return ctx.status;
  } catch (const ConfigError& e) {
    return fail(err, 2, "config", e.what());
  } catch (const json::exception& e) {
    return fail(err, 2, "config", e.what());
  } catch (const ConvergenceError& e) {
    return fail(err, 4, "convergence", e.what());
  } catch (const NumericalError& e) {
    return fail(err, 3, "numerical", e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(err, 2, "io", e.what());
  } catch (const std::exception& e) {
    return fail(err, 3, "numerical", e.what());
  }
}

}  // namespace msff::cli
