#include "config.hpp"

#include <cmath>

namespace msff::cli {

namespace {

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return true;
  return a.type() == b.type();
}

const char* kind_name(const json& j) {
  if (j.is_number()) return "number";
  return j.type_name();
}

double num(const json& j, const char* key, const std::string& where) {
  const json& v = j.at(key);
  if (!v.is_number()) throw ConfigError(where + "." + key + " must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(where + "." + key + " must be finite");
  return x;
}

int integer(const json& j, const char* key, const std::string& where) {
  const json& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(where + "." + key + " must be an integer");
  return v.get<int>();
}

std::vector<double> numbers(const json& j, const char* key, const std::string& where, double scale = 1.0) {
  std::vector<double> out;
  for (const auto& v : j.at(key)) {
    if (!v.is_number()) throw ConfigError(where + "." + key + " must hold numbers");
    out.push_back(scale * v.get<double>());
  }
  return out;
}

std::vector<double> grid(const json& j, const std::string& where, double scale, bool log_allowed) {
  const double lo = num(j, "min_hz", where), hi = num(j, "max_hz", where);
  const int n = integer(j, "count", where);
  const bool log = log_allowed && j.at("log").get<bool>();
  if (n < 1 || hi < lo) throw ConfigError(where + ": need count >= 1 and max_hz >= min_hz");
  if (log && !(lo > 0.0)) throw ConfigError(where + ": a logarithmic grid needs min_hz > 0");
  std::vector<double> out;
  for (int i = 0; i < n; ++i) {
    const double u = n > 1 ? static_cast<double>(i) / (n - 1) : 0.0;
    out.push_back(scale * (log ? lo * std::pow(hi / lo, u) : lo + (hi - lo) * u));
  }
  return out;
}

OffsetRule parse_rule(const std::string& s, const std::string& where) {
  if (s == "scaled") return OffsetRule::scaled;
  if (s == "uniform") return OffsetRule::uniform;
  throw ConfigError(where + ": offset rule must be scaled or uniform");
}

PsdKind parse_kind(const std::string& s) {
  if (s == "zero") return PsdKind::zero;
  if (s == "gaussian_plus_oneoverf") return PsdKind::gaussian_plus_oneoverf;
  if (s == "monotone_line") return PsdKind::monotone_line;
  if (s == "tabulated") return PsdKind::tabulated;
  if (s == "white") return PsdKind::white;
  throw ConfigError("noise.kind: unknown PSD kind '" + s + "'");
}

}  // namespace

json default_config() {
  return json::parse(R"({
  "output_dir": "msff_out",
  "seed": 1,
  "trap": {
    "ion_count": 5,
    "ion_mass_amu": 170.9363258,
    "axial_frequency_hz": 380000.0,
    "transverse_frequency_hz": 2336000.0,
    "branch": "transverse",
    "wavevector_difference_per_m": 35398966.62170456,
    "thermal_occupation": []
  },
  "pair": [1, 2],
  "pulse": {"file": ""},
  "optimizer": {
    "method": "robust_fm_1",
    "segments": 40,
    "duration_s": 0.00015,
    "odd": false,
    "rabi_max_hz": 0.0,
    "beta": 1e-5,
    "gamma": 30.0,
    "representative_only": false,
    "batch_std_hz": 500.0,
    "batch_rule": "uniform",
    "batch_line_surrogate": true,
    "max_iterations": 0,
    "batch_iterations": 10000,
    "learning_rate": 0.02,
    "starts": 4,
    "gradient_tolerance": 1e-9,
    "bound_margin_hz": 200000.0,
    "initial_detuning_hz": -10000.0,
    "start_spread_hz": 2000.0,
    "grid": {"f_max_hz": 2000000.0, "per_decade": 16, "peak_points": 48}
  },
  "noise": {
    "channel": "mode_frequency",
    "kind": "gaussian_plus_oneoverf",
    "center_hz": 10000.0,
    "width_hz": 0.0,
    "peak_std_hz": 500.0,
    "flicker_std_hz": 100.0,
    "f_min_hz": 1.0,
    "f_max_hz": 13300000.0,
    "line_amplitude_hz": 0.0,
    "line_frequency_hz": 0.0,
    "white_level": 0.0,
    "white_bandwidth_hz": 0.0,
    "table_file": ""
  },
  "predict": {"f_min_hz": 0.0, "f_max_hz": 13300000.0, "per_decade": 48, "peak_points": 160},
  "simulation": {
    "gate_counts": [1, 9, 13, 21],
    "realizations": 200,
    "substeps": 8,
    "fock_truncation": 10,
    "mode_rule": "scaled",
    "static_offset_hz": 0.0,
    "rabi_offset": 0.0
  },
  "sweep": {
    "static": {"min_hz": -2000.0, "max_hz": 2000.0, "count": 81},
    "monotone": {"frequencies_hz": [500.0, 2000.0, 5000.0, 10000.0, 17000.0], "amplitude_hz": 707.1067811865476},
    "ff": {"min_hz": 100.0, "max_hz": 1000000.0, "count": 200, "log": true},
    "length": {"durations_s": [0.0001, 0.00015, 0.0002], "rabi_max_hz": [0.0]}
  },
  "budget": {
    "label": "pulse",
    "heating_com": 614.0,
    "heating_other": 5.0,
    "laser_coherence_s": 0.496,
    "realizations": 0,
    "truncation": 10,
    "steps_per_segment": 80,
    "gate_counts": [1, 9, 13, 21]
  },
  "spectroscopy": {
    "measurements_file": "",
    "joint_fit": false,
    "smoothing": 0.001,
    "fit_nodes": 0,
    "synthetic": {
      "pulses": 21,
      "peaks_hz": [5000.0, 6000.0, 7000.0, 8000.0, 9000.0, 9500.0, 10000.0, 10500.0, 11000.0, 12000.0, 13000.0, 15000.0],
      "contrast_std": 0.0
    }
  }
})");
}

json merge_config(json base, const json& user, const std::string& where) {
  if (!user.is_object()) throw ConfigError((where.empty() ? "config" : where) + " must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    json& slot = base[key];
    if (!same_kind(slot, value))
      throw ConfigError("config key '" + path + "' expects " + kind_name(slot) + ", got " + kind_name(value));
    if (slot.is_object())
      slot = merge_config(slot, value, path);
    else
      slot = value;
  }
  return base;
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string path = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  // Build the nested object and reuse the merge checks.
  json patch = value;
  std::size_t end = path.size();
  while (true) {
    const auto dot = path.rfind('.', end - 1);
    const std::string key = path.substr(dot == std::string::npos ? 0 : dot + 1, end - (dot == std::string::npos ? 0 : dot + 1));
    if (key.empty()) throw ConfigError("override path '" + path + "' has an empty component");
    patch = json{{key, patch}};
    if (dot == std::string::npos) break;
    end = dot;
  }
  config = merge_config(config, patch);
}

NoiseChannel parse_channel(const std::string& name) {
  if (name == "mode_frequency") return NoiseChannel::mode_frequency;
  if (name == "laser_phase") return NoiseChannel::laser_phase;
  if (name == "laser_intensity") return NoiseChannel::laser_intensity;
  throw ConfigError("noise.channel must be mode_frequency, laser_phase or laser_intensity");
}

const char* channel_name(NoiseChannel c) {
  switch (c) {
    case NoiseChannel::mode_frequency: return "mode_frequency";
    case NoiseChannel::laser_phase: return "laser_phase";
    case NoiseChannel::laser_intensity: return "laser_intensity";
  }
  return "?";
}

RunConfig resolve(const json& d) {
  RunConfig c;
  c.document = d;
  try {
    c.output_dir = d.at("output_dir").get<std::string>();
    if (!d.at("seed").is_number_unsigned()) throw ConfigError("seed must be a non-negative integer");
    c.seed = d.at("seed").get<std::uint64_t>();

    const json& t = d.at("trap");
    c.trap.ion_count = integer(t, "ion_count", "trap");
    c.trap.ion_mass = num(t, "ion_mass_amu", "trap") * kAtomicMassUnit;
    c.trap.axial_frequency = hz_to_rad(num(t, "axial_frequency_hz", "trap"));
    c.trap.transverse_frequency = hz_to_rad(num(t, "transverse_frequency_hz", "trap"));
    const std::string branch = t.at("branch").get<std::string>();
    if (branch != "axial" && branch != "transverse") throw ConfigError("trap.branch must be axial or transverse");
    c.trap.branch = branch == "axial" ? ModeBranch::axial : ModeBranch::transverse;
    c.trap.wavevector_difference = num(t, "wavevector_difference_per_m", "trap");
    c.trap.thermal_occupation = numbers(t, "thermal_occupation", "trap");
    c.trap.validate();

    const json& p = d.at("pair");
    if (p.size() != 2 || !p[0].is_number_integer() || !p[1].is_number_integer())
      throw ConfigError("pair must list two ion indices");
    c.pair = {p[0].get<int>(), p[1].get<int>()};
    c.pulse_file = d.at("pulse").at("file").get<std::string>();

    const json& n = d.at("noise");
    c.channel = parse_channel(n.at("channel").get<std::string>());
    c.noise.kind = parse_kind(n.at("kind").get<std::string>());
    c.noise.center = num(n, "center_hz", "noise");
    c.noise.width = num(n, "width_hz", "noise");
    c.noise.peak_std = hz_to_rad(num(n, "peak_std_hz", "noise"));
    c.noise.flicker_std = hz_to_rad(num(n, "flicker_std_hz", "noise"));
    c.noise.f_min = num(n, "f_min_hz", "noise");
    c.noise.f_max = num(n, "f_max_hz", "noise");
    c.noise.line_amplitude = hz_to_rad(num(n, "line_amplitude_hz", "noise"));
    c.noise.line_frequency = num(n, "line_frequency_hz", "noise");
    c.noise.white_level = num(n, "white_level", "noise");
    c.noise.white_bandwidth = num(n, "white_bandwidth_hz", "noise");
    const std::string table = n.at("table_file").get<std::string>();
    if (c.noise.kind == PsdKind::tabulated) {
      if (table.empty()) throw ConfigError("noise.table_file is required for a tabulated PSD");
      c.noise.table = read_tabulated_psd(io::read_text_file(table)).table;
    }

    const json& pr = d.at("predict");
    const double fmin = num(pr, "f_min_hz", "predict");
    c.predict.f_min = fmin > 0.0 ? fmin : NAN;
    c.predict.f_max = num(pr, "f_max_hz", "predict");
    c.predict.per_decade = integer(pr, "per_decade", "predict");
    c.predict.peak_points = integer(pr, "peak_points", "predict");

    const json& o = d.at("optimizer");
    OptimizerConfig& oc = c.optimizer;
    oc.method = parse_method(o.at("method").get<std::string>());
    oc.segments = integer(o, "segments", "optimizer");
    oc.duration = num(o, "duration_s", "optimizer");
    oc.odd = o.at("odd").get<bool>();
    oc.rabi_max = hz_to_rad(num(o, "rabi_max_hz", "optimizer"));
    oc.beta = num(o, "beta", "optimizer");
    oc.gamma = num(o, "gamma", "optimizer");
    oc.representative_only = o.at("representative_only").get<bool>();
    oc.batch_std = hz_to_rad(num(o, "batch_std_hz", "optimizer"));
    oc.batch_rule = parse_rule(o.at("batch_rule").get<std::string>(), "optimizer.batch_rule");
    oc.batch_line_surrogate = o.at("batch_line_surrogate").get<bool>();
    oc.max_iterations = integer(o, "max_iterations", "optimizer");
    oc.batch_iterations = integer(o, "batch_iterations", "optimizer");
    oc.learning_rate = num(o, "learning_rate", "optimizer");
    oc.starts = integer(o, "starts", "optimizer");
    oc.gradient_tolerance = num(o, "gradient_tolerance", "optimizer");
    oc.bound_margin = hz_to_rad(num(o, "bound_margin_hz", "optimizer"));
    oc.initial_detuning = hz_to_rad(num(o, "initial_detuning_hz", "optimizer"));
    oc.start_spread = hz_to_rad(num(o, "start_spread_hz", "optimizer"));
    const json& g = o.at("grid");
    oc.grid.f_max = num(g, "f_max_hz", "optimizer.grid");
    oc.grid.per_decade = integer(g, "per_decade", "optimizer.grid");
    oc.grid.peak_points = integer(g, "peak_points", "optimizer.grid");
    oc.seed = c.seed;
    if (oc.method == Method::ff_opt || oc.method == Method::batch_ff) oc.psd = build_psd(c.noise);
    oc.validate();

    const json& s = d.at("simulation");
    SimulationConfig& sc = c.simulation;
    sc.gate_counts.clear();
    for (const auto& v : s.at("gate_counts")) {
      if (!v.is_number_integer()) throw ConfigError("simulation.gate_counts must hold integers");
      sc.gate_counts.push_back(v.get<int>());
    }
    sc.realizations = integer(s, "realizations", "simulation");
    sc.substeps = integer(s, "substeps", "simulation");
    sc.fock_truncation = integer(s, "fock_truncation", "simulation");
    sc.mode_rule = parse_rule(s.at("mode_rule").get<std::string>(), "simulation.mode_rule");
    sc.seed = c.seed;
    sc.synthesis = c.predict;
    sc.validate();
    c.static_offset = hz_to_rad(num(s, "static_offset_hz", "simulation"));
    c.rabi_offset = num(s, "rabi_offset", "simulation");
    if (!(c.rabi_offset > -1.0)) throw ConfigError("simulation.rabi_offset must exceed -1");

    const json& sw = d.at("sweep");
    c.static_deltas = grid(sw.at("static"), "sweep.static", kTwoPi, false);
    c.monotone_frequencies = numbers(sw.at("monotone"), "frequencies_hz", "sweep.monotone");
    c.monotone_amplitude = hz_to_rad(num(sw.at("monotone"), "amplitude_hz", "sweep.monotone"));
    for (double f : c.monotone_frequencies)
      if (!(f > 0.0)) throw ConfigError("sweep.monotone.frequencies_hz must be positive");
    c.ff_frequencies = grid(sw.at("ff"), "sweep.ff", 1.0, true);
    c.lengths = numbers(sw.at("length"), "durations_s", "sweep.length");
    c.rabi_caps = numbers(sw.at("length"), "rabi_max_hz", "sweep.length", kTwoPi);
    for (double v : c.lengths)
      if (!(v > 0.0)) throw ConfigError("sweep.length.durations_s must be positive");
    for (double v : c.rabi_caps)
      if (v < 0.0) throw ConfigError("sweep.length.rabi_max_hz must be non-negative");

    const json& b = d.at("budget");
    c.budget_label = b.at("label").get<std::string>();
    c.heating_com = num(b, "heating_com", "budget");
    c.heating_other = num(b, "heating_other", "budget");
    c.budget.rates.laser_coherence = num(b, "laser_coherence_s", "budget");
    c.budget.realizations = integer(b, "realizations", "budget");
    c.budget.lindblad.truncation = integer(b, "truncation", "budget");
    c.budget.lindblad.steps_per_segment = integer(b, "steps_per_segment", "budget");
    c.budget.lindblad.gate_counts.clear();
    for (const auto& v : b.at("gate_counts")) {
      if (!v.is_number_integer()) throw ConfigError("budget.gate_counts must hold integers");
      c.budget.lindblad.gate_counts.push_back(v.get<int>());
    }
    c.budget.seed = c.seed;
    c.budget.lindblad.validate();
    if (c.heating_com < 0.0 || c.heating_other < 0.0) throw ConfigError("budget heating rates must be non-negative");

    const json& sp = d.at("spectroscopy");
    c.measurements_file = sp.at("measurements_file").get<std::string>();
    c.inversion.joint_fit = sp.at("joint_fit").get<bool>();
    c.inversion.smoothing = num(sp, "smoothing", "spectroscopy");
    c.inversion.fit_nodes = integer(sp, "fit_nodes", "spectroscopy");
    const json& sy = sp.at("synthetic");
    c.synthetic_pulses = integer(sy, "pulses", "spectroscopy.synthetic");
    c.synthetic_peaks = numbers(sy, "peaks_hz", "spectroscopy.synthetic");
    c.synthetic_contrast_std = num(sy, "contrast_std", "spectroscopy.synthetic");
    if (c.inversion.smoothing < 0.0) throw ConfigError("spectroscopy.smoothing must be non-negative");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

}  // namespace msff::cli
