#include "msff/io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace msff::io {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

double to_hz(double rad_per_s) { return rad_per_s / kTwoPi; }

double from_hz(double hz) {
  const double guess = hz * kTwoPi;
  if (to_hz(guess) == hz) return guess;
  double lo = guess, hi = guess;
  for (int step = 0; step < 8; ++step) {
    lo = std::nextafter(lo, -INFINITY);
    hi = std::nextafter(hi, INFINITY);
    if (to_hz(lo) == hz) return lo;
    if (to_hz(hi) == hz) return hi;
  }
  return guess;
}

json pulse_to_json(const FMPulse& p) {
  json j;
  j["tau_s"] = p.duration;
  j["omega_rabi_hz"] = to_hz(p.rabi);
  json seg = json::array();
  for (double m : p.mu) seg.push_back(to_hz(m));
  j["segments_hz"] = std::move(seg);
  j["symmetric"] = p.symmetric;
  if (p.spin_phase_sign != 1) j["spin_phase_sign"] = p.spin_phase_sign;
  return j;
}

FMPulse pulse_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("pulse must be a JSON object");
  require_known_keys(j, {"tau_s", "omega_rabi_hz", "segments_hz", "symmetric", "spin_phase_sign"},
                     "pulse");
  FMPulse p;
  try {
    p.duration = j.at("tau_s").get<double>();
    p.rabi = from_hz(j.at("omega_rabi_hz").get<double>());
    for (const auto& v : j.at("segments_hz")) p.mu.push_back(from_hz(v.get<double>()));
    p.symmetric = j.value("symmetric", false);
    p.spin_phase_sign = j.value("spin_phase_sign", 1);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed pulse: ") + e.what());
  }
  p.validate();
  return p;
}

json modes_to_json(const ModeStructure& m) {
  json j;
  j["branch"] = m.branch == ModeBranch::axial ? "axial" : "transverse";
  j["com_index"] = m.com_index;
  json f = json::array(), r = json::array(), nbar = json::array(), b = json::array(),
       eta = json::array();
  for (int k = 0; k < m.mode_count(); ++k) {
    f.push_back(to_hz(m.frequencies(k)));
    r.push_back(m.scaling(k));
    nbar.push_back(m.thermal_occupation.size() ? m.thermal_occupation(k) : 0.0);
    json brow = json::array(), erow = json::array();
    for (int i = 0; i < m.ion_count(); ++i) {
      brow.push_back(m.eigenvectors(k, i));
      erow.push_back(m.lamb_dicke(k, i));
    }
    b.push_back(std::move(brow));
    eta.push_back(std::move(erow));
  }
  j["frequencies_hz"] = std::move(f);
  j["eigenvectors"] = std::move(b);
  j["lamb_dicke"] = std::move(eta);
  j["scaling"] = std::move(r);
  j["thermal_occupation"] = std::move(nbar);
  return j;
}

ModeStructure modes_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("modes must be a JSON object");
  require_known_keys(j,
                     {"branch", "com_index", "frequencies_hz", "eigenvectors", "lamb_dicke",
                      "scaling", "thermal_occupation"},
                     "modes");
  ModeStructure m;
  try {
    const auto& f = j.at("frequencies_hz");
    const auto& eta = j.at("lamb_dicke");
    const int nm = static_cast<int>(f.size());
    if (nm == 0 || eta.size() != f.size()) throw ConfigError("modes: inconsistent sizes");
    const int ni = static_cast<int>(eta.at(0).size());
    m.branch = j.value("branch", std::string("transverse")) == "axial" ? ModeBranch::axial
                                                                      : ModeBranch::transverse;
    m.frequencies.resize(nm);
    m.lamb_dicke.resize(nm, ni);
    m.eigenvectors = Eigen::MatrixXd::Zero(nm, ni);
    for (int k = 0; k < nm; ++k) {
      m.frequencies(k) = from_hz(f[k].get<double>());
      if (static_cast<int>(eta[k].size()) != ni) throw ConfigError("modes: ragged lamb_dicke");
      for (int i = 0; i < ni; ++i) m.lamb_dicke(k, i) = eta[k][i].get<double>();
    }
    if (j.contains("eigenvectors"))
      for (int k = 0; k < nm; ++k)
        for (int i = 0; i < ni; ++i) m.eigenvectors(k, i) = j["eigenvectors"].at(k).at(i).get<double>();
    m.com_index = j.value("com_index", 0);
    if (m.com_index < 0 || m.com_index >= nm) throw ConfigError("modes: com_index out of range");
    m.scaling.resize(nm);
    m.thermal_occupation = Eigen::VectorXd::Zero(nm);
    for (int k = 0; k < nm; ++k) {
      m.scaling(k) = j.contains("scaling") ? j["scaling"].at(k).get<double>()
                                           : m.frequencies(k) / m.frequencies(m.com_index);
      if (j.contains("thermal_occupation"))
        m.thermal_occupation(k) = j["thermal_occupation"].at(k).get<double>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed modes: ") + e.what());
  }
  return m;
}

json read_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse " + path + ": " + e.what());
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
  if (!out) throw ConfigError("write failed: " + path);
}

void require_known_keys(const json& j, std::initializer_list<const char*> allowed,
                        const std::string& where) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || item.key() == a;
    if (!ok) throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

}  // namespace msff::io
