#pragma once

// Run configuration of the command-line tool. The schema is the default document:
// a user file and --set overrides may only touch keys that exist there, with the
// same JSON type.

#include <optional>
#include <string>
#include <vector>

#include "msff/io.hpp"
#include "msff/lindblad.hpp"
#include "msff/optimizer.hpp"
#include "msff/simulator.hpp"
#include "msff/spectroscopy.hpp"

namespace msff::cli {

using io::json;

json default_config();

/// Merges `user` into the defaults; unknown keys or type changes throw ConfigError.
json merge_config(json base, const json& user, const std::string& where = "");

/// "a.b.c=value"; value is parsed as JSON, falling back to a plain string.
void apply_override(json& config, const std::string& assignment);

struct RunConfig {
  json document;  // fully resolved
  std::string output_dir;
  std::uint64_t seed = 1;
  TrapConfig trap;
  IonPair pair;
  std::string pulse_file;
  OptimizerConfig optimizer;  // psd filled from the noise section
  PsdSpec noise;
  NoiseChannel channel = NoiseChannel::mode_frequency;
  PredictOptions predict;
  SimulationConfig simulation;
  double static_offset = 0.0;  // rad/s, common δ for `simulate`
  double rabi_offset = 0.0;
  // sweeps
  std::vector<double> static_deltas;        // rad/s
  std::vector<double> monotone_frequencies;  // Hz
  double monotone_amplitude = 0.0;           // rad/s
  std::vector<double> ff_frequencies;        // Hz
  std::vector<double> lengths;               // s
  std::vector<double> rabi_caps;             // rad/s
  // budget
  DissipationRates rates;  // heating filled per mode at run time
  double heating_com = 0.0, heating_other = 0.0;
  BudgetOptions budget;
  std::string budget_label;
  // spectroscopy
  std::string measurements_file;
  InversionOptions inversion;
  int synthetic_pulses = 21;
  std::vector<double> synthetic_peaks;  // Hz
  double synthetic_contrast_std = 0.0;
};

RunConfig resolve(const json& document);

NoiseChannel parse_channel(const std::string& name);
const char* channel_name(NoiseChannel c);

}  // namespace msff::cli
