#include "msff/pulse.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace msff {

void FMPulse::validate() const {
  if (!(duration > 0.0) || !std::isfinite(duration)) throw ConfigError("pulse duration must be positive");
  if (!(rabi >= 0.0) || !std::isfinite(rabi)) throw ConfigError("Rabi frequency must be non-negative");
  if (mu.empty()) throw ConfigError("pulse needs at least one segment");
  for (double m : mu)
    if (!std::isfinite(m)) throw ConfigError("segment frequencies must be finite");
  if (spin_phase_sign != 1 && spin_phase_sign != -1)
    throw ConfigError("spin_phase_sign must be +1 or -1");
  if (symmetric) {
    const std::size_t s = mu.size();
    for (std::size_t i = 0; i < s / 2; ++i)
      if (mu[i] != mu[s - 1 - i]) {
        std::ostringstream os;
        os << "symmetric pulse has mu[" << i << "] != mu[" << s - 1 - i << "]";
        throw ConfigError(os.str());
      }
  }
}

FMPulse build_symmetric_pulse(std::span<const double> free, double duration, double rabi, bool odd) {
  if (free.empty()) throw ConfigError("symmetric pulse needs at least one free value");
  if (!(duration > 0.0)) throw ConfigError("pulse duration must be positive");
  FMPulse p;
  p.duration = duration;
  p.rabi = rabi;
  p.symmetric = true;
  p.mu.assign(free.begin(), free.end());
  for (std::size_t i = free.size() - (odd ? 1 : 0); i-- > 0;) p.mu.push_back(free[i]);
  p.validate();
  return p;
}

std::vector<double> free_values(const FMPulse& pulse) {
  return {pulse.mu.begin(), pulse.mu.begin() + static_cast<std::ptrdiff_t>(free_count(pulse.mu.size()))};
}

LinearPhase mode_phase(const FMPulse& pulse, double omega) {
  std::vector<double> slopes(pulse.mu.size());
  for (std::size_t i = 0; i < slopes.size(); ++i) slopes[i] = pulse.mu[i] - omega;
  return LinearPhase::from_slopes(pulse.width(), std::move(slopes), 0.0);
}

std::vector<LinearPhase> phase_trace(const FMPulse& pulse, std::span<const double> freqs) {
  std::vector<LinearPhase> out;
  out.reserve(freqs.size());
  for (double w : freqs) out.push_back(mode_phase(pulse, w));
  return out;
}

std::vector<double> sample_mu(const FMPulse& pulse, std::span<const double> times) {
  std::vector<double> out;
  out.reserve(times.size());
  const std::size_t s = pulse.segment_count();
  for (double t : times) {
    if (!(t >= 0.0 && t <= pulse.duration)) throw ConfigError("sample time outside [0, tau]");
    auto i = static_cast<std::size_t>(std::floor(t / pulse.width()));
    // Guard against rounding placing an exact boundary in the previous segment.
    while (i + 1 < s && pulse.boundary(i + 1) <= t) ++i;
    while (i > 0 && pulse.boundary(i) > t) --i;
    out.push_back(pulse.mu[std::min(i, s - 1)]);
  }
  return out;
}

double phase_at(const LinearPhase& phase, double t) {
  const std::size_t s = phase.size();
  auto i = static_cast<std::size_t>(std::max(0.0, std::floor(t / phase.width)));
  i = std::min(i, s - 1);
  return phase.start[i] + phase.slope[i] * (t - phase.width * static_cast<double>(i));
}

}  // namespace msff
