#include "msff/mode_solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace msff {

namespace {

const char* branch_name(ModeBranch b) { return b == ModeBranch::axial ? "axial" : "transverse"; }

// Dimensionless potential gradient: u_i - Σ_{j<i} 1/(u_i-u_j)^2 + Σ_{j>i} 1/(u_i-u_j)^2.
Eigen::VectorXd gradient(const Eigen::VectorXd& u) {
  const int n = static_cast<int>(u.size());
  Eigen::VectorXd g = u;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double d = u(i) - u(j);
      g(i) -= std::copysign(1.0 / (d * d), d);
    }
  return g;
}

// C_ii = Σ_p 1/|u_i-u_p|^3, C_ij = -1/|u_i-u_j|^3. Axial Hessian is I + 2C.
Eigen::MatrixXd coupling(const Eigen::VectorXd& u) {
  const int n = static_cast<int>(u.size());
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double k = 1.0 / std::pow(std::abs(u(i) - u(j)), 3);
      c(i, j) = -k;
      c(i, i) += k;
    }
  return c;
}

Eigen::VectorXd dimensionless_equilibrium(int n) {
  Eigen::VectorXd u(n);
  // Uniform seed with spacing close to the true central spacing.
  const double spacing = 2.0 * std::pow(static_cast<double>(n), -0.56);
  for (int i = 0; i < n; ++i) u(i) = spacing * (i - 0.5 * (n - 1));
  double res = gradient(u).norm();
  for (int it = 0; it < 200 && res > 1e-14; ++it) {
    const Eigen::MatrixXd jac = Eigen::MatrixXd::Identity(n, n) + 2.0 * coupling(u);
    const Eigen::VectorXd step = jac.ldlt().solve(gradient(u));
    double lam = 1.0;
    for (;;) {
      Eigen::VectorXd trial = u - lam * step;
      bool ordered = true;
      for (int i = 1; i < n; ++i) ordered = ordered && trial(i) > trial(i - 1);
      const double r = ordered ? gradient(trial).norm() : INFINITY;
      if (r < res || lam < 1e-6) {
        u = trial;
        res = r;
        break;
      }
      lam *= 0.5;
    }
  }
  if (!(res < 1e-12)) {
    std::ostringstream os;
    os << "equilibrium search for " << n << " ions did not converge";
    throw ConvergenceError(os.str(), res);
  }
  // Remove the numerical asymmetry left by the iteration.
  for (int i = 0; i < n / 2; ++i) {
    const double m = 0.5 * (u(n - 1 - i) - u(i));
    u(i) = -m;
    u(n - 1 - i) = m;
  }
  if (n % 2 == 1) u(n / 2) = 0.0;
  return u;
}

}  // namespace

void TrapConfig::validate() const {
  if (ion_count < 2) throw ConfigError("ion_count must be at least 2");
  if (!(ion_mass > 0.0)) throw ConfigError("ion_mass must be positive");
  if (!(axial_frequency > 0.0)) throw ConfigError("axial_frequency must be positive");
  if (!(transverse_frequency > 0.0)) throw ConfigError("transverse_frequency must be positive");
  if (branch == ModeBranch::transverse && !(transverse_frequency > axial_frequency))
    throw ConfigError("transverse branch requires transverse_frequency > axial_frequency");
  if (wavevector_difference < 0.0) throw ConfigError("wavevector_difference must be non-negative");
  if (!thermal_occupation.empty() &&
      thermal_occupation.size() != static_cast<std::size_t>(ion_count))
    throw ConfigError("thermal_occupation needs one entry per mode");
  for (double n : thermal_occupation)
    if (n < 0.0) throw ConfigError("thermal_occupation entries must be non-negative");
}

double coulomb_length(const TrapConfig& cfg) {
  const double k = kElementaryCharge * kElementaryCharge / (4.0 * kPi * kVacuumPermittivity);
  return std::cbrt(k / (cfg.ion_mass * cfg.axial_frequency * cfg.axial_frequency));
}

std::vector<double> equilibrium_positions(const TrapConfig& cfg) {
  cfg.validate();
  const Eigen::VectorXd u = dimensionless_equilibrium(cfg.ion_count);
  const double ell = coulomb_length(cfg);
  std::vector<double> out(u.size());
  for (int i = 0; i < u.size(); ++i) out[i] = u(i) * ell;
  return out;
}

ModeStructure normal_modes(const TrapConfig& cfg) {
  cfg.validate();
  const int n = cfg.ion_count;
  const Eigen::VectorXd u = dimensionless_equilibrium(n);
  const Eigen::MatrixXd c = coupling(u);
  const double wz2 = cfg.axial_frequency * cfg.axial_frequency;
  Eigen::MatrixXd k2;  // ω² matrix in rad²/s²
  if (cfg.branch == ModeBranch::axial) {
    k2 = wz2 * (Eigen::MatrixXd::Identity(n, n) + 2.0 * c);
  } else {
    k2 = cfg.transverse_frequency * cfg.transverse_frequency * Eigen::MatrixXd::Identity(n, n) -
         wz2 * c;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k2);
  if (es.info() != Eigen::Success) throw NumericalError("mode Hessian diagonalization failed");
  const Eigen::VectorXd ev = es.eigenvalues();  // ascending
  if (ev.minCoeff() <= 0.0) {
    std::ostringstream os;
    os << "unstable " << branch_name(cfg.branch) << " branch: Hessian eigenvalue " << ev.minCoeff();
    throw NumericalError(os.str());
  }

  ModeStructure ms;
  ms.branch = cfg.branch;
  ms.frequencies = ev.cwiseSqrt();
  ms.eigenvectors = es.eigenvectors().transpose();
  for (int k = 0; k < n; ++k) {
    // Deterministic sign: first component above tolerance is positive.
    for (int j = 0; j < n; ++j) {
      const double v = ms.eigenvectors(k, j);
      if (std::abs(v) > 1e-8) {
        if (v < 0.0) ms.eigenvectors.row(k) *= -1.0;
        break;
      }
    }
  }
  // The COM mode is the highest transverse mode and the lowest axial one.
  ms.com_index = cfg.branch == ModeBranch::transverse ? n - 1 : 0;
  ms.scaling = ms.frequencies / ms.frequencies(ms.com_index);
  ms.thermal_occupation = Eigen::VectorXd::Zero(n);
  for (std::size_t k = 0; k < cfg.thermal_occupation.size(); ++k)
    ms.thermal_occupation(static_cast<int>(k)) = cfg.thermal_occupation[k];
  ms.lamb_dicke = Eigen::MatrixXd::Zero(n, n);
  if (cfg.wavevector_difference > 0.0) ms = lamb_dicke(std::move(ms), cfg);
  return ms;
}

ModeStructure lamb_dicke(ModeStructure ms, const TrapConfig& cfg) {
  if (!(cfg.wavevector_difference > 0.0)) throw ConfigError("lamb_dicke requires Δk > 0");
  ms.lamb_dicke.resize(ms.eigenvectors.rows(), ms.eigenvectors.cols());
  for (int k = 0; k < ms.eigenvectors.rows(); ++k) {
    const double scale =
        cfg.wavevector_difference * std::sqrt(kHbar / (2.0 * cfg.ion_mass * ms.frequencies(k)));
    ms.lamb_dicke.row(k) = ms.eigenvectors.row(k) * scale;
  }
  return ms;
}

ModeStructure ModeStructure::shifted(const Eigen::VectorXd& offsets) const {
  if (offsets.size() != frequencies.size())
    throw ConfigError("offset vector length must equal the mode count");
  ModeStructure out = *this;
  out.frequencies += offsets;
  return out;
}

ModeStructure ModeStructure::with_unit_scaling() const {
  ModeStructure out = *this;
  out.scaling.setOnes();
  return out;
}

}  // namespace msff
