#pragma once

#include <Eigen/Dense>
#include <vector>

#include "msff/common.hpp"

namespace msff {

enum class ModeBranch { axial, transverse };

struct TrapConfig {
  int ion_count = 5;
  double ion_mass = kYb171Mass;                  // kg
  double axial_frequency = hz_to_rad(0.38e6);    // rad/s
  double transverse_frequency = hz_to_rad(2.336e6);
  ModeBranch branch = ModeBranch::transverse;
  /// |Δk| of the Raman pair along the mode direction, rad/m.
  /// Default: counter-propagating 355 nm beams.
  double wavevector_difference = 2.0 * kTwoPi / 355e-9;
  /// Optional mean occupations, one per mode in ascending-frequency order.
  std::vector<double> thermal_occupation;

  void validate() const;
};

/// Normal modes of the chain, ascending in frequency.
struct ModeStructure {
  ModeBranch branch = ModeBranch::transverse;
  Eigen::VectorXd frequencies;    // rad/s
  Eigen::MatrixXd eigenvectors;   // modes x ions, rows orthonormal
  Eigen::MatrixXd lamb_dicke;     // modes x ions
  Eigen::VectorXd scaling;        // r_k = omega_k / omega_CM
  int com_index = 0;
  Eigen::VectorXd thermal_occupation;  // zero unless configured

  int mode_count() const { return static_cast<int>(frequencies.size()); }
  int ion_count() const { return static_cast<int>(eigenvectors.cols()); }
  double com_frequency() const { return frequencies(com_index); }

  /// Same structure with omega_k -> omega_k + offsets[k] (eta, r unchanged).
  ModeStructure shifted(const Eigen::VectorXd& offsets) const;
  /// Same structure with every r_k set to one.
  ModeStructure with_unit_scaling() const;
};

/// Coulomb length scale ℓ = (e² / (4π ε0 m ω_z²))^(1/3), meters.
double coulomb_length(const TrapConfig& cfg);

/// Equilibrium positions in meters, ascending; Newton iteration in units of ℓ.
std::vector<double> equilibrium_positions(const TrapConfig& cfg);

/// Hessian diagonalization for the configured branch; fills η when Δk > 0.
ModeStructure normal_modes(const TrapConfig& cfg);

/// η_kj = b_kj Δk sqrt(ħ / (2 m ω_k)).
ModeStructure lamb_dicke(ModeStructure modes, const TrapConfig& cfg);

}  // namespace msff
