#pragma once

#include <Eigen/Dense>

#include <stdexcept>

namespace topopt {

/// Elastic base material (dense solid) and void-interpolation parameters.
struct MaterialParams {
  double youngs_modulus = 10e9;  // E_A [Pa]
  double poisson_ratio = 0.25;   // nu_A
  double void_stiffness = 1e-3;  // delta, residual stiffness fraction of the void
  double interp_exponent = 10.0; // p

  void validate() const;
};

/// Phase-field regularization parameters. All SI.
struct PhaseParams {
  double gamma_phi = 0.01; // interface thickness penalization [m]
  double kappa_phi = 1e6;  // perimeter stiffness [N/m]
  double kappa_b = 1e12;   // bound penalty stiffness [Pa]
  double T_phi = 1.0;      // characteristic time [s]
  double tau_phi = 1e8;    // discrete viscosity [Pa s]

  void validate() const;
};

/// Either a hard volume constraint (fraction vbar) or a volume penalty kappa_v.
struct VolumeControl {
  enum class Kind { constraint, minimization };
  Kind kind = Kind::constraint;
  double vbar = 0.4;     // target volume fraction, constraint variant
  double kappa_v = 1e8;  // material cost per unit volume [Pa], minimization variant

  static VolumeControl constraint(double vbar_);
  static VolumeControl minimization(double kappa_v_);
};

/// Value and first two derivatives of a scalar law.
struct ScalarLaw {
  double value = 0;
  double d1 = 0;
  double d2 = 0;
};

/// Smooth monotone stiffness interpolation f(phi) = delta + (1-delta) exp(p phi^p)/exp(p).
/// Total on the real line; f > delta everywhere.
ScalarLaw stiffness_scale(double phi, double delta, double p);

/// State-of-the-art comparison laws (scalar counterparts), used for the law-comparison CSV.
double stiffness_scale_variant1(double phi, double delta, double p); // phi^p + delta(1-phi)^p
double stiffness_scale_variant2(double phi, double delta);           // [phi + (1-phi)/delta]^-1

/// Double-well potential psi0 = [phi(phi-1)]^2 with derivatives.
ScalarLaw double_well(double phi);

/// C1 bound penalty: quadratic outside [0,1], zero inside.
ScalarLaw bound_penalty(double phi);

/// Isotropic elastic tensor in Voigt form (engineering shear strain convention).
/// dimension 2 -> 3x3 plane strain, dimension 3 -> 6x6.
/// Throws std::invalid_argument for nu = 0.5 (singular).
Eigen::MatrixXd elastic_tensor(const MaterialParams& params, int dimension);

} // namespace topopt
