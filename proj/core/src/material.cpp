#include "topopt/material.hpp"

#include <cmath>

namespace topopt {

void MaterialParams::validate() const {
  if (youngs_modulus <= 0) throw std::invalid_argument("material: E_A must be positive");
  if (poisson_ratio <= -1.0 || poisson_ratio >= 0.5)
    throw std::invalid_argument("material: nu_A must lie in (-1, 0.5)");
  if (void_stiffness <= 0 || void_stiffness >= 1)
    throw std::invalid_argument("material: delta must lie in (0, 1)");
  if (interp_exponent <= 0) throw std::invalid_argument("material: p must be positive");
}

void PhaseParams::validate() const {
  if (gamma_phi <= 0 || kappa_phi <= 0 || kappa_b <= 0 || T_phi <= 0 || tau_phi <= 0)
    throw std::invalid_argument("phase parameters must be strictly positive");
}

VolumeControl VolumeControl::constraint(double vbar_) {
  if (vbar_ < 0 || vbar_ > 1) throw std::invalid_argument("vbar must lie in [0, 1]");
  VolumeControl v;
  v.kind = Kind::constraint;
  v.vbar = vbar_;
  return v;
}

VolumeControl VolumeControl::minimization(double kappa_v_) {
  if (kappa_v_ < 0) throw std::invalid_argument("kappa_v must be non-negative");
  VolumeControl v;
  v.kind = Kind::minimization;
  v.kappa_v = kappa_v_;
  return v;
}

ScalarLaw stiffness_scale(double phi, double delta, double p) {
  // f = delta + (1-delta) exp(p(phi^p - 1)); derivatives via chain rule.
  // phi^p is well defined on the real line for the even integer exponents used
  // in practice; std::pow handles integral p for negative phi.
  const double pp = std::pow(phi, p);
  const double e = std::exp(p * (pp - 1.0));
  const double c = 1.0 - delta;
  ScalarLaw law;
  law.value = delta + c * e;
  law.d1 = c * e * p * p * std::pow(phi, p - 1.0);
  law.d2 = c * e * p * p *
           ((p - 1.0) * std::pow(phi, p - 2.0) + p * p * std::pow(phi, 2.0 * p - 2.0));
  return law;
}

double stiffness_scale_variant1(double phi, double delta, double p) {
  return std::pow(phi, p) + delta * std::pow(1.0 - phi, p);
}

double stiffness_scale_variant2(double phi, double delta) {
  return 1.0 / (phi + (1.0 - phi) / delta);
}

ScalarLaw double_well(double phi) {
  ScalarLaw law;
  const double q = phi * (phi - 1.0);
  law.value = q * q;
  law.d1 = 2.0 * q * (2.0 * phi - 1.0);
  law.d2 = 12.0 * phi * phi - 12.0 * phi + 2.0;
  return law;
}

ScalarLaw bound_penalty(double phi) {
  ScalarLaw law;
  if (phi > 1.0) {
    law.value = 0.5 * (phi - 1.0) * (phi - 1.0);
    law.d1 = phi - 1.0;
    law.d2 = 1.0;
  } else if (phi < 0.0) {
    law.value = 0.5 * phi * phi;
    law.d1 = phi;
    law.d2 = 1.0;
  }
  return law;
}

Eigen::MatrixXd elastic_tensor(const MaterialParams& params, int dimension) {
  params.validate();
  const double E = params.youngs_modulus;
  const double nu = params.poisson_ratio;
  const double lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
  const double mu = E / (2.0 * (1.0 + nu));
  if (dimension == 2) {
    // plane strain
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(3, 3);
    C(0, 0) = C(1, 1) = lam + 2.0 * mu;
    C(0, 1) = C(1, 0) = lam;
    C(2, 2) = mu;
    return C;
  }
  if (dimension == 3) {
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(6, 6);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) C(i, j) = lam;
      C(i, i) = lam + 2.0 * mu;
      C(3 + i, 3 + i) = mu;
    }
    return C;
  }
  throw std::invalid_argument("elastic_tensor: dimension must be 2 or 3");
}

} // namespace topopt
