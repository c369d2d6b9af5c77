#pragma once

#include "topopt/material.hpp"

#include <Eigen/Dense>

#include <vector>

namespace topopt {

enum class ElementKind { Q1, H1 };

inline ElementKind element_kind_for_dim(int dimension) {
  return dimension == 2 ? ElementKind::Q1 : ElementKind::H1;
}

struct ElementSizes {
  int dim;      // spatial dimension
  int n_nodes;  // nodes per element
  int n_voigt;  // stress/strain vector length
  int n_stress; // assumed stress coefficients
  int n_strain; // assumed strain coefficients
  int n_qp;     // quadrature points
};

ElementSizes element_sizes(ElementKind kind);

/// Full Gauss rule: 2 points per direction. Weights sum to the parent-cell measure.
struct QuadratureRule {
  std::vector<Eigen::Vector3d> points;
  std::vector<double> weights;
};

const QuadratureRule& gauss_rule(ElementKind kind);

/// Bilinear (Q1) / trilinear (H1) shape functions and parent-space gradients.
/// N: n_nodes, dN: n_nodes x dim.
void shape_functions(ElementKind kind, const Eigen::Vector3d& xi, Eigen::VectorXd& N,
                     Eigen::MatrixXd& dN);

/// Assumed stress interpolation matrix, n_voigt x n_stress. Row order
/// (xx, yy, xy) in 2D, (xx, yy, zz, yz, xz, xy) in 3D.
Eigen::MatrixXd stress_basis(ElementKind kind, const Eigen::Vector3d& xi);

/// Assumed strain interpolation matrix, n_voigt x n_strain, doubled-shear rows.
Eigen::MatrixXd strain_basis(ElementKind kind, const Eigen::Vector3d& xi);

/// Normalized center-Jacobian transformation T = J0 / sqrt(det J0).
struct TransformT {
  Eigen::MatrixXd J0;       // dim x dim
  double det_J0 = 0;
  Eigen::MatrixXd T;        // normalized
  Eigen::MatrixXd M_sigma;  // Voigt congruence map of T: vec(T S T^t) = M vec(S)
  Eigen::MatrixXd M_sigma_inv_T; // M^{-T}, used for strain push-forward
};

/// Throws std::runtime_error when det J0 <= 0 (degenerate element).
TransformT transform_tensor(const Eigen::MatrixXd& J0);

/// Voigt congruence transform of a dim x dim matrix A in stress convention:
/// vec_sigma(A S A^T) = M vec_sigma(S).
Eigen::MatrixXd voigt_congruence(const Eigen::MatrixXd& A);

/// Stress push-forward sigma(X) = T sigma_xi T^T, Voigt form.
Eigen::VectorXd stress_to_spatial(const Eigen::VectorXd& sig_xi, const TransformT& t);

/// Strain push-forward eps(X) = (J0/J) T^{-T} eps_xi T^{-1}, Voigt form with
/// doubled shear. Throws std::runtime_error for J <= 0.
Eigen::VectorXd strain_to_spatial(const Eigen::VectorXd& eps_xi, const TransformT& t, double det_J,
                                  double det_J0);

/// Per-quadrature-point geometric data.
struct QuadPointData {
  Eigen::VectorXd N;       // shape values
  Eigen::MatrixXd dNdX;    // spatial gradients, n_nodes x dim
  double weight = 0;       // gauss weight * detJ * thickness
  Eigen::MatrixXd B;       // symmetric-gradient operator, n_voigt x (dim*n_nodes)
  Eigen::MatrixXd Ns;      // stress basis at the point
  Eigen::MatrixXd Ne;      // strain basis at the point
  Eigen::MatrixXd CNe;     // weight * Ne^T Chat Ne (elastic core of H)
};

/// Precomputed element geometry and operators for one element.
///
/// The assumed stress is pushed forward with the normalized center Jacobian,
/// sigma = T sigma_xi T^T. The assumed strain space used in the element kernel
/// is the plain covariant pullback eps = T^{-T} eps_xi T^{-1}; the extra
/// det-Jacobian rescaling applied by strain_to_spatial would break constant
/// stress recovery on non-affine elements. The two coincide on regular grids.
class ElementGeometry {
public:
  ElementGeometry(ElementKind kind, const Eigen::MatrixXd& coords, const Eigen::MatrixXd& C_A,
                  double thickness);

  ElementKind kind;
  ElementSizes sizes;
  TransformT transform;
  Eigen::MatrixXd Chat;          // T-congruent elastic tensor
  std::vector<QuadPointData> qp;
  Eigen::MatrixXd G;             // stress-strain pairing, n_stress x n_strain
  Eigen::MatrixXd Q;             // stress-displacement coupling, n_stress x (dim*n_nodes)
  Eigen::VectorXd nodal_weight;  // int N_i dOmega
  double volume = 0;

  /// Spatial Voigt stress at quadrature point q from assumed coefficients.
  Eigen::VectorXd spatial_stress(int q, const Eigen::VectorXd& sig_hat) const;
  /// Spatial Voigt strain (kernel convention) at quadrature point q.
  Eigen::VectorXd spatial_strain(int q, const Eigen::VectorXd& eps_hat) const;
};

enum class KernelMode {
  sand,     // full monolithic residual and tangent over (u, phi)
  nand_u,   // equilibrium rows only, stiffness frozen at phi_eval
  nand_phi, // phase rows only, elastic driving force frozen (per-qp data)
};

struct ElementInputs {
  Eigen::VectorXd u;      // dim * n_nodes
  Eigen::VectorXd phi;    // n_nodes
  Eigen::VectorXd phi_n;  // n_nodes
  double dt = 1.0;
  KernelMode mode = KernelMode::sand;
  Eigen::VectorXd phi_eval;        // nand_u: phase used in the stiffness (phi at t_n)
  Eigen::VectorXd frozen_eel_qp;   // nand_phi: e^el_,phi(phi_n, eps_n) at quadrature points
  Eigen::VectorXd u_frozen;        // nand_phi: displacement entering the body-force coupling
};

struct ElementParams {
  const MaterialParams* material = nullptr;
  const PhaseParams* phase = nullptr;
  const VolumeControl* volume = nullptr;
  Eigen::Vector3d body_force = Eigen::Vector3d::Zero(); // per unit volume [N/m^3]
};

/// Condensed element output. Residual rows follow the gradient-of-the-functional
/// sign convention; the volume-constraint multiplier coupling (lambda * int N dOmega)
/// is added at the global level.
struct ElementResult {
  Eigen::VectorXd r_u;
  Eigen::VectorXd r_phi;
  Eigen::MatrixXd K; // condensed symmetric tangent over [u; phi]
  Eigen::VectorXd sig_hat;
  Eigen::VectorXd eps_hat;
  double int_phi = 0; // int phi dOmega over the element
};

/// Evaluates the statically condensed residual and tangent. The local assumed
/// stress/strain coefficients are eliminated exactly: they solve the local
/// stationarity system for the given (u, phi), and the returned tangent is the
/// Schur complement of the local block.
/// Throws std::runtime_error naming the failure if the local block is singular.
ElementResult element_residual_tangent(const ElementGeometry& geom, const ElementInputs& in,
                                       const ElementParams& params, bool want_tangent = true);

} // namespace topopt
