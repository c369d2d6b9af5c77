#include "topopt/element.hpp"

#include <cmath>
#include <stdexcept>

namespace topopt {

ElementSizes element_sizes(ElementKind kind) {
  if (kind == ElementKind::Q1) return {2, 4, 3, 5, 7, 4};
  return {3, 8, 6, 18, 21, 8};
}

const QuadratureRule& gauss_rule(ElementKind kind) {
  static const QuadratureRule q1 = [] {
    QuadratureRule r;
    const double a = 1.0 / std::sqrt(3.0);
    for (double y : {-a, a})
      for (double x : {-a, a}) {
        r.points.emplace_back(x, y, 0.0);
        r.weights.push_back(1.0);
      }
    return r;
  }();
  static const QuadratureRule h1 = [] {
    QuadratureRule r;
    const double a = 1.0 / std::sqrt(3.0);
    for (double z : {-a, a})
      for (double y : {-a, a})
        for (double x : {-a, a}) {
          r.points.emplace_back(x, y, z);
          r.weights.push_back(1.0);
        }
    return r;
  }();
  return kind == ElementKind::Q1 ? q1 : h1;
}

namespace {
constexpr double kQ1Corners[4][2] = {{-1, -1}, {1, -1}, {1, 1}, {-1, 1}};
constexpr double kH1Corners[8][3] = {{-1, -1, -1}, {1, -1, -1}, {1, 1, -1}, {-1, 1, -1},
                                     {-1, -1, 1},  {1, -1, 1},  {1, 1, 1},  {-1, 1, 1}};
} // namespace

void shape_functions(ElementKind kind, const Eigen::Vector3d& xi, Eigen::VectorXd& N,
                     Eigen::MatrixXd& dN) {
  if (kind == ElementKind::Q1) {
    N.resize(4);
    dN.resize(4, 2);
    for (int a = 0; a < 4; ++a) {
      const double sx = kQ1Corners[a][0], sy = kQ1Corners[a][1];
      N[a] = 0.25 * (1 + sx * xi[0]) * (1 + sy * xi[1]);
      dN(a, 0) = 0.25 * sx * (1 + sy * xi[1]);
      dN(a, 1) = 0.25 * sy * (1 + sx * xi[0]);
    }
  } else {
    N.resize(8);
    dN.resize(8, 3);
    for (int a = 0; a < 8; ++a) {
      const double sx = kH1Corners[a][0], sy = kH1Corners[a][1], sz = kH1Corners[a][2];
      const double fx = 1 + sx * xi[0], fy = 1 + sy * xi[1], fz = 1 + sz * xi[2];
      N[a] = 0.125 * fx * fy * fz;
      dN(a, 0) = 0.125 * sx * fy * fz;
      dN(a, 1) = 0.125 * sy * fx * fz;
      dN(a, 2) = 0.125 * sz * fx * fy;
    }
  }
}

Eigen::MatrixXd stress_basis(ElementKind kind, const Eigen::Vector3d& xi) {
  const double x = xi[0], y = xi[1], z = xi[2];
  if (kind == ElementKind::Q1) {
    Eigen::MatrixXd Ns = Eigen::MatrixXd::Zero(3, 5);
    Ns(0, 0) = 1; Ns(0, 1) = y;
    Ns(1, 2) = 1; Ns(1, 3) = x;
    Ns(2, 4) = 1;
    return Ns;
  }
  Eigen::MatrixXd Ns = Eigen::MatrixXd::Zero(6, 18);
  Ns(0, 0) = 1; Ns(0, 1) = y; Ns(0, 2) = z; Ns(0, 3) = y * z;
  Ns(1, 4) = 1; Ns(1, 5) = x; Ns(1, 6) = z; Ns(1, 7) = x * z;
  Ns(2, 8) = 1; Ns(2, 9) = x; Ns(2, 10) = y; Ns(2, 11) = x * y;
  Ns(3, 12) = 1; Ns(3, 13) = x;
  Ns(4, 14) = 1; Ns(4, 15) = y;
  Ns(5, 16) = 1; Ns(5, 17) = z;
  return Ns;
}

Eigen::MatrixXd strain_basis(ElementKind kind, const Eigen::Vector3d& xi) {
  const double x = xi[0], y = xi[1], z = xi[2];
  if (kind == ElementKind::Q1) {
    Eigen::MatrixXd Ne = Eigen::MatrixXd::Zero(3, 7);
    Ne(0, 0) = 1; Ne(0, 1) = x; Ne(0, 2) = y;
    Ne(1, 3) = 1; Ne(1, 4) = x; Ne(1, 5) = y;
    Ne(2, 6) = 1;
    return Ne;
  }
  Eigen::MatrixXd Ne = Eigen::MatrixXd::Zero(6, 21);
  Ne(0, 0) = 1; Ne(0, 1) = x; Ne(0, 2) = y; Ne(0, 3) = z; Ne(0, 4) = y * z;
  Ne(1, 5) = 1; Ne(1, 6) = x; Ne(1, 7) = y; Ne(1, 8) = z; Ne(1, 9) = x * z;
  Ne(2, 10) = 1; Ne(2, 11) = x; Ne(2, 12) = y; Ne(2, 13) = z; Ne(2, 14) = x * y;
  Ne(3, 15) = 1; Ne(3, 16) = x;
  Ne(4, 17) = 1; Ne(4, 18) = y;
  Ne(5, 19) = 1; Ne(5, 20) = z;
  return Ne;
}

Eigen::MatrixXd voigt_congruence(const Eigen::MatrixXd& A) {
  const int dim = static_cast<int>(A.rows());
  static const int pairs2[3][2] = {{0, 0}, {1, 1}, {0, 1}};
  static const int pairs3[6][2] = {{0, 0}, {1, 1}, {2, 2}, {1, 2}, {0, 2}, {0, 1}};
  const int nv = dim == 2 ? 3 : 6;
  const auto pair = [&](int k, int c) { return dim == 2 ? pairs2[k][c] : pairs3[k][c]; };
  Eigen::MatrixXd M(nv, nv);
  for (int r = 0; r < nv; ++r) {
    const int i = pair(r, 0), j = pair(r, 1);
    for (int c = 0; c < nv; ++c) {
      const int k = pair(c, 0), l = pair(c, 1);
      M(r, c) = (k == l) ? A(i, k) * A(j, k) : A(i, k) * A(j, l) + A(i, l) * A(j, k);
    }
  }
  return M;
}

TransformT transform_tensor(const Eigen::MatrixXd& J0) {
  TransformT t;
  t.J0 = J0;
  t.det_J0 = J0.determinant();
  if (!(t.det_J0 > 0)) throw std::runtime_error("transform_tensor: degenerate element, det J0 <= 0");
  t.T = J0 / std::sqrt(t.det_J0);
  t.M_sigma = voigt_congruence(t.T);
  t.M_sigma_inv_T = t.M_sigma.inverse().transpose();
  return t;
}

Eigen::VectorXd stress_to_spatial(const Eigen::VectorXd& sig_xi, const TransformT& t) {
  return t.M_sigma * sig_xi;
}

Eigen::VectorXd strain_to_spatial(const Eigen::VectorXd& eps_xi, const TransformT& t, double det_J,
                                  double det_J0) {
  if (!(det_J > 0)) throw std::runtime_error("strain_to_spatial: degenerate mapping, det J <= 0");
  return (det_J0 / det_J) * (t.M_sigma_inv_T * eps_xi);
}

ElementGeometry::ElementGeometry(ElementKind kind_, const Eigen::MatrixXd& coords,
                                 const Eigen::MatrixXd& C_A, double thickness)
    : kind(kind_), sizes(element_sizes(kind_)) {
  const int dim = sizes.dim;
  Eigen::VectorXd N;
  Eigen::MatrixXd dN;
  shape_functions(kind, Eigen::Vector3d::Zero(), N, dN);
  transform = transform_tensor(coords.transpose() * dN); // J0[i][j] = dX_i/dxi_j
  // Elastic tensor congruent to the parent frame: M^{-1} C_A M^{-T}.
  const Eigen::MatrixXd Minv = transform.M_sigma.inverse();
  Chat = Minv * C_A * Minv.transpose();
  const auto& rule = gauss_rule(kind);
  const double th = dim == 2 ? thickness : 1.0;

  G = Eigen::MatrixXd::Zero(sizes.n_stress, sizes.n_strain);
  Q = Eigen::MatrixXd::Zero(sizes.n_stress, dim * sizes.n_nodes);
  nodal_weight = Eigen::VectorXd::Zero(sizes.n_nodes);
  qp.resize(sizes.n_qp);
  for (int q = 0; q < sizes.n_qp; ++q) {
    QuadPointData& d = qp[q];
    shape_functions(kind, rule.points[q], d.N, dN);
    const Eigen::MatrixXd J = coords.transpose() * dN;
    const double detJ = J.determinant();
    if (!(detJ > 0)) throw std::runtime_error("element geometry: det J <= 0 at quadrature point");
    d.dNdX = dN * J.inverse();
    d.weight = rule.weights[q] * detJ * th;
    d.Ns = stress_basis(kind, rule.points[q]);
    d.Ne = strain_basis(kind, rule.points[q]);
    d.B = Eigen::MatrixXd::Zero(sizes.n_voigt, dim * sizes.n_nodes);
    for (int a = 0; a < sizes.n_nodes; ++a) {
      if (dim == 2) {
        d.B(0, 2 * a) = d.dNdX(a, 0);
        d.B(1, 2 * a + 1) = d.dNdX(a, 1);
        d.B(2, 2 * a) = d.dNdX(a, 1);
        d.B(2, 2 * a + 1) = d.dNdX(a, 0);
      } else {
        d.B(0, 3 * a) = d.dNdX(a, 0);
        d.B(1, 3 * a + 1) = d.dNdX(a, 1);
        d.B(2, 3 * a + 2) = d.dNdX(a, 2);
        d.B(3, 3 * a + 1) = d.dNdX(a, 2);
        d.B(3, 3 * a + 2) = d.dNdX(a, 1);
        d.B(4, 3 * a) = d.dNdX(a, 2);
        d.B(4, 3 * a + 2) = d.dNdX(a, 0);
        d.B(5, 3 * a) = d.dNdX(a, 1);
        d.B(5, 3 * a + 1) = d.dNdX(a, 0);
      }
    }
    d.CNe = d.weight * d.Ne.transpose() * Chat * d.Ne;
    G += d.weight * d.Ns.transpose() * d.Ne;
    Q += d.weight * d.Ns.transpose() * transform.M_sigma.transpose() * d.B;
    nodal_weight += d.weight * d.N;
    volume += d.weight;
  }
}

Eigen::VectorXd ElementGeometry::spatial_stress(int q, const Eigen::VectorXd& sig_hat) const {
  return transform.M_sigma * (qp[q].Ns * sig_hat);
}

Eigen::VectorXd ElementGeometry::spatial_strain(int q, const Eigen::VectorXd& eps_hat) const {
  return transform.M_sigma_inv_T * (qp[q].Ne * eps_hat);
}

ElementResult element_residual_tangent(const ElementGeometry& geom, const ElementInputs& in,
                                       const ElementParams& params, bool want_tangent) {
  const auto& sz = geom.sizes;
  const int dim = sz.dim, nn = sz.n_nodes, nu = dim * nn, np = nn;
  const int ns = sz.n_stress, ne = sz.n_strain, nl = ns + ne;
  const MaterialParams& mat = *params.material;
  const PhaseParams& ph = *params.phase;
  const VolumeControl& vc = *params.volume;
  const bool vm = vc.kind == VolumeControl::Kind::minimization;
  const bool has_body = params.body_force.squaredNorm() > 0;

  ElementResult out;
  out.r_u = Eigen::VectorXd::Zero(nu);
  out.r_phi = Eigen::VectorXd::Zero(np);
  if (want_tangent) out.K = Eigen::MatrixXd::Zero(nu + np, nu + np);

  if (in.mode == KernelMode::nand_phi) {
    // Phase equation with the elastic driving force and displacement frozen at
    // the previous step; no stress/strain coupling enters.
    for (int q = 0; q < sz.n_qp; ++q) {
      const auto& d = geom.qp[q];
      const double phi_q = d.N.dot(in.phi);
      const double phin_q = d.N.dot(in.phi_n);
      const Eigen::VectorXd grad_phi = d.dNdX.transpose() * in.phi;
      const ScalarLaw w = double_well(phi_q);
      const ScalarLaw b = bound_penalty(phi_q);
      Eigen::VectorXd r = ph.kappa_phi * (ph.gamma_phi * (d.dNdX * grad_phi) +
                                          (w.d1 / ph.gamma_phi) * d.N) +
                          ph.kappa_b * b.d1 * d.N + (ph.tau_phi / in.dt) * (phi_q - phin_q) * d.N;
      r -= in.frozen_eel_qp[q] * d.N;
      if (vm) r += vc.kappa_v * phi_q * d.N;
      if (has_body) {
        Eigen::VectorXd uq = Eigen::VectorXd::Zero(dim);
        for (int a = 0; a < nn; ++a) uq += d.N[a] * in.u_frozen.segment(dim * a, dim);
        r += params.body_force.head(dim).dot(uq) * d.N;
      }
      out.r_phi += d.weight * r;
      out.int_phi += d.weight * phi_q;
      if (want_tangent) {
        Eigen::MatrixXd Kpp = ph.kappa_phi * (ph.gamma_phi * d.dNdX * d.dNdX.transpose() +
                                              (w.d2 / ph.gamma_phi) * d.N * d.N.transpose()) +
                              (ph.kappa_b * b.d2 + ph.tau_phi / in.dt) * d.N * d.N.transpose();
        if (vm) Kpp += vc.kappa_v * d.N * d.N.transpose();
        out.K.block(nu, nu, np, np) += d.weight * Kpp;
      }
    }
    return out;
  }

  const bool frozen_stiffness = in.mode == KernelMode::nand_u;
  const Eigen::VectorXd& phi_stiff = frozen_stiffness ? in.phi_eval : in.phi;

  // Elastic block H(phi) and its phi-derivatives.
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(ne, ne);
  std::vector<double> fpp_q(sz.n_qp, 0.0);
  std::vector<Eigen::MatrixXd> Hp_res;
  if (!frozen_stiffness) Hp_res.assign(nn, Eigen::MatrixXd::Zero(ne, ne));
  for (int q = 0; q < sz.n_qp; ++q) {
    const auto& d = geom.qp[q];
    const double phi_q = d.N.dot(phi_stiff);
    const ScalarLaw f = stiffness_scale(phi_q, mat.void_stiffness, mat.interp_exponent);
    H += f.value * d.CNe;
    if (!frozen_stiffness) {
      for (int a = 0; a < nn; ++a) Hp_res[a] += (f.d1 * d.N[a]) * d.CNe;
      fpp_q[q] = f.d2;
    }
  }

  // Exact elimination of the assumed stress/strain coefficients: the local
  // stationarity system [0 G; G^T -H][sig; eps] = [Q u; 0] is solved at the
  // current state.
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(nl, nl);
  A.topRightCorner(ns, ne) = geom.G;
  A.bottomLeftCorner(ne, ns) = geom.G.transpose();
  A.bottomRightCorner(ne, ne) = -H;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
  if (lu.determinant() == 0.0)
    throw std::runtime_error("element_residual_tangent: singular local stress/strain block");
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nl);
  rhs.head(ns) = geom.Q * in.u;
  const Eigen::VectorXd loc = lu.solve(rhs);
  out.sig_hat = loc.head(ns);
  out.eps_hat = loc.tail(ne);

  // Equilibrium rows.
  out.r_u = -geom.Q.transpose() * out.sig_hat;

  // Phase rows (SAND only).
  if (!frozen_stiffness) {
    for (int a = 0; a < nn; ++a)
      out.r_phi[a] = -0.5 * out.eps_hat.dot(Hp_res[a] * out.eps_hat);
    for (int q = 0; q < sz.n_qp; ++q) {
      const auto& d = geom.qp[q];
      const double phi_q = d.N.dot(in.phi);
      const double phin_q = d.N.dot(in.phi_n);
      const Eigen::VectorXd grad_phi = d.dNdX.transpose() * in.phi;
      const ScalarLaw w = double_well(phi_q);
      const ScalarLaw b = bound_penalty(phi_q);
      Eigen::VectorXd r = ph.kappa_phi * (ph.gamma_phi * (d.dNdX * grad_phi) +
                                          (w.d1 / ph.gamma_phi) * d.N) +
                          ph.kappa_b * b.d1 * d.N + (ph.tau_phi / in.dt) * (phi_q - phin_q) * d.N;
      if (vm) r += vc.kappa_v * phi_q * d.N;
      out.r_phi += d.weight * r;
      out.int_phi += d.weight * phi_q;
      if (has_body) {
        Eigen::VectorXd uq = Eigen::VectorXd::Zero(dim);
        for (int a = 0; a < nn; ++a) uq += d.N[a] * in.u.segment(dim * a, dim);
        out.r_phi += d.weight * params.body_force.head(dim).dot(uq) * d.N;
        for (int a = 0; a < nn; ++a)
          out.r_u.segment(dim * a, dim) += d.weight * d.N[a] * phi_q * params.body_force.head(dim);
      }
    }
  } else {
    for (int q = 0; q < sz.n_qp; ++q) {
      const auto& d = geom.qp[q];
      out.int_phi += d.weight * d.N.dot(in.phi);
      if (has_body) {
        const double phi_q = d.N.dot(phi_stiff);
        for (int a = 0; a < nn; ++a)
          out.r_u.segment(dim * a, dim) += d.weight * d.N[a] * phi_q * params.body_force.head(dim);
      }
    }
  }

  if (!want_tangent) return out;

  // Condensed tangent: K_gg - K_gl A^{-1} K_gl^T with g = (u, phi), l = (sig, eps).
  Eigen::MatrixXd Kgl = Eigen::MatrixXd::Zero(nu + np, nl);
  Kgl.topLeftCorner(nu, ns) = -geom.Q.transpose();
  if (!frozen_stiffness)
    for (int a = 0; a < nn; ++a)
      Kgl.row(nu + a).tail(ne) = -(Hp_res[a] * out.eps_hat).transpose();
  out.K.noalias() -= Kgl * lu.solve(Kgl.transpose());

  if (!frozen_stiffness) {
    for (int q = 0; q < sz.n_qp; ++q) {
      const auto& d = geom.qp[q];
      const double phi_q = d.N.dot(in.phi);
      const ScalarLaw w = double_well(phi_q);
      const ScalarLaw b = bound_penalty(phi_q);
      Eigen::MatrixXd Kpp = ph.kappa_phi * (ph.gamma_phi * d.dNdX * d.dNdX.transpose() +
                                            (w.d2 / ph.gamma_phi) * d.N * d.N.transpose()) +
                            (ph.kappa_b * b.d2 + ph.tau_phi / in.dt) * d.N * d.N.transpose();
      if (vm) Kpp += vc.kappa_v * d.N * d.N.transpose();
      out.K.block(nu, nu, np, np) += d.weight * Kpp;
      // phi-phi curvature of the condensed elastic energy
      out.K.block(nu, nu, np, np) -=
          0.5 * fpp_q[q] * out.eps_hat.dot(d.CNe * out.eps_hat) * d.N * d.N.transpose();
      if (has_body) {
        for (int a = 0; a < nn; ++a)
          for (int i = 0; i < nn; ++i) {
            const Eigen::VectorXd blk =
                d.weight * d.N[a] * d.N[i] * params.body_force.head(dim);
            out.K.block(dim * a, nu + i, dim, 1) += blk;
            out.K.block(nu + i, dim * a, 1, dim) += blk.transpose();
          }
      }
    }
  }
  return out;
}

} // namespace topopt
