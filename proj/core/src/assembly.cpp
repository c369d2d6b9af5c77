#include "topopt/assembly.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <thread>

namespace topopt {

void FieldState::commit_step() {
  u_n = u;
  phi_n = phi;
  lambda_n = lambda;
}

double GlobalSystem::residual_norm() const {
  double sq = R.squaredNorm();
  if (has_lambda) sq += R_lambda * R_lambda;
  return std::sqrt(sq);
}

namespace {

int resolve_thread_count(int n_elements) {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("TOPO_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) n = v;
  }
  n = std::max(1, std::min(n, 16));
  if (n_elements < 512) n = 1;
  return n;
}

bool congruent(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double tol) {
  // Same shape up to translation.
  Eigen::MatrixXd da = a.rowwise() - a.row(0);
  Eigen::MatrixXd db = b.rowwise() - b.row(0);
  return (da - db).cwiseAbs().maxCoeff() <= tol;
}

} // namespace

Assembler::Assembler(const Mesh& mesh, const std::vector<BoundaryRegion>& regions,
                     const DofMap& dofs, MaterialParams material, PhaseParams phase,
                     VolumeControl volume, Eigen::Vector3d body_force)
    : mesh_(mesh), regions_(regions), dofs_(dofs), material_(material), phase_(phase),
      volume_(volume), body_force_(std::move(body_force)) {
  material_.validate();
  phase_.validate();
  C_A_ = elastic_tensor(material_, mesh.dimension);
  const ElementKind kind = element_kind_for_dim(mesh.dimension);

  // Regular grids produce congruent elements; share one geometry.
  bool regular = mesh.n_elements() > 0;
  const Eigen::MatrixXd X0 = mesh.element_coords(0);
  const double tol = 1e-12 * std::max(1.0, X0.cwiseAbs().maxCoeff());
  for (int e = 1; e < mesh.n_elements() && regular; ++e)
    regular = congruent(X0, mesh.element_coords(e), tol);
  if (regular) {
    shared_geometry_ = std::make_unique<ElementGeometry>(kind, X0, C_A_, mesh.thickness);
  } else {
    per_element_geometry_.reserve(mesh.n_elements());
    for (int e = 0; e < mesh.n_elements(); ++e)
      per_element_geometry_.emplace_back(kind, mesh.element_coords(e), C_A_, mesh.thickness);
  }

  nodal_weights_ = Eigen::VectorXd::Zero(mesh.n_nodes());
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const auto& g = geometry(e);
    for (int a = 0; a < mesh.nodes_per_element(); ++a)
      nodal_weights_[mesh.conn[e][a]] += g.nodal_weight[a];
    domain_volume_ += g.volume;
  }

  // Traction load vector over all u-dofs: face quadrature of int N t dGamma.
  const int dim = mesh.dimension;
  f_ext_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim) * mesh.n_nodes());
  const double th = dim == 2 ? mesh.thickness : 1.0;
  for (const auto& region : regions_) {
    if (region.kind != RegionKind::neumann_traction) continue;
    for (const auto& face : region.faces) {
      if (dim == 2) {
        const Eigen::Vector3d d = mesh.nodes[face.nodes[1]] - mesh.nodes[face.nodes[0]];
        const double half = 0.5 * d.norm() * th;
        for (int a = 0; a < 2; ++a)
          for (int c = 0; c < 2; ++c)
            f_ext_[2 * face.nodes[a] + c] += half * region.value[c];
      } else {
        // bilinear quad face, 2x2 Gauss
        const double ga = 1.0 / std::sqrt(3.0);
        for (double eta : {-ga, ga})
          for (double xi : {-ga, ga}) {
            const double Nf[4] = {0.25 * (1 - xi) * (1 - eta), 0.25 * (1 + xi) * (1 - eta),
                                  0.25 * (1 + xi) * (1 + eta), 0.25 * (1 - xi) * (1 + eta)};
            const double dNf[4][2] = {{-0.25 * (1 - eta), -0.25 * (1 - xi)},
                                      {0.25 * (1 - eta), -0.25 * (1 + xi)},
                                      {0.25 * (1 + eta), 0.25 * (1 + xi)},
                                      {-0.25 * (1 + eta), 0.25 * (1 - xi)}};
            Eigen::Vector3d t1 = Eigen::Vector3d::Zero(), t2 = Eigen::Vector3d::Zero();
            for (int a = 0; a < 4; ++a) {
              t1 += dNf[a][0] * mesh.nodes[face.nodes[a]];
              t2 += dNf[a][1] * mesh.nodes[face.nodes[a]];
            }
            const double dA = t1.cross(t2).norm();
            for (int a = 0; a < 4; ++a)
              for (int c = 0; c < 3; ++c)
                f_ext_[3 * face.nodes[a] + c] += Nf[a] * region.value[c] * dA;
          }
      }
    }
  }
  n_threads_ = resolve_thread_count(mesh.n_elements());

  u_rank_.assign(dofs_.u_index.size(), -1);
  phi_rank_.assign(dofs_.phi_index.size(), -1);
  for (size_t i = 0; i < dofs_.u_index.size(); ++i)
    if (dofs_.u_index[i] >= 0) u_rank_[i] = n_free_u_++;
  for (size_t n = 0; n < dofs_.phi_index.size(); ++n)
    if (dofs_.phi_index[n] >= 0) phi_rank_[n] = n_free_phi_++;
}

int Assembler::stage_size(AssemblyStage stage) const {
  switch (stage) {
    case AssemblyStage::sand: return dofs_.n_free;
    case AssemblyStage::nand_u: return n_free_u_;
    case AssemblyStage::nand_phi: return n_free_phi_;
  }
  return 0;
}

bool Assembler::stage_has_lambda(AssemblyStage stage) const {
  return volume_.kind == VolumeControl::Kind::constraint && stage != AssemblyStage::nand_u;
}

void Assembler::apply_update(FieldState& state, const Eigen::VectorXd& dx,
                             AssemblyStage stage) const {
  const bool with_u = stage != AssemblyStage::nand_phi;
  const bool with_phi = stage != AssemblyStage::nand_u;
  if (with_u) {
    const auto& idx = stage == AssemblyStage::sand ? dofs_.u_index : u_rank_;
    for (size_t i = 0; i < idx.size(); ++i)
      if (idx[i] >= 0) state.u[static_cast<Eigen::Index>(i)] -= dx[idx[i]];
  }
  if (with_phi) {
    const auto& idx = stage == AssemblyStage::sand ? dofs_.phi_index : phi_rank_;
    for (size_t n = 0; n < idx.size(); ++n)
      if (idx[n] >= 0) state.phi[static_cast<Eigen::Index>(n)] -= dx[idx[n]];
  }
  if (stage_has_lambda(stage)) state.lambda -= dx[dx.size() - 1];
}

FieldState Assembler::make_state(double phi0) const {
  FieldState s;
  const int dim = mesh_.dimension;
  const int nn = mesh_.n_nodes();
  s.u = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim) * nn);
  s.phi = Eigen::VectorXd::Constant(nn, phi0);
  for (Eigen::Index i = 0; i < s.u.size(); ++i)
    if (dofs_.u_index[i] == -1) s.u[i] = dofs_.u_value[i];
  for (int n = 0; n < nn; ++n)
    if (dofs_.phi_index[n] == -1) s.phi[n] = dofs_.phi_value[n];
  s.commit_step();
  const auto sz = element_sizes(element_kind_for_dim(dim));
  s.sig_hat = Eigen::MatrixXd::Zero(sz.n_stress, mesh_.n_elements());
  s.eps_hat = Eigen::MatrixXd::Zero(sz.n_strain, mesh_.n_elements());
  return s;
}

GlobalSystem Assembler::assemble(FieldState& state, double dt, AssemblyStage stage,
                                 bool want_tangent) const {
  const int dim = mesh_.dimension;
  const int nn = mesh_.n_nodes();
  const int ne = mesh_.n_elements();
  const int npe = mesh_.nodes_per_element();
  const bool with_locals = stage != AssemblyStage::nand_phi;
  const int nsys = stage_size(stage);
  const std::vector<int>& u_num = stage == AssemblyStage::sand ? dofs_.u_index : u_rank_;
  const std::vector<int>& phi_num = stage == AssemblyStage::sand ? dofs_.phi_index : phi_rank_;
  const bool with_u_rows = stage != AssemblyStage::nand_phi;
  const bool with_phi_rows = stage != AssemblyStage::nand_u;

  GlobalSystem sys;
  sys.has_lambda = stage_has_lambda(stage);
  sys.R = Eigen::VectorXd::Zero(nsys);
  std::vector<Eigen::Triplet<double>> trips;

  ElementParams eparams;
  eparams.material = &material_;
  eparams.phase = &phase_;
  eparams.volume = &volume_;
  eparams.body_force = body_force_;

  struct Chunk {
    std::vector<Eigen::Triplet<double>> trips;
    Eigen::VectorXd R;
    std::string error;
  };
  const int nthreads = want_tangent ? n_threads_ : 1;
  std::vector<Chunk> chunks(nthreads);

  auto worker = [&](int tid) {
    Chunk& ch = chunks[tid];
    ch.R = Eigen::VectorXd::Zero(nsys);
    const int lo = static_cast<int>(static_cast<long>(ne) * tid / nthreads);
    const int hi = static_cast<int>(static_cast<long>(ne) * (tid + 1) / nthreads);
    ElementInputs in;
    for (int e = lo; e < hi; ++e) {
      const auto& geom = geometry(e);
      in.u.resize(dim * npe);
      in.phi.resize(npe);
      in.phi_n.resize(npe);
      for (int a = 0; a < npe; ++a) {
        const int n = mesh_.conn[e][a];
        in.u.segment(static_cast<Eigen::Index>(dim) * a, dim) =
            state.u.segment(static_cast<Eigen::Index>(dim) * n, dim);
        in.phi[a] = state.phi[n];
        in.phi_n[a] = state.phi_n[n];
      }
      in.dt = dt;
      switch (stage) {
        case AssemblyStage::sand: in.mode = KernelMode::sand; break;
        case AssemblyStage::nand_u: in.mode = KernelMode::nand_u; break;
        case AssemblyStage::nand_phi: in.mode = KernelMode::nand_phi; break;
      }
      if (stage == AssemblyStage::nand_u) in.phi_eval = in.phi_n;
      if (stage == AssemblyStage::nand_phi) {
        // Elastic driving force frozen at the previous step's phase and strain.
        in.frozen_eel_qp.resize(geom.sizes.n_qp);
        for (int q = 0; q < geom.sizes.n_qp; ++q) {
          const Eigen::VectorXd eps = geom.spatial_strain(q, state.eps_hat.col(e));
          const double phin_q = geom.qp[q].N.dot(in.phi_n);
          const ScalarLaw f =
              stiffness_scale(phin_q, material_.void_stiffness, material_.interp_exponent);
          in.frozen_eel_qp[q] = 0.5 * f.d1 * eps.dot(C_A_ * eps);
        }
        in.u_frozen.resize(dim * npe);
        for (int a = 0; a < npe; ++a)
          in.u_frozen.segment(static_cast<Eigen::Index>(dim) * a, dim) =
              state.u_n.segment(static_cast<Eigen::Index>(dim) * mesh_.conn[e][a], dim);
      }
      ElementResult res;
      try {
        res = element_residual_tangent(geom, in, eparams, want_tangent);
      } catch (const std::exception& ex) {
        ch.error = "element " + std::to_string(e) + ": " + ex.what();
        return;
      }
      if (!res.r_u.allFinite() || !res.r_phi.allFinite() ||
          (want_tangent && !res.K.allFinite())) {
        ch.error = "assembly failure: non-finite entries in element " + std::to_string(e);
        return;
      }
      if (with_locals) {
        state.sig_hat.col(e) = res.sig_hat;
        state.eps_hat.col(e) = res.eps_hat;
      }

      // Scatter into the stage's free dofs.
      const int nloc = dim * npe + npe;
      std::vector<int> gdof(nloc, -1);
      for (int a = 0; a < npe; ++a) {
        const int n = mesh_.conn[e][a];
        for (int c = 0; c < dim; ++c)
          gdof[dim * a + c] = with_u_rows ? u_num[static_cast<size_t>(dim) * n + c] : -1;
        gdof[dim * npe + a] = with_phi_rows ? phi_num[n] : -1;
      }
      for (int i = 0; i < nloc; ++i) {
        if (gdof[i] < 0) continue;
        ch.R[gdof[i]] += i < dim * npe ? res.r_u[i] : res.r_phi[i - dim * npe];
        if (want_tangent)
          for (int j = 0; j < nloc; ++j)
            if (gdof[j] >= 0) ch.trips.emplace_back(gdof[i], gdof[j], res.K(i, j));
      }
    }
  };

  if (nthreads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker, t);
    for (auto& th : pool) th.join();
  }
  for (const auto& ch : chunks)
    if (!ch.error.empty()) throw std::runtime_error(ch.error);
  for (const auto& ch : chunks) {
    sys.R += ch.R;
    trips.insert(trips.end(), ch.trips.begin(), ch.trips.end());
  }

  // Traction loads on free u-rows.
  if (with_u_rows)
    for (Eigen::Index i = 0; i < f_ext_.size(); ++i)
      if (u_num[i] >= 0) sys.R[u_num[i]] += f_ext_[i];

  // Volume-constraint multiplier coupling and border.
  if (sys.has_lambda) {
    sys.border = Eigen::VectorXd::Zero(nsys);
    for (int n = 0; n < nn; ++n)
      if (phi_num[n] >= 0) sys.border[phi_num[n]] = nodal_weights_[n];
    sys.R += state.lambda * sys.border;
    sys.R_lambda = nodal_weights_.dot(state.phi) - volume_.vbar * domain_volume_;
  }

  if (want_tangent) {
    sys.K.resize(nsys, nsys);
    sys.K.setFromTriplets(trips.begin(), trips.end());
  }
  if (!sys.R.allFinite()) throw std::runtime_error("assembly failure: non-finite residual");
  return sys;
}

Eigen::VectorXd Assembler::full_displacement_residual(FieldState& state, double dt,
                                                      AssemblyStage stage) const {
  const int dim = mesh_.dimension;
  const int npe = mesh_.nodes_per_element();
  Eigen::VectorXd R = f_ext_;
  ElementParams eparams;
  eparams.material = &material_;
  eparams.phase = &phase_;
  eparams.volume = &volume_;
  eparams.body_force = body_force_;
  ElementInputs in;
  in.dt = dt;
  in.mode = stage == AssemblyStage::nand_u ? KernelMode::nand_u : KernelMode::sand;
  for (int e = 0; e < mesh_.n_elements(); ++e) {
    const auto& geom = geometry(e);
    in.u.resize(dim * npe);
    in.phi.resize(npe);
    in.phi_n.resize(npe);
    for (int a = 0; a < npe; ++a) {
      const int n = mesh_.conn[e][a];
      in.u.segment(static_cast<Eigen::Index>(dim) * a, dim) =
          state.u.segment(static_cast<Eigen::Index>(dim) * n, dim);
      in.phi[a] = state.phi[n];
      in.phi_n[a] = state.phi_n[n];
    }
    if (in.mode == KernelMode::nand_u) in.phi_eval = in.phi_n;
    const ElementResult res = element_residual_tangent(geom, in, eparams, false);
    for (int a = 0; a < npe; ++a)
      R.segment(static_cast<Eigen::Index>(dim) * mesh_.conn[e][a], dim) +=
          res.r_u.segment(static_cast<Eigen::Index>(dim) * a, dim);
  }
  return R;
}

void nand_project(FieldState& state) {
  state.phi = state.phi.cwiseMax(0.0).cwiseMin(1.0);
}

namespace {

std::optional<Eigen::VectorXd> sparse_solve(const Eigen::SparseMatrix<double>& A,
                                            const Eigen::VectorXd& b) {
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) return std::nullopt;
  Eigen::VectorXd x = lu.solve(b);
  // one step of iterative refinement keeps the Newton floor near machine level
  x += lu.solve(b - A * x);
  if (!x.allFinite()) return std::nullopt;
  return x;
}

} // namespace

std::optional<Eigen::VectorXd> solve_linear(const GlobalSystem& system,
                                            BorderedSolveMethod method) {
  const int n = static_cast<int>(system.R.size());
  if (!system.has_lambda) return sparse_solve(system.K, system.R);

  if (method == BorderedSolveMethod::schur) {
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(system.K);
    if (lu.info() != Eigen::Success) return std::nullopt;
    const Eigen::VectorXd y = lu.solve(system.border);
    const Eigen::VectorXd z = lu.solve(system.R);
    const double denom = system.border.dot(y);
    if (denom == 0.0 || !std::isfinite(denom)) return std::nullopt;
    const double dlam = (system.border.dot(z) - system.R_lambda) / denom;
    Eigen::VectorXd x(n + 1);
    x.head(n) = z - dlam * y;
    x[n] = dlam;
    if (!x.allFinite()) return std::nullopt;
    return x;
  }

  // augmented: append the border as an explicit unknown
  Eigen::SparseMatrix<double> A(n + 1, n + 1);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(system.K.nonZeros() + 2 * n);
  for (int k = 0; k < system.K.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(system.K, k); it; ++it)
      trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (int i = 0; i < n; ++i)
    if (system.border[i] != 0.0) {
      trips.emplace_back(i, n, system.border[i]);
      trips.emplace_back(n, i, system.border[i]);
    }
  A.setFromTriplets(trips.begin(), trips.end());
  Eigen::VectorXd b(n + 1);
  b.head(n) = system.R;
  b[n] = system.R_lambda;
  return sparse_solve(A, b);
}

} // namespace topopt
