#include "topopt/solver.hpp"

#include <cmath>
#include <iostream>
#include <ostream>

namespace topopt {

void TimeStepper::on_success(int iterations) {
  if (iterations <= grow_below)
    dt = std::min(2.0 * dt, hi());
  else if (iterations >= shrink_above)
    dt = std::max(0.5 * dt, lo());
}

bool TimeStepper::on_failure() {
  if (dt <= lo() * (1.0 + 1e-12)) return false;
  dt = std::max(0.25 * dt, lo());
  return true;
}

void SolverReport::write_csv(std::ostream& os) const {
  os << "t,dt,newton_iters,E_AC,E_dphi,E_du,v,compliance\n";
  os.precision(12);
  for (const auto& s : steps)
    os << s.t << ',' << s.dt << ',' << s.newton_iters << ',' << s.E_ac << ',' << s.E_dphi << ','
       << s.E_du << ',' << s.v << ',' << s.compliance << '\n';
}

AllenCahnError allen_cahn_error(const Assembler& assembler, const FieldState& state, double dt,
                                double A_du) {
  const Mesh& mesh = assembler.mesh();
  const int dim = mesh.dimension;
  const int npe = mesh.nodes_per_element();
  double int_dphi = 0, int_du = 0;
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const auto& g = assembler.geometry(e);
    for (int q = 0; q < g.sizes.n_qp; ++q) {
      const auto& d = g.qp[q];
      double dphi = 0;
      Eigen::Vector3d du = Eigen::Vector3d::Zero();
      for (int a = 0; a < npe; ++a) {
        const int n = mesh.conn[e][a];
        dphi += d.N[a] * (state.phi[n] - state.phi_n[n]);
        for (int c = 0; c < dim; ++c)
          du[c] += d.N[a] * (state.u[dim * n + c] - state.u_n[dim * n + c]);
      }
      int_dphi += d.weight * std::abs(dphi);
      int_du += d.weight * du.norm();
    }
  }
  const double V = assembler.domain_volume();
  const PhaseParams& ph = assembler.phase();
  AllenCahnError err;
  err.E_dphi = ph.T_phi / (V * dt) * int_dphi;
  err.E_du = A_du > 0 ? ph.T_phi / (A_du * V * dt) * int_du : 0.0;
  err.E_ac = 0.5 * (err.E_dphi + err.E_du);
  return err;
}

ReferenceSolution reference_displacement_norm(const Assembler& assembler) {
  FieldState state = assembler.make_state(1.0);
  // Two Newton iterations polish the linear elastic solve to machine level.
  for (int it = 0; it < 2; ++it) {
    GlobalSystem sys = assembler.assemble(state, 1.0, AssemblyStage::nand_u);
    auto dx = solve_linear(sys);
    if (!dx) throw std::runtime_error("reference solve: singular stiffness (check supports)");
    assembler.apply_update(state, *dx, AssemblyStage::nand_u);
  }
  // refresh recovered strains at the solution
  assembler.assemble(state, 1.0, AssemblyStage::nand_u, false);

  const Mesh& mesh = assembler.mesh();
  const int dim = mesh.dimension;
  const int npe = mesh.nodes_per_element();
  const Eigen::MatrixXd C_A = elastic_tensor(assembler.material(), dim);
  const ScalarLaw f1 = stiffness_scale(1.0, assembler.material().void_stiffness,
                                       assembler.material().interp_exponent);
  ReferenceSolution ref;
  double int_u = 0, int_e = 0;
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const auto& g = assembler.geometry(e);
    for (int q = 0; q < g.sizes.n_qp; ++q) {
      const auto& d = g.qp[q];
      Eigen::Vector3d uq = Eigen::Vector3d::Zero();
      for (int a = 0; a < npe; ++a)
        for (int c = 0; c < dim; ++c) uq[c] += d.N[a] * state.u[dim * mesh.conn[e][a] + c];
      int_u += d.weight * uq.norm();
      const Eigen::VectorXd eps = g.spatial_strain(q, state.eps_hat.col(e));
      int_e += d.weight * 0.5 * f1.d1 * eps.dot(C_A * eps);
    }
  }
  const double V = assembler.domain_volume();
  ref.A_du = int_u / V;
  ref.ebar = int_e / V;
  ref.u_bar = state.u;
  if (!(ref.A_du > 0))
    throw std::runtime_error("reference solve: zero displacement norm (no load applied?)");
  return ref;
}

Solver::Solver(Assembler& assembler, SolveMode mode, ConvergenceParams conv, TimeStepper stepper)
    : assembler_(assembler), mode_(mode), conv_(conv), stepper_(stepper) {}

std::optional<NewtonResult> Solver::newton_stage(FieldState& state, double dt,
                                                 AssemblyStage stage) {
  const FieldState backup = state;
  for (int it = 0; it <= conv_.n_iter_max; ++it) {
    GlobalSystem sys;
    try {
      sys = assembler_.assemble(state, dt, stage);
    } catch (const std::exception&) {
      state = backup;
      return std::nullopt;
    }
    const double res = sys.residual_norm() / conv_.residual_scale;
    if (res < conv_.c_r_res) return NewtonResult{it, res};
    if (it == conv_.n_iter_max) break;
    auto dx = solve_linear(sys);
    if (!dx) break;
    assembler_.apply_update(state, *dx, stage);
  }
  state = backup;
  return std::nullopt;
}

std::optional<NewtonResult> Solver::newton_solve(FieldState& state, double dt) {
  return newton_stage(state, dt, AssemblyStage::sand);
}

std::optional<NewtonResult> Solver::nand_step(FieldState& state, double dt) {
  const FieldState backup = state;
  const auto phi_res = newton_stage(state, dt, AssemblyStage::nand_phi);
  if (!phi_res) {
    state = backup;
    return std::nullopt;
  }
  // staggered scheme projects the phase field onto the admissible range
  nand_project(state);
  const auto u_res = newton_stage(state, dt, AssemblyStage::nand_u);
  if (!u_res) {
    state = backup;
    return std::nullopt;
  }
  NewtonResult total;
  total.iterations = phi_res->iterations + u_res->iterations;
  total.res_norm = std::max(phi_res->res_norm, u_res->res_norm);
  return total;
}

bool Solver::convexity_satisfied(double dt) const {
  const PhaseParams& ph = assembler_.phase();
  const double lhs = ph.tau_phi / dt +
                     (assembler_.volume_control().kind == VolumeControl::Kind::minimization
                          ? assembler_.volume_control().kappa_v
                          : 0.0);
  return lhs >= 2.0 * ph.kappa_phi / ph.gamma_phi;
}

SolverReport Solver::run(FieldState& state, const SnapshotCallback& snapshot) {
  SolverReport report;
  if (!reference_ready_) {
    reference_ = reference_displacement_norm(assembler_);
    reference_ready_ = true;
  }
  report.A_du = reference_.A_du;
  report.ebar = reference_.ebar;

  double t = 0;
  long step = 0;
  report.termination = Termination::time_limit;
  while (t < conv_.t_final && step < conv_.max_steps) {
    std::optional<NewtonResult> res =
        mode_ == SolveMode::sand ? newton_solve(state, stepper_.dt) : nand_step(state, stepper_.dt);
    if (!res) {
      ++report.rejected_steps;
      if (!stepper_.on_failure()) {
        report.termination = Termination::diverged;
        report.warnings.push_back("time step underflow at t = " + std::to_string(t));
        break;
      }
      continue;
    }
    t += stepper_.dt;
    ++step;
    report.total_newton += res->iterations;

    StepRecord rec;
    rec.t = t;
    rec.dt = stepper_.dt;
    rec.newton_iters = res->iterations;
    rec.res_norm = res->res_norm;
    const AllenCahnError err = allen_cahn_error(assembler_, state, stepper_.dt, reference_.A_du);
    rec.E_ac = err.E_ac;
    rec.E_dphi = err.E_dphi;
    rec.E_du = err.E_du;
    rec.v = assembler_.nodal_weights().dot(state.phi) / assembler_.domain_volume();
    rec.compliance = assembler_.external_load().dot(state.u);
    rec.convexity_ok = convexity_satisfied(stepper_.dt);
    if (!rec.convexity_ok && report.warnings.size() < 16)
      report.warnings.push_back("convexity condition violated at t = " + std::to_string(t) +
                                " (tau_phi/dt too small)");
    report.steps.push_back(rec);

    state.commit_step();
    if (snapshot) snapshot(static_cast<int>(step), t, state);
    if (err.E_ac < conv_.c_ac_conv) {
      report.termination = Termination::converged;
      break;
    }
    stepper_.on_success(res->iterations);
  }
  report.t_end = t;
  return report;
}

} // namespace topopt
