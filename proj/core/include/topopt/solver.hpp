#pragma once

#include "topopt/assembly.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace topopt {

struct ConvergenceParams {
  double c_ac_conv = 1e-6; // Allen-Cahn stationarity threshold (dimensionless)
  double c_r_res = 1e-8;   // Newton residual threshold, measured in MN-based units
  int n_iter_max = 15;
  double t_final = 1e4;    // pseudo-time horizon [s]
  // The residual norm is evaluated with forces in MN and energies in MJ, the
  // unit scale the reference thresholds are calibrated for; this is the
  // corresponding SI scale factor.
  double residual_scale = 1e6;
  long max_steps = 200000;
};

/// Adaptive pseudo-time step controller around a reference step dt0, bounded to
/// [1e-5, 1e3] * dt0. Grows on fast Newton convergence, shrinks on slow or
/// failed solves.
struct TimeStepper {
  double dt0 = 1e-2;
  double dt = 1e-2;
  double lo_factor = 1e-5;
  double hi_factor = 1e3;
  int grow_below = 5;   // iterations <= grow_below doubles dt
  int shrink_above = 10; // iterations >= shrink_above halves dt

  double lo() const { return lo_factor * dt0; }
  double hi() const { return hi_factor * dt0; }
  void clamp() { dt = std::min(std::max(dt, lo()), hi()); }
  void on_success(int iterations);
  /// Quarters the step; returns false when already at the lower bound.
  bool on_failure();
};

struct StepRecord {
  double t = 0;
  double dt = 0;
  int newton_iters = 0;
  double E_ac = 0;
  double E_dphi = 0;
  double E_du = 0;
  double v = 0;          // volume fraction
  double compliance = 0; // [J]
  double res_norm = 0;   // final scaled Newton residual
  bool convexity_ok = true;
};

enum class Termination { converged, time_limit, diverged };

struct SolverReport {
  std::vector<StepRecord> steps;
  long total_newton = 0;
  long rejected_steps = 0;
  Termination termination = Termination::time_limit;
  double t_end = 0;
  double A_du = 0;  // reference displacement normalization [m]
  double ebar = 0;  // full-material strain-energy density rate [Pa]
  std::vector<std::string> warnings;

  /// Stream as CSV: t,dt,newton_iters,E_AC,E_dphi,E_du,v,compliance
  void write_csv(std::ostream& os) const;
};

struct NewtonResult {
  int iterations = 0;
  double res_norm = 0; // scaled
};

struct AllenCahnError {
  double E_ac = 0;
  double E_dphi = 0;
  double E_du = 0;
};

struct ReferenceSolution {
  Eigen::VectorXd u_bar; // displacement at phi = 1 everywhere
  double A_du = 0;       // (1/V) int ||u_bar|| dOmega
  double ebar = 0;       // (1/V) int e^el_,phi(1, eps_bar) dOmega
};

/// Allen-Cahn stationarity error between the current and previous fields,
/// by element quadrature on the interpolated fields.
AllenCahnError allen_cahn_error(const Assembler& assembler, const FieldState& state, double dt,
                                double A_du);

/// Solves the equilibrium problem with phi = 1 everywhere; yields the
/// displacement normalization A_du and the guideline energy rate ebar.
/// Throws std::runtime_error when the problem is degenerate (A_du = 0 or
/// singular stiffness).
ReferenceSolution reference_displacement_norm(const Assembler& assembler);

class Solver {
public:
  Solver(Assembler& assembler, SolveMode mode, ConvergenceParams conv, TimeStepper stepper);

  /// One monolithic Newton solve at fixed dt. On success the state holds the
  /// converged fields; on failure the state is restored bit-identically.
  std::optional<NewtonResult> newton_solve(FieldState& state, double dt);

  /// One staggered step: phase solve with frozen mechanics, then equilibrium
  /// with the stiffness frozen at the previous phase field.
  std::optional<NewtonResult> nand_step(FieldState& state, double dt);

  using SnapshotCallback = std::function<void(int step, double t, const FieldState&)>;

  /// Runs the pseudo-time continuation until E_AC < c_AC^conv, the time
  /// horizon, or time-step underflow.
  SolverReport run(FieldState& state, const SnapshotCallback& snapshot = {});

  const ReferenceSolution& reference() const { return reference_; }

private:
  std::optional<NewtonResult> newton_stage(FieldState& state, double dt, AssemblyStage stage);
  bool convexity_satisfied(double dt) const;

  Assembler& assembler_;
  SolveMode mode_;
  ConvergenceParams conv_;
  TimeStepper stepper_;
  ReferenceSolution reference_;
  bool reference_ready_ = false;
};

} // namespace topopt
