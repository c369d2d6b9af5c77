#pragma once

#include "topopt/element.hpp"
#include "topopt/mesh.hpp"

#include <Eigen/Sparse>

#include <memory>
#include <optional>

namespace topopt {

enum class SolveMode { sand, nand };

/// Nodal unknowns plus per-element condensed coefficients. Vectors span all
/// nodes; constrained entries hold their prescribed values.
struct FieldState {
  Eigen::VectorXd u;      // dim * n_nodes
  Eigen::VectorXd phi;    // n_nodes
  double lambda = 0;      // volume-constraint multiplier
  Eigen::VectorXd u_n;
  Eigen::VectorXd phi_n;
  double lambda_n = 0;
  Eigen::MatrixXd sig_hat; // n_stress x n_elements, recovered at last assembly
  Eigen::MatrixXd eps_hat; // n_strain x n_elements

  void commit_step(); // copies current fields into the _n slots
};

/// Assembled tangent/residual over free unknowns. The volume-constraint border
/// is kept separate from the sparse block to preserve the node-wise pattern.
struct GlobalSystem {
  Eigen::SparseMatrix<double> K; // n_free x n_free
  Eigen::VectorXd R;             // n_free
  Eigen::VectorXd border;        // n_free, nonzero at phi rows (VC only)
  double R_lambda = 0;           // constraint residual (VC only)
  bool has_lambda = false;
  double residual_norm() const;
};

enum class AssemblyStage { sand, nand_phi, nand_u };

/// Builds the global residual and tangent for one formulation and solve stage,
/// with Dirichlet/passive constraints eliminated through the DofMap.
class Assembler {
public:
  Assembler(const Mesh& mesh, const std::vector<BoundaryRegion>& regions, const DofMap& dofs,
            MaterialParams material, PhaseParams phase, VolumeControl volume,
            Eigen::Vector3d body_force = Eigen::Vector3d::Zero());

  /// Residual and (optionally) tangent at the given state, over the unknowns
  /// of the given stage (all free dofs for sand, phase-only / displacement-only
  /// subsets for the staggered stages). Updates state.sig_hat / state.eps_hat
  /// with the recovered local coefficients.
  /// Throws std::runtime_error naming the element on NaN/Inf entries.
  GlobalSystem assemble(FieldState& state, double dt, AssemblyStage stage,
                        bool want_tangent = true) const;

  /// Number of stage unknowns, excluding the multiplier border.
  int stage_size(AssemblyStage stage) const;

  /// Applies a Newton update dx (sized stage_size, plus one trailing multiplier
  /// entry when the stage carries the volume constraint): x <- x - dx.
  void apply_update(FieldState& state, const Eigen::VectorXd& dx, AssemblyStage stage) const;

  bool stage_has_lambda(AssemblyStage stage) const;

  /// Residual vector over all dofs (constrained rows included); constrained
  /// u-rows carry minus the reaction forces.
  Eigen::VectorXd full_displacement_residual(FieldState& state, double dt,
                                             AssemblyStage stage) const;

  const DofMap& dofs() const { return dofs_; }
  const Mesh& mesh() const { return mesh_; }
  const std::vector<BoundaryRegion>& regions() const { return regions_; }
  const MaterialParams& material() const { return material_; }
  const PhaseParams& phase() const { return phase_; }
  const VolumeControl& volume_control() const { return volume_; }
  PhaseParams& phase() { return phase_; }
  VolumeControl& volume_control() { return volume_; }

  double domain_volume() const { return domain_volume_; }
  /// Consistent nodal weights int N_i dOmega over all nodes.
  const Eigen::VectorXd& nodal_weights() const { return nodal_weights_; }
  /// External load vector (tractions only) over all u-dofs.
  const Eigen::VectorXd& external_load() const { return f_ext_; }
  const ElementGeometry& geometry(int element) const {
    return shared_geometry_ ? *shared_geometry_ : per_element_geometry_[element];
  }

  FieldState make_state(double phi0) const;

private:
  void scatter_element(int e, const ElementResult& res, std::vector<Eigen::Triplet<double>>& trips,
                       Eigen::VectorXd& R) const;

  const Mesh& mesh_;
  std::vector<BoundaryRegion> regions_;
  DofMap dofs_;
  MaterialParams material_;
  PhaseParams phase_;
  VolumeControl volume_;
  Eigen::Vector3d body_force_;
  Eigen::MatrixXd C_A_;
  std::unique_ptr<ElementGeometry> shared_geometry_; // regular grids: all elements congruent
  std::vector<ElementGeometry> per_element_geometry_;
  Eigen::VectorXd nodal_weights_;
  Eigen::VectorXd f_ext_;
  double domain_volume_ = 0;
  int n_threads_ = 1;
  std::vector<int> u_rank_;   // stage-local numbering of free u dofs
  std::vector<int> phi_rank_; // stage-local numbering of free phi dofs
  int n_free_u_ = 0;
  int n_free_phi_ = 0;
};

/// Clamps the phase field to [0,1] in place (staggered scheme only).
void nand_project(FieldState& state);

/// How the volume-constraint border is handled in the linear solve.
enum class BorderedSolveMethod { augmented, schur };

/// Direct sparse solve of the (possibly bordered) symmetric indefinite system.
/// Returns the update over free dofs plus, for VC, the lambda update appended.
/// Returns std::nullopt when the factorization fails (consumed by the time
/// stepper as a step-failure signal).
std::optional<Eigen::VectorXd> solve_linear(const GlobalSystem& system,
                                            BorderedSolveMethod method =
                                                BorderedSolveMethod::augmented);

} // namespace topopt
