#pragma once

#include <Eigen/Dense>

#include <array>
#include <string>
#include <vector>

namespace topopt {

/// Structured quadrilateral (2D) / hexahedral (3D) mesh over an axis-aligned box.
/// Nodes are ordered lexicographically (x fastest); immutable after construction.
struct Mesh {
  int dimension = 2;
  std::vector<Eigen::Vector3d> nodes;      // z = 0 in 2D
  std::vector<std::array<int, 8>> conn;    // first 4 entries used for Q1
  std::array<int, 3> divisions{1, 1, 1};   // nz = 1 placeholder in 2D
  std::array<double, 3> extents{1, 1, 1};
  double h_e = 0;       // max edge length over all elements
  double thickness = 1; // out-of-plane thickness, 2D only

  int nodes_per_element() const { return dimension == 2 ? 4 : 8; }
  int n_nodes() const { return static_cast<int>(nodes.size()); }
  int n_elements() const { return static_cast<int>(conn.size()); }

  /// Coordinates of one element's nodes, rows = nodes.
  Eigen::MatrixXd element_coords(int e) const;
  Eigen::Vector3d element_centroid(int e) const;
};

enum class RegionKind { dirichlet_displacement, neumann_traction, passive_solid };

/// One boundary face of an element (all nodes on the domain boundary).
struct BoundaryFace {
  int element = -1;
  std::array<int, 4> nodes{-1, -1, -1, -1}; // 2 used in 2D
  Eigen::Vector3d outward_normal = Eigen::Vector3d::Zero();
};

/// Axis-aligned selection box with tolerance. Degenerate boxes (min == max along
/// an axis) select planes.
struct BoxPredicate {
  Eigen::Vector3d lo = Eigen::Vector3d::Zero();
  Eigen::Vector3d hi = Eigen::Vector3d::Zero();

  bool contains(const Eigen::Vector3d& x, double tol) const;
};

struct BoundaryRegion {
  std::string name;
  RegionKind kind = RegionKind::dirichlet_displacement;
  std::vector<int> node_set;        // dirichlet
  std::vector<BoundaryFace> faces;  // neumann
  std::vector<int> element_set;     // passive
  Eigen::Vector3d value = Eigen::Vector3d::Zero(); // displacement or traction [Pa]
  std::array<bool, 3> fixed_components{true, true, true}; // dirichlet only
  double phi_value = 1.0;           // passive only
};

/// Degree-of-freedom map: per node, dim displacement components plus one phase
/// value, interleaved by node. Free unknowns get indices 0..n_free-1; constrained
/// entries map to -1 and carry their prescribed value.
struct DofMap {
  int dimension = 2;
  std::vector<int> u_index;        // dim * n_nodes
  std::vector<int> phi_index;      // n_nodes
  std::vector<double> u_value;     // prescribed values at constrained entries
  std::vector<double> phi_value;
  int n_free = 0;
  int n_constrained = 0;
  bool has_lambda = false;         // volume-constrained formulation appends one multiplier

  int n_system() const { return n_free + (has_lambda ? 1 : 0); }
  int lambda_index() const { return has_lambda ? n_free : -1; }
};

/// Builds a regular grid of divisions[i] elements per axis over the given extents.
/// Throws std::invalid_argument on non-positive extents or divisions.
Mesh build_box_grid(const std::array<double, 3>& extents, const std::array<int, 3>& divisions,
                    int dimension, double thickness = 1.0);

/// Selects mesh entities inside `box`: nodes for Dirichlet regions, boundary faces
/// (by face center) for Neumann regions, elements (by centroid) for passive
/// regions. Tolerance is 1e-9 times the largest domain extent.
/// Throws std::runtime_error when the selection is empty.
BoundaryRegion select_region(const Mesh& mesh, const BoxPredicate& box, RegionKind kind,
                             const Eigen::Vector3d& value, const std::string& name,
                             const std::array<bool, 3>& fixed_components = {true, true, true});

/// Numbers free unknowns, applying Dirichlet and passive constraints from the
/// regions. `with_lambda` appends the global volume-constraint multiplier.
DofMap build_dof_map(const Mesh& mesh, const std::vector<BoundaryRegion>& regions,
                     bool with_lambda);

} // namespace topopt
