#include "topopt/mesh.hpp"

#include <algorithm>
#include <stdexcept>

namespace topopt {

Eigen::MatrixXd Mesh::element_coords(int e) const {
  const int npe = nodes_per_element();
  Eigen::MatrixXd X(npe, dimension);
  for (int a = 0; a < npe; ++a)
    X.row(a) = nodes[conn[e][a]].head(dimension).transpose();
  return X;
}

Eigen::Vector3d Mesh::element_centroid(int e) const {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  const int npe = nodes_per_element();
  for (int a = 0; a < npe; ++a) c += nodes[conn[e][a]];
  return c / npe;
}

bool BoxPredicate::contains(const Eigen::Vector3d& x, double tol) const {
  for (int d = 0; d < 3; ++d)
    if (x[d] < lo[d] - tol || x[d] > hi[d] + tol) return false;
  return true;
}

Mesh build_box_grid(const std::array<double, 3>& extents, const std::array<int, 3>& divisions,
                    int dimension, double thickness) {
  if (dimension != 2 && dimension != 3)
    throw std::invalid_argument("build_box_grid: dimension must be 2 or 3");
  for (int d = 0; d < dimension; ++d) {
    if (extents[d] <= 0) throw std::invalid_argument("build_box_grid: extents must be positive");
    if (divisions[d] < 1) throw std::invalid_argument("build_box_grid: divisions must be >= 1");
  }
  Mesh mesh;
  mesh.dimension = dimension;
  mesh.extents = extents;
  mesh.divisions = divisions;
  mesh.thickness = thickness;
  const int nx = divisions[0], ny = divisions[1], nz = dimension == 3 ? divisions[2] : 0;
  if (dimension == 2) {
    mesh.divisions[2] = 1;
    mesh.extents[2] = 0.0;
  }
  const double hx = extents[0] / nx, hy = extents[1] / ny;
  const double hz = dimension == 3 ? extents[2] / nz : 0.0;
  mesh.h_e = std::max({hx, hy, hz});

  const auto node_id = [&](int i, int j, int k) {
    return (k * (ny + 1) + j) * (nx + 1) + i;
  };
  const int nk = dimension == 3 ? nz : 0;
  mesh.nodes.reserve(static_cast<size_t>(nx + 1) * (ny + 1) * (nk + 1));
  for (int k = 0; k <= nk; ++k)
    for (int j = 0; j <= ny; ++j)
      for (int i = 0; i <= nx; ++i)
        mesh.nodes.emplace_back(i * hx, j * hy, k * hz);

  if (dimension == 2) {
    mesh.conn.reserve(static_cast<size_t>(nx) * ny);
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        std::array<int, 8> c{};
        c.fill(-1);
        c[0] = node_id(i, j, 0);
        c[1] = node_id(i + 1, j, 0);
        c[2] = node_id(i + 1, j + 1, 0);
        c[3] = node_id(i, j + 1, 0);
        mesh.conn.push_back(c);
      }
  } else {
    mesh.conn.reserve(static_cast<size_t>(nx) * ny * nz);
    for (int k = 0; k < nz; ++k)
      for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
          std::array<int, 8> c{};
          c[0] = node_id(i, j, k);
          c[1] = node_id(i + 1, j, k);
          c[2] = node_id(i + 1, j + 1, k);
          c[3] = node_id(i, j + 1, k);
          c[4] = node_id(i, j, k + 1);
          c[5] = node_id(i + 1, j, k + 1);
          c[6] = node_id(i + 1, j + 1, k + 1);
          c[7] = node_id(i, j + 1, k + 1);
          mesh.conn.push_back(c);
        }
  }
  return mesh;
}

namespace {

// Local node indices and outward normals of the element faces of a box-grid
// element, in parent coordinates. Valid for lexicographic box grids only.
struct FaceDef {
  std::array<int, 4> local;
  Eigen::Vector3d normal;
};

const std::vector<FaceDef>& face_table(int dimension) {
  static const std::vector<FaceDef> faces2d = {
      {{0, 1, -1, -1}, {0, -1, 0}}, {{1, 2, -1, -1}, {1, 0, 0}},
      {{2, 3, -1, -1}, {0, 1, 0}},  {{3, 0, -1, -1}, {-1, 0, 0}}};
  static const std::vector<FaceDef> faces3d = {
      {{0, 3, 2, 1}, {0, 0, -1}}, {{4, 5, 6, 7}, {0, 0, 1}},
      {{0, 1, 5, 4}, {0, -1, 0}}, {{2, 3, 7, 6}, {0, 1, 0}},
      {{1, 2, 6, 5}, {1, 0, 0}},  {{3, 0, 4, 7}, {-1, 0, 0}}};
  return dimension == 2 ? faces2d : faces3d;
}

} // namespace

BoundaryRegion select_region(const Mesh& mesh, const BoxPredicate& box, RegionKind kind,
                             const Eigen::Vector3d& value, const std::string& name,
                             const std::array<bool, 3>& fixed_components) {
  const double tol = 1e-9 * std::max({mesh.extents[0], mesh.extents[1], mesh.extents[2], 1.0});
  BoundaryRegion region;
  region.name = name;
  region.kind = kind;
  region.value = value;
  region.fixed_components = fixed_components;

  if (kind == RegionKind::dirichlet_displacement) {
    for (int n = 0; n < mesh.n_nodes(); ++n)
      if (box.contains(mesh.nodes[n], tol)) region.node_set.push_back(n);
    if (region.node_set.empty())
      throw std::runtime_error("select_region: no nodes inside box for region '" + name + "'");
  } else if (kind == RegionKind::passive_solid) {
    for (int e = 0; e < mesh.n_elements(); ++e)
      if (box.contains(mesh.element_centroid(e), tol)) region.element_set.push_back(e);
    if (region.element_set.empty())
      throw std::runtime_error("select_region: no elements inside box for region '" + name + "'");
  } else {
    // Neumann: boundary faces whose center lies inside the box. On a box grid a
    // face is on the boundary iff all its nodes touch a domain face plane.
    const auto& faces = face_table(mesh.dimension);
    const int fn = mesh.dimension == 2 ? 2 : 4;
    for (int e = 0; e < mesh.n_elements(); ++e) {
      for (const auto& fd : faces) {
        Eigen::Vector3d center = Eigen::Vector3d::Zero();
        bool on_boundary = true;
        for (int a = 0; a < fn; ++a) {
          const Eigen::Vector3d& x = mesh.nodes[mesh.conn[e][fd.local[a]]];
          center += x;
          // node must lie on the domain plane the face normal points to
          for (int d = 0; d < mesh.dimension; ++d) {
            if (fd.normal[d] > 0.5 && std::abs(x[d] - mesh.extents[d]) > tol) on_boundary = false;
            if (fd.normal[d] < -0.5 && std::abs(x[d]) > tol) on_boundary = false;
          }
        }
        if (!on_boundary) continue;
        center /= fn;
        if (!box.contains(center, tol)) continue;
        BoundaryFace bf;
        bf.element = e;
        bf.outward_normal = fd.normal;
        for (int a = 0; a < fn; ++a) bf.nodes[a] = mesh.conn[e][fd.local[a]];
        region.faces.push_back(bf);
      }
    }
    if (region.faces.empty())
      throw std::runtime_error("select_region: no boundary faces inside box for region '" + name +
                               "'");
  }
  return region;
}

DofMap build_dof_map(const Mesh& mesh, const std::vector<BoundaryRegion>& regions,
                     bool with_lambda) {
  const int dim = mesh.dimension;
  const int nn = mesh.n_nodes();
  DofMap map;
  map.dimension = dim;
  map.has_lambda = with_lambda;
  map.u_index.assign(static_cast<size_t>(dim) * nn, 0);
  map.phi_index.assign(nn, 0);
  map.u_value.assign(static_cast<size_t>(dim) * nn, 0.0);
  map.phi_value.assign(nn, 0.0);

  for (const auto& region : regions) {
    if (region.kind == RegionKind::dirichlet_displacement) {
      for (int n : region.node_set)
        for (int d = 0; d < dim; ++d)
          if (region.fixed_components[d]) {
            map.u_index[static_cast<size_t>(dim) * n + d] = -1;
            map.u_value[static_cast<size_t>(dim) * n + d] = region.value[d];
          }
    } else if (region.kind == RegionKind::passive_solid) {
      for (int e : region.element_set)
        for (int a = 0; a < mesh.nodes_per_element(); ++a) {
          const int n = mesh.conn[e][a];
          map.phi_index[n] = -1;
          map.phi_value[n] = region.phi_value;
        }
    }
  }

  int next = 0;
  for (int n = 0; n < nn; ++n) {
    for (int d = 0; d < dim; ++d) {
      auto& idx = map.u_index[static_cast<size_t>(dim) * n + d];
      idx = (idx == -1) ? -1 : next++;
    }
    auto& pidx = map.phi_index[n];
    pidx = (pidx == -1) ? -1 : next++;
  }
  map.n_free = next;
  map.n_constrained = static_cast<int>((dim + 1) * nn) - next;
  return map;
}

} // namespace topopt
