#include "perfowave/fv_mesh.hpp"

#include <cmath>
#include <map>
#include <tuple>

namespace perfowave {

std::int64_t Lattice::node_count() const {
  std::int64_t n = 1;
  for (int a = 0; a < dim; ++a) n *= nodes[a];
  return n;
}

std::int64_t Lattice::cell_count() const {
  std::int64_t n = 1;
  for (int a = 0; a < dim; ++a) n *= cells(a);
  return n;
}

std::int64_t Lattice::node_id(const std::array<int, 3>& idx) const {
  std::int64_t id = 0;
  for (int a = dim - 1; a >= 0; --a) id = id * nodes[a] + idx[a];
  return id;
}

std::array<int, 3> Lattice::node_index(std::int64_t id) const {
  std::array<int, 3> idx{0, 0, 0};
  for (int a = 0; a < dim; ++a) {
    idx[a] = static_cast<int>(id % nodes[a]);
    id /= nodes[a];
  }
  return idx;
}

std::int64_t Lattice::cell_id(const std::array<int, 3>& idx) const {
  std::int64_t id = 0;
  for (int a = dim - 1; a >= 0; --a) id = id * cells(a) + idx[a];
  return id;
}

std::array<int, 3> Lattice::cell_index(std::int64_t id) const {
  std::array<int, 3> idx{0, 0, 0};
  for (int a = 0; a < dim; ++a) {
    idx[a] = static_cast<int>(id % cells(a));
    id /= cells(a);
  }
  return idx;
}

std::int64_t Lattice::cell_at(std::array<int, 3> idx) const {
  for (int a = 0; a < dim; ++a) {
    const int n = cells(a);
    if (periodic) {
      idx[a] = ((idx[a] % n) + n) % n;
    } else if (idx[a] < 0 || idx[a] >= n) {
      return -1;
    }
  }
  return cell_id(idx);
}

std::int64_t Lattice::node_at(std::array<int, 3> idx) const {
  for (int a = 0; a < dim; ++a) {
    const int n = nodes[a];
    if (periodic) {
      idx[a] = ((idx[a] % n) + n) % n;
    } else if (idx[a] < 0 || idx[a] >= n) {
      return -1;
    }
  }
  return node_id(idx);
}

FvMesh assemble_fv_mesh(const Lattice& lattice, const std::vector<std::uint8_t>& cell_fluid) {
  const int d = lattice.dim;
  const double h = lattice.h;
  const double cell_volume = std::pow(h, d);
  const double face_area = std::pow(h, d - 1);
  const int corners = 1 << d;
  const int face_corners = 1 << (d - 1);

  FvMesh mesh;
  const auto n_nodes = lattice.node_count();
  mesh.node_volume.assign(static_cast<std::size_t>(n_nodes), 0.0);

  for (std::int64_t id = 0; id < n_nodes; ++id) {
    const auto p = lattice.node_index(id);
    int fluid = 0;
    for (int off = 0; off < corners; ++off) {
      auto c = p;
      for (int a = 0; a < d; ++a) c[a] -= (off >> a) & 1;
      const auto cid = lattice.cell_at(c);
      if (cid >= 0 && cell_fluid[static_cast<std::size_t>(cid)]) ++fluid;
    }
    mesh.node_volume[static_cast<std::size_t>(id)] = cell_volume * fluid / corners;

    for (int axis = 0; axis < d; ++axis) {
      auto q = p;
      ++q[axis];
      const auto qid = lattice.node_at(q);
      if (qid < 0) continue;
      // cells sharing the edge: c[axis] = p[axis], other axes offset 0 or -1
      int shared = 0;
      for (int off = 0; off < face_corners; ++off) {
        auto c = p;
        int bit = 0;
        for (int a = 0; a < d; ++a) {
          if (a == axis) continue;
          c[a] -= (off >> bit) & 1;
          ++bit;
        }
        const auto cid = lattice.cell_at(c);
        if (cid >= 0 && cell_fluid[static_cast<std::size_t>(cid)]) ++shared;
      }
      if (shared > 0) {
        mesh.edges.push_back({id, qid, axis, face_area * shared / face_corners / h});
      }
    }
  }

  // Hole surface: faces between a fluid cell and a solid cell.  Each face
  // element is split evenly among its 2^(d-1) corner nodes.
  std::map<std::tuple<std::int64_t, int, int>, std::size_t> piece_index;
  const double piece_weight = face_area / face_corners;
  const auto n_cells = lattice.cell_count();
  for (std::int64_t cid = 0; cid < n_cells; ++cid) {
    const auto c = lattice.cell_index(cid);
    for (int axis = 0; axis < d; ++axis) {
      auto cn = c;
      ++cn[axis];
      const auto nid = lattice.cell_at(cn);
      if (nid < 0) continue;
      const bool here = cell_fluid[static_cast<std::size_t>(cid)] != 0;
      const bool there = cell_fluid[static_cast<std::size_t>(nid)] != 0;
      if (here == there) continue;
      const int sign = here ? +1 : -1;
      const std::int64_t solid = here ? nid : cid;
      for (int off = 0; off < face_corners; ++off) {
        auto q = c;
        q[axis] += 1;
        int bit = 0;
        for (int a = 0; a < d; ++a) {
          if (a == axis) continue;
          q[a] += (off >> bit) & 1;
          ++bit;
        }
        const auto node = lattice.node_at(q);
        const auto key = std::make_tuple(node, axis, sign);
        auto it = piece_index.find(key);
        if (it == piece_index.end()) {
          piece_index.emplace(key, mesh.boundary.size());
          mesh.boundary.push_back({node, axis, sign, piece_weight, solid});
        } else {
          mesh.boundary[it->second].weight += piece_weight;
        }
      }
    }
  }
  return mesh;
}

}  // namespace perfowave
