#include "nnmd/neighbor.hpp"

#include <algorithm>
#include <cmath>

namespace nnmd {

namespace {

void check_cutoff(const SimBox& box, double rc) {
  require(rc > 0.0, "neighbor list: rc must be > 0");
  for (int a = 0; a < 3; ++a) {
    if (box.periodic[a]) {
      require(rc <= 0.5 * box.lengths[a],
              "neighbor list: rc exceeds half the box on a periodic axis "
              "(minimum-image violation)");
    }
  }
}

// A single image layer (and half-open cell binning) presumes wrapped input.
void check_wrapped(const AtomSet& atoms, const SimBox& box) {
  for (int a = 0; a < 3; ++a) {
    if (!box.periodic[a]) continue;
    for (const auto& r : atoms.positions)
      require(r[a] >= 0.0 && r[a] < box.lengths[a],
              "neighbor list: positions must be wrapped into [0, L) on "
              "periodic axes");
  }
}

void sort_rows(NeighborList& list) {
  for (auto& row : list.neighbors) std::sort(row.begin(), row.end());
}

}  // namespace

std::array<int, 3> CellGrid::cell_of(const Vec3& r) const {
  std::array<int, 3> c;
  for (int a = 0; a < 3; ++a) {
    int k = static_cast<int>(std::floor((r[a] - origin[a]) / cell_width[a]));
    c[a] = std::clamp(k, 0, dims[a] - 1);
  }
  return c;
}

CellGrid build_cell_grid(const std::vector<Vec3>& positions, const Vec3& lo,
                         const Vec3& hi, double cell_size) {
  require(cell_size > 0.0, "build_cell_grid: cell_size must be > 0");
  CellGrid grid;
  grid.origin = lo;
  for (int a = 0; a < 3; ++a) {
    const double extent = std::max(hi[a] - lo[a], cell_size);
    grid.dims[a] = std::max(1, static_cast<int>(std::floor(extent / cell_size)));
    grid.cell_width[a] = extent / grid.dims[a];
  }
  grid.cells.assign(static_cast<std::size_t>(grid.cell_count()), {});
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const auto c = grid.cell_of(positions[i]);
    grid.cells[static_cast<std::size_t>(grid.flat(c[0], c[1], c[2]))].push_back(
        static_cast<int>(i));
  }
  return grid;
}

CellGrid build_cell_list(const AtomSet& atoms, const SimBox& box,
                         double cell_size) {
  return build_cell_grid(atoms.positions, Vec3{0.0, 0.0, 0.0},
                         Vec3{box.lengths.x, box.lengths.y, box.lengths.z},
                         cell_size);
}

NeighborList build_neighbor_list(const AtomSet& atoms, const SimBox& box,
                                 double rc, ListMode mode) {
  check_cutoff(box, rc);
  check_wrapped(atoms, box);
  const int n = static_cast<int>(atoms.size());
  NeighborList list;
  list.mode = ListMode::full;
  list.rc = rc;
  list.built_from = n;
  list.neighbors.assign(static_cast<std::size_t>(n), {});
  if (n == 0) return mode == ListMode::full ? list : half_from_full(list);

  const CellGrid grid = build_cell_list(atoms, box, rc);
  const double rc2 = rc * rc;

  // Per-axis candidate (cell, shift) pairs for each source cell coordinate.
  // Tiny grids (1 or 2 cells along an axis) make distinct offsets map to the
  // same target cell with different image shifts; all pairs stay distinct.
  struct AxisTarget {
    int cell;
    int shift;
  };
  auto axis_targets = [&](int a, int c) {
    std::vector<AxisTarget> out;
    for (int o = -1; o <= 1; ++o) {
      int t = c + o;
      int s = 0;
      if (t < 0) {
        if (!box.periodic[a]) continue;
        t += grid.dims[a];
        s = -1;
      } else if (t >= grid.dims[a]) {
        if (!box.periodic[a]) continue;
        t -= grid.dims[a];
        s = 1;
      }
      out.push_back({t, s});
    }
    return out;
  };

  for (int cx = 0; cx < grid.dims[0]; ++cx) {
    const auto tx = axis_targets(0, cx);
    for (int cy = 0; cy < grid.dims[1]; ++cy) {
      const auto ty = axis_targets(1, cy);
      for (int cz = 0; cz < grid.dims[2]; ++cz) {
        const auto tz = axis_targets(2, cz);
        const auto& src = grid.cells[static_cast<std::size_t>(grid.flat(cx, cy, cz))];
        if (src.empty()) continue;
        for (const auto& ax : tx)
          for (const auto& ay : ty)
            for (const auto& az : tz) {
              const IVec3 shift{ax.shift, ay.shift, az.shift};
              const auto& dst =
                  grid.cells[static_cast<std::size_t>(grid.flat(ax.cell, ay.cell, az.cell))];
              for (int i : src)
                for (int j : dst) {
                  if (i == j && shift == kZeroShift) continue;
                  const Vec3 d{
                      image_delta(atoms.positions[j].x, atoms.positions[i].x,
                                  shift[0], box.lengths.x),
                      image_delta(atoms.positions[j].y, atoms.positions[i].y,
                                  shift[1], box.lengths.y),
                      image_delta(atoms.positions[j].z, atoms.positions[i].z,
                                  shift[2], box.lengths.z)};
                  if (norm2(d) < rc2)
                    list.neighbors[static_cast<std::size_t>(i)].push_back(
                        {j, shift});
                }
            }
      }
    }
  }
  sort_rows(list);
  return mode == ListMode::full ? list : half_from_full(list);
}

NeighborList brute_force_neighbors(const AtomSet& atoms, const SimBox& box,
                                   double rc, ListMode mode) {
  check_cutoff(box, rc);
  check_wrapped(atoms, box);
  const int n = static_cast<int>(atoms.size());
  NeighborList list;
  list.mode = ListMode::full;
  list.rc = rc;
  list.built_from = n;
  list.neighbors.assign(static_cast<std::size_t>(n), {});
  const double rc2 = rc * rc;

  const int sx = box.periodic[0] ? 1 : 0;
  const int sy = box.periodic[1] ? 1 : 0;
  const int sz = box.periodic[2] ? 1 : 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int kx = -sx; kx <= sx; ++kx)
        for (int ky = -sy; ky <= sy; ++ky)
          for (int kz = -sz; kz <= sz; ++kz) {
            const IVec3 shift{kx, ky, kz};
            if (i == j && shift == kZeroShift) continue;
            const Vec3 d{image_delta(atoms.positions[j].x,
                                     atoms.positions[i].x, kx, box.lengths.x),
                         image_delta(atoms.positions[j].y,
                                     atoms.positions[i].y, ky, box.lengths.y),
                         image_delta(atoms.positions[j].z,
                                     atoms.positions[i].z, kz, box.lengths.z)};
            if (norm2(d) < rc2)
              list.neighbors[static_cast<std::size_t>(i)].push_back({j, shift});
          }
  sort_rows(list);
  return mode == ListMode::full ? list : half_from_full(list);
}

NeighborList half_from_full(const NeighborList& full) {
  NeighborList half;
  half.mode = ListMode::half;
  half.rc = full.rc;
  half.built_from = full.built_from;
  half.neighbors.assign(full.neighbors.size(), {});
  for (std::size_t i = 0; i < full.neighbors.size(); ++i)
    for (const auto& e : full.neighbors[i])
      if (e.index < static_cast<int>(i)) half.neighbors[i].push_back(e);
  return half;
}

}  // namespace nnmd
