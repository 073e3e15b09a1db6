#pragma once

#include <vector>

#include "nnmd/system.hpp"

namespace nnmd {

enum class ListMode { full, half };

/// One directed neighbor record: atom index plus the periodic image shift s
/// such that the interacting image sits at r_j + s*L.
struct NeighborEntry {
  int index = 0;
  IVec3 shift = kZeroShift;

  friend bool operator==(const NeighborEntry&, const NeighborEntry&) = default;
  friend auto operator<=>(const NeighborEntry& a, const NeighborEntry& b) {
    if (auto c = a.index <=> b.index; c != 0) return c;
    return a.shift <=> b.shift;
  }
};

struct NeighborList {
  ListMode mode = ListMode::full;
  double rc = 0.0;
  int built_from = 0;
  std::vector<std::vector<NeighborEntry>> neighbors;

  friend bool operator==(const NeighborList&, const NeighborList&) = default;
};

/// Cell index structure over wrapped positions; half-open binning.
/// A cell_size larger than the smallest box edge degenerates to one cell
/// along that axis (valid, slow).
struct CellGrid {
  std::array<int, 3> dims{1, 1, 1};
  Vec3 origin{};      // lower corner of the binned region
  Vec3 cell_width{};  // >= cell_size per axis
  std::vector<std::vector<int>> cells;

  int cell_count() const { return dims[0] * dims[1] * dims[2]; }
  int flat(int cx, int cy, int cz) const {
    return (cx * dims[1] + cy) * dims[2] + cz;
  }
  std::array<int, 3> cell_of(const Vec3& r) const;
};

CellGrid build_cell_list(const AtomSet& atoms, const SimBox& box,
                         double cell_size);

/// Generic binning over an explicit set of positions and an explicit
/// bounding region (used for ghost clusters which extend past the box).
CellGrid build_cell_grid(const std::vector<Vec3>& positions, const Vec3& lo,
                         const Vec3& hi, double cell_size);

/// Cell-list neighbor search. Deterministic: rows sorted by (index, shift).
NeighborList build_neighbor_list(const AtomSet& atoms, const SimBox& box,
                                 double rc, ListMode mode);

/// O(N^2 * images) all-pairs scan; identical output to the cell-list build.
NeighborList brute_force_neighbors(const AtomSet& atoms, const SimBox& box,
                                   double rc, ListMode mode);

/// Flattens a full list to the equivalent half list (j < i convention).
NeighborList half_from_full(const NeighborList& full);

}  // namespace nnmd
