#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nnmd/error.hpp"
#include "nnmd/vec.hpp"

namespace nnmd {

/// Orthorhombic periodic simulation cell, reduced length units.
struct SimBox {
  Vec3 lengths{0.0, 0.0, 0.0};
  std::array<bool, 3> periodic{true, true, true};

  double volume() const { return lengths.x * lengths.y * lengths.z; }

  /// Checks lengths > 0 and, on periodic axes, length >= 2*rc so that the
  /// minimum-image convention is valid for the given cutoff.
  void validate(double rc = 0.0) const;
};

/// Particle state. All sequences have equal length; global ids are unique.
struct AtomSet {
  std::vector<std::int64_t> global_ids;
  std::vector<int> species;
  std::vector<Vec3> positions;
  std::vector<Vec3> velocities;
  std::vector<double> masses;

  std::size_t size() const { return positions.size(); }
  void validate() const;

  /// Appends one atom; velocity zero unless given.
  void push_back(std::int64_t id, int type, const Vec3& r,
                 const Vec3& v = {}, double mass = 1.0);
};

/// Nearest-image displacement. Periodic components shifted by +-L so that
/// |d_k| <= L_k/2; non-periodic components unchanged.
/// Precondition (debug-checked): |d_k| <= 1.5*L_k on periodic axes.
Vec3 minimum_image(const Vec3& d, const SimBox& box);

/// Wraps each periodic component into [0, L).
Vec3 wrap_position(const Vec3& r, const SimBox& box);

/// Wraps every atom position in place.
void wrap_positions(AtomSet& atoms, const SimBox& box);

/// Cubic lattice of n^3 atoms at the requested number density. Box edge is
/// n * (1/density)^(1/3) per axis; velocities zero; species assigned
/// cyclically from the pattern; unit masses.
std::pair<SimBox, AtomSet> lattice_init(int n_per_axis, double density,
                                        std::span<const int> species_pattern);

struct Frame {
  SimBox box;
  AtomSet atoms;
  long frame_index = 0;
};

/// Extended-XYZ trajectory IO. Positions are printed with 9 significant
/// digits; write-then-read reproduces them to that precision.
void write_xyz_frame(std::ostream& os, const AtomSet& atoms, const SimBox& box,
                     long frame_index);
void write_xyz(const std::string& path, const AtomSet& atoms,
               const SimBox& box, long frame_index, bool append = false);

/// Reads all frames; malformed input raises Error with a line number.
std::vector<Frame> read_xyz(const std::string& path);

}  // namespace nnmd
