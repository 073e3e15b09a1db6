#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nnmd/deeppot.hpp"
#include "nnmd/system.hpp"
#include "nnmd/trace.hpp"

namespace nnmd {

// ---------------------------------------------------------------------------
// Rank grid and subdomains
// ---------------------------------------------------------------------------

struct RankGrid {
  std::array<int, 3> dims{1, 1, 1};
  int n_ranks() const { return dims[0] * dims[1] * dims[2]; }
};

/// Chooses the factorization p_x*p_y*p_z = n_ranks that minimizes the
/// subdomain surface area for the given box aspect. Factorizations whose
/// smallest subdomain edge is below min_edge are rejected; ties prefer the
/// most balanced dims, then the lexicographically largest.
RankGrid partition_ranks(const SimBox& box, int n_ranks, double min_edge = 0.0);

struct GhostAtom {
  int atom = 0;        // index into the gathered atom set
  int owner_rank = 0;
  IVec3 shift = kZeroShift;
  Vec3 pos{};          // materialized image position (binning only)
};

struct Subdomain {
  int rank = 0;
  Vec3 lo{}, hi{};                // half-open bounds per axis
  std::vector<int> local_ids;     // ascending atom indices
  std::vector<GhostAtom> ghosts;  // sorted by (atom, shift)
};

/// Half-open ownership: rank index per axis is floor(x / (L/p)).
int owner_rank_of(const Vec3& wrapped_pos, const RankGrid& grid,
                  const SimBox& box);

/// Per-rank local atom index sets; disjoint and covering by construction.
std::vector<std::vector<int>> assign_local(const AtomSet& atoms,
                                           const RankGrid& grid,
                                           const SimBox& box);

Subdomain make_subdomain(const RankGrid& grid, int rank, const SimBox& box);

/// Numerical guard added to the halo slab so ownership decided by floor()
/// arithmetic can never orphan a boundary neighbor (fraction of box length).
inline constexpr double kHaloSlabGuard = 1e-12;

/// Ghosts of one subdomain: every (atom, image) whose materialized position
/// falls inside the slab of the given thickness around the bounds, excluding
/// the rank's own atoms at zero shift. Deduplicated by construction and
/// sorted by (atom, shift).
std::vector<GhostAtom> build_halo(const AtomSet& atoms, const Subdomain& sub,
                                  double thickness, const SimBox& box,
                                  const std::vector<int>& owner_by_atom);

// ---------------------------------------------------------------------------
// Simulated collectives and the message ledger
// ---------------------------------------------------------------------------

enum class CollectiveKind { gather_positions, ghost_force_route, reduce_forces };
const char* collective_name(CollectiveKind k);

/// Per-atom payload sizes used for exact byte accounting. The defaults model
/// single-precision positions (12) + type (4) + index (4) for the gather,
/// single-precision forces (12) for the reduction, and id + packed shift +
/// force (4 + 4 + 12) per routed ghost entry.
struct PayloadLayout {
  int gather_bytes_per_atom = 20;
  int reduce_bytes_per_atom = 12;
  int route_bytes_per_entry = 20;
};

/// Commonly quoted per-atom payload figure, reported next to the computed
/// layout bytes in ledgers and summaries.
inline constexpr int kReferenceBytesPerAtom = 28;

struct CollectiveRecord {
  long step = 0;
  CollectiveKind kind = CollectiveKind::gather_positions;
  std::uint64_t bytes = 0;
  int participants = 0;
};

class CollectiveLedger {
 public:
  PayloadLayout layout;

  void add(long step, CollectiveKind kind, std::uint64_t bytes,
           int participants) {
    records_.push_back({step, kind, bytes, participants});
  }
  const std::vector<CollectiveRecord>& records() const { return records_; }
  std::uint64_t total_bytes(CollectiveKind kind) const;
  void clear() { records_.clear(); }

 private:
  std::vector<CollectiveRecord> records_;
};

/// Validates that the per-rank id lists partition the atom set, records one
/// gather on the ledger, and returns the replicated, id-ordered view.
/// Duplicate or missing ids raise a partition violation error.
std::vector<int> gather_positions(
    const std::vector<std::vector<int>>& per_rank_ids, const AtomSet& atoms,
    CollectiveLedger* ledger, long step);

/// Per-atom sum of the per-rank contributions in ascending rank order;
/// result replicated (returned once). Records one reduction on the ledger.
std::vector<Vec3> reduce_forces(
    const std::vector<std::vector<Vec3>>& per_rank_forces,
    CollectiveLedger* ledger, long step);

// ---------------------------------------------------------------------------
// Decomposed evaluation
// ---------------------------------------------------------------------------

/// masked_reduction: rc halo, ghost-center energies masked out, forces on
/// ghosts routed back to their owners (one extra collective).
/// wide_halo: 2*rc halo, first-layer ghosts evaluated as centers so local
/// forces are complete on-rank and no force routing is needed.
enum class DdScheme { masked_reduction, wide_halo };
const char* scheme_name(DdScheme s);

struct RankStats {
  int rank = 0;
  int locals = 0;
  int ghosts = 0;
  int centers = 0;
  std::uint64_t route_entries = 0;
  double dd_seconds = 0.0;
  double neighbor_seconds = 0.0;
  double inference_seconds = 0.0;
};

struct DdResult {
  double energy = 0.0;
  std::vector<Vec3> forces;
  std::vector<double> atom_energy;  // owner-computed per-atom energies
  RankGrid grid;
  std::vector<RankStats> stats;
};

/// One decomposed evaluation of the model over all atoms:
/// gather -> per-rank (assign + halo, cluster neighbor search, inference)
/// -> (masked_reduction: ghost-force route) -> reduce.
/// Rank workers run concurrently up to `workers` threads; the result is
/// independent of the schedule, and a one-rank decomposition reproduces the
/// single-domain evaluation bit for bit.
DdResult dd_evaluate(const AtomSet& atoms, const SimBox& box,
                     const DPModel& model, int n_ranks, DdScheme scheme,
                     int workers = 1, TraceSink* trace = nullptr,
                     CollectiveLedger* ledger = nullptr, long step = 0);

}  // namespace nnmd
