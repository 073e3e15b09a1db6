#include "nnmd/decomp.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <thread>

#include "nnmd/neighbor.hpp"

namespace nnmd {

// ---------------------------------------------------------------------------
// Rank grid
// ---------------------------------------------------------------------------

RankGrid partition_ranks(const SimBox& box, int n_ranks, double min_edge) {
  require(n_ranks >= 1, "partition_ranks: n_ranks must be >= 1");
  struct Candidate {
    std::array<int, 3> dims;
    double surface;
    std::array<int, 3> sorted_desc;
  };
  std::vector<Candidate> candidates;
  for (int px = 1; px <= n_ranks; ++px) {
    if (n_ranks % px) continue;
    const int rest = n_ranks / px;
    for (int py = 1; py <= rest; ++py) {
      if (rest % py) continue;
      const int pz = rest / py;
      const double a = box.lengths.x / px;
      const double b = box.lengths.y / py;
      const double c = box.lengths.z / pz;
      if (std::min({a, b, c}) < min_edge) continue;
      Candidate cand;
      cand.dims = {px, py, pz};
      cand.surface = 2.0 * (a * b + b * c + c * a);
      cand.sorted_desc = {px, py, pz};
      std::sort(cand.sorted_desc.begin(), cand.sorted_desc.end(),
                std::greater<int>());
      candidates.push_back(cand);
    }
  }
  require(!candidates.empty(),
          "partition_ranks: no factorization of " + std::to_string(n_ranks) +
              " ranks fits the halo constraints of this box; use a smaller "
              "rank count");
  const auto best = std::min_element(
      candidates.begin(), candidates.end(),
      [](const Candidate& x, const Candidate& y) {
        if (x.surface != y.surface) return x.surface < y.surface;
        if (x.sorted_desc != y.sorted_desc)
          return x.sorted_desc < y.sorted_desc;  // more balanced dims win
        return x.dims > y.dims;  // then lexicographically largest
      });
  return RankGrid{best->dims};
}

int owner_rank_of(const Vec3& wrapped_pos, const RankGrid& grid,
                  const SimBox& box) {
  std::array<int, 3> c;
  for (int a = 0; a < 3; ++a) {
    const double edge = box.lengths[a] / grid.dims[a];
    c[a] = std::clamp(static_cast<int>(std::floor(wrapped_pos[a] / edge)), 0,
                      grid.dims[a] - 1);
  }
  return (c[0] * grid.dims[1] + c[1]) * grid.dims[2] + c[2];
}

std::vector<std::vector<int>> assign_local(const AtomSet& atoms,
                                           const RankGrid& grid,
                                           const SimBox& box) {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(grid.n_ranks()));
  for (std::size_t i = 0; i < atoms.size(); ++i)
    out[static_cast<std::size_t>(owner_rank_of(atoms.positions[i], grid, box))]
        .push_back(static_cast<int>(i));
  return out;
}

Subdomain make_subdomain(const RankGrid& grid, int rank, const SimBox& box) {
  require(rank >= 0 && rank < grid.n_ranks(), "make_subdomain: bad rank");
  Subdomain sub;
  sub.rank = rank;
  const int iz = rank % grid.dims[2];
  const int iy = (rank / grid.dims[2]) % grid.dims[1];
  const int ix = rank / (grid.dims[1] * grid.dims[2]);
  const std::array<int, 3> idx{ix, iy, iz};
  for (int a = 0; a < 3; ++a) {
    const double edge = box.lengths[a] / grid.dims[a];
    sub.lo[a] = idx[a] * edge;
    sub.hi[a] = (idx[a] + 1) * edge;
  }
  return sub;
}

std::vector<GhostAtom> build_halo(const AtomSet& atoms, const Subdomain& sub,
                                  double thickness, const SimBox& box,
                                  const std::vector<int>& owner_by_atom) {
  for (int a = 0; a < 3; ++a)
    require(!box.periodic[a] || thickness <= box.lengths[a],
            "build_halo: thickness exceeds the box (single image layer "
            "insufficient)");
  std::vector<GhostAtom> ghosts;
  Vec3 lo, hi;
  for (int a = 0; a < 3; ++a) {
    const double guard = kHaloSlabGuard * box.lengths[a];
    lo[a] = sub.lo[a] - thickness - guard;
    hi[a] = sub.hi[a] + thickness + guard;
  }
  const int sx = box.periodic[0] ? 1 : 0;
  const int sy = box.periodic[1] ? 1 : 0;
  const int sz = box.periodic[2] ? 1 : 0;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    const Vec3& p = atoms.positions[i];
    for (int kx = -sx; kx <= sx; ++kx)
      for (int ky = -sy; ky <= sy; ++ky)
        for (int kz = -sz; kz <= sz; ++kz) {
          const IVec3 shift{kx, ky, kz};
          if (shift == kZeroShift &&
              owner_by_atom[i] == sub.rank)
            continue;
          const Vec3 q{p.x + kx * box.lengths.x, p.y + ky * box.lengths.y,
                       p.z + kz * box.lengths.z};
          if (q.x >= lo.x && q.x < hi.x && q.y >= lo.y && q.y < hi.y &&
              q.z >= lo.z && q.z < hi.z)
            ghosts.push_back({static_cast<int>(i), owner_by_atom[i], shift, q});
        }
  }
  // atom-major, shift-lex order falls out of the loop structure
  return ghosts;
}

// ---------------------------------------------------------------------------
// Collectives
// ---------------------------------------------------------------------------

const char* collective_name(CollectiveKind k) {
  switch (k) {
    case CollectiveKind::gather_positions: return "gather_positions";
    case CollectiveKind::ghost_force_route: return "ghost_force_route";
    case CollectiveKind::reduce_forces: return "reduce_forces";
  }
  return "unknown";
}

const char* scheme_name(DdScheme s) {
  return s == DdScheme::masked_reduction ? "masked-reduction" : "wide-halo";
}

std::uint64_t CollectiveLedger::total_bytes(CollectiveKind kind) const {
  std::uint64_t total = 0;
  for (const auto& r : records_)
    if (r.kind == kind) total += r.bytes;
  return total;
}

std::vector<int> gather_positions(
    const std::vector<std::vector<int>>& per_rank_ids, const AtomSet& atoms,
    CollectiveLedger* ledger, long step) {
  std::vector<char> seen(atoms.size(), 0);
  std::size_t count = 0;
  for (const auto& ids : per_rank_ids)
    for (int i : ids) {
      require(i >= 0 && i < static_cast<int>(atoms.size()),
              "gather_positions: id out of range");
      require(!seen[static_cast<std::size_t>(i)],
              "gather_positions: partition violation (duplicate atom across "
              "ranks)");
      seen[static_cast<std::size_t>(i)] = 1;
      ++count;
    }
  require(count == atoms.size(),
          "gather_positions: partition violation (missing atoms)");
  if (ledger)
    ledger->add(step, CollectiveKind::gather_positions,
                static_cast<std::uint64_t>(atoms.size()) *
                    static_cast<std::uint64_t>(ledger->layout.gather_bytes_per_atom),
                static_cast<int>(per_rank_ids.size()));
  std::vector<int> order(atoms.size());
  for (std::size_t i = 0; i < atoms.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return atoms.global_ids[static_cast<std::size_t>(a)] <
           atoms.global_ids[static_cast<std::size_t>(b)];
  });
  return order;
}

std::vector<Vec3> reduce_forces(
    const std::vector<std::vector<Vec3>>& per_rank_forces,
    CollectiveLedger* ledger, long step) {
  require(!per_rank_forces.empty(), "reduce_forces: no contributions");
  const std::size_t n = per_rank_forces.front().size();
  std::vector<Vec3> out(n);
  for (const auto& contrib : per_rank_forces) {
    require(contrib.size() == n, "reduce_forces: shape mismatch across ranks");
    for (std::size_t i = 0; i < n; ++i) out[i] += contrib[i];
  }
  if (ledger)
    ledger->add(step, CollectiveKind::reduce_forces,
                static_cast<std::uint64_t>(n) *
                    static_cast<std::uint64_t>(ledger->layout.reduce_bytes_per_atom),
                static_cast<int>(per_rank_forces.size()));
  return out;
}

// ---------------------------------------------------------------------------
// Decomposed evaluation
// ---------------------------------------------------------------------------

namespace {

struct ClusterMember {
  int atom = 0;
  IVec3 shift = kZeroShift;
  Vec3 pos{};
  bool center = false;
};

struct RouteEntry {
  int atom = 0;
  IVec3 image = kZeroShift;
  Vec3 grad{};
};

struct RankOutput {
  double energy = 0.0;
  ForceAccumulator acc{0};
  std::vector<std::pair<int, double>> local_energies;  // (atom, e)
  std::vector<RouteEntry> routed;
  RankStats stats;
};

void run_rank_tasks(int n_ranks, int workers,
                    const std::function<void(int)>& task) {
  workers = std::max(1, std::min(workers, n_ranks));
  if (workers == 1) {
    for (int r = 0; r < n_ranks; ++r) task(r);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (int r = next.fetch_add(1); r < n_ranks; r = next.fetch_add(1))
          task(r);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

bool inside_slab(const Vec3& q, const Vec3& lo, const Vec3& hi) {
  return q.x >= lo.x && q.x < hi.x && q.y >= lo.y && q.y < hi.y &&
         q.z >= lo.z && q.z < hi.z;
}

}  // namespace

DdResult dd_evaluate(const AtomSet& atoms, const SimBox& box,
                     const DPModel& model, int n_ranks, DdScheme scheme,
                     int workers, TraceSink* trace, CollectiveLedger* ledger,
                     long step) {
  model.validate();
  box.validate(model.rc);
  require(n_ranks >= 1, "dd_evaluate: n_ranks must be >= 1");
  for (int z : atoms.species)
    require(z >= 0 && z < model.n_species,
            "dd_evaluate: species id outside the model's species table");
  const double thickness =
      scheme == DdScheme::masked_reduction ? model.rc : 2.0 * model.rc;
  const RankGrid grid = partition_ranks(box, n_ranks, thickness);
  for (int a = 0; a < 3; ++a)
    require(box.lengths[a] / grid.dims[a] >= thickness,
            "dd_evaluate: subdomain edge shorter than the halo thickness");

  const std::size_t n = atoms.size();
  const int R = grid.n_ranks();

  // Ownership and the position gather (one collective).
  std::vector<int> owner(n);
  {
    ScopedSpan span(trace, -1, Phase::gather_positions, step);
    for (std::size_t i = 0; i < n; ++i)
      owner[i] = owner_rank_of(atoms.positions[i], grid, box);
    std::vector<std::vector<int>> per_rank(static_cast<std::size_t>(R));
    for (std::size_t i = 0; i < n; ++i)
      per_rank[static_cast<std::size_t>(owner[i])].push_back(
          static_cast<int>(i));
    gather_positions(per_rank, atoms, ledger, step);
  }

  std::vector<RankOutput> outputs(static_cast<std::size_t>(R));

  auto rank_task = [&](int rank) {
    RankOutput& out = outputs[static_cast<std::size_t>(rank)];
    out.stats.rank = rank;

    // --- virtual decomposition: locals + halo ---
    const double t_dd0 = TraceSink::now();
    out.acc = ForceAccumulator(n);
    Subdomain sub = make_subdomain(grid, rank, box);
    for (std::size_t i = 0; i < n; ++i)
      if (owner[i] == rank) sub.local_ids.push_back(static_cast<int>(i));
    sub.ghosts = build_halo(atoms, sub, thickness, box, owner);

    std::vector<ClusterMember> members;
    members.reserve(sub.local_ids.size() + sub.ghosts.size());
    for (int i : sub.local_ids)
      members.push_back({i, kZeroShift,
                         atoms.positions[static_cast<std::size_t>(i)], true});
    Vec3 rc_lo, rc_hi;
    for (int a = 0; a < 3; ++a) {
      const double guard = kHaloSlabGuard * box.lengths[a];
      rc_lo[a] = sub.lo[a] - model.rc - guard;
      rc_hi[a] = sub.hi[a] + model.rc + guard;
    }
    for (const auto& g : sub.ghosts) {
      const bool first_layer = inside_slab(g.pos, rc_lo, rc_hi);
      members.push_back({g.atom, g.shift, g.pos,
                         scheme == DdScheme::wide_halo && first_layer});
    }
    // centers in ascending (atom, shift) order; per-target force
    // contributions then arrive center-major exactly like the
    // single-domain evaluation
    std::vector<int> center_order;
    for (std::size_t mi = 0; mi < members.size(); ++mi)
      if (members[mi].center) center_order.push_back(static_cast<int>(mi));
    std::sort(center_order.begin(), center_order.end(), [&](int a, int b) {
      if (members[static_cast<std::size_t>(a)].atom !=
          members[static_cast<std::size_t>(b)].atom)
        return members[static_cast<std::size_t>(a)].atom <
               members[static_cast<std::size_t>(b)].atom;
      return members[static_cast<std::size_t>(a)].shift <
             members[static_cast<std::size_t>(b)].shift;
    });
    out.stats.locals = static_cast<int>(sub.local_ids.size());
    out.stats.ghosts = static_cast<int>(sub.ghosts.size());
    out.stats.centers = static_cast<int>(center_order.size());
    const double t_dd1 = TraceSink::now();
    out.stats.dd_seconds = t_dd1 - t_dd0;
    if (trace) trace->record_span(rank, Phase::dd_build, t_dd0, t_dd1, step);

    // --- cluster neighbor search (cell grid over the materialized images) ---
    const double t_nb0 = TraceSink::now();
    Vec3 bb_lo = members.empty() ? Vec3{} : members.front().pos;
    Vec3 bb_hi = bb_lo;
    for (const auto& mrec : members)
      for (int a = 0; a < 3; ++a) {
        bb_lo[a] = std::min(bb_lo[a], mrec.pos[a]);
        bb_hi[a] = std::max(bb_hi[a], mrec.pos[a]);
      }
    std::vector<Vec3> mpos(members.size());
    for (std::size_t mi = 0; mi < members.size(); ++mi)
      mpos[mi] = members[mi].pos;
    const CellGrid cells = build_cell_grid(mpos, bb_lo, bb_hi, model.rc);
    // rows per member are built lazily per center below
    const double t_nb1 = TraceSink::now();
    out.stats.neighbor_seconds = t_nb1 - t_nb0;
    if (trace)
      trace->record_span(rank, Phase::neighbor_build, t_nb0, t_nb1, step);

    // --- inference: per-center energy and exact gradients ---
    const double t_inf0 = TraceSink::now();
    auto wsp = new_workspace();
    std::vector<EnvRow> rows;
    const double rc2 = model.rc * model.rc;
    for (int ci : center_order) {
      const ClusterMember& c = members[static_cast<std::size_t>(ci)];
      rows.clear();
      const auto cc = cells.cell_of(c.pos);
      for (int ox = -1; ox <= 1; ++ox)
        for (int oy = -1; oy <= 1; ++oy)
          for (int oz = -1; oz <= 1; ++oz) {
            const int cx = cc[0] + ox, cy = cc[1] + oy, cz = cc[2] + oz;
            if (cx < 0 || cy < 0 || cz < 0 || cx >= cells.dims[0] ||
                cy >= cells.dims[1] || cz >= cells.dims[2])
              continue;
            for (int mj :
                 cells.cells[static_cast<std::size_t>(cells.flat(cx, cy, cz))]) {
              if (mj == ci) continue;
              const ClusterMember& mrec = members[static_cast<std::size_t>(mj)];
              const IVec3 rel = mrec.shift - c.shift;
              const Vec3 d{
                  image_delta(atoms.positions[static_cast<std::size_t>(mrec.atom)].x,
                              atoms.positions[static_cast<std::size_t>(c.atom)].x,
                              rel[0], box.lengths.x),
                  image_delta(atoms.positions[static_cast<std::size_t>(mrec.atom)].y,
                              atoms.positions[static_cast<std::size_t>(c.atom)].y,
                              rel[1], box.lengths.y),
                  image_delta(atoms.positions[static_cast<std::size_t>(mrec.atom)].z,
                              atoms.positions[static_cast<std::size_t>(c.atom)].z,
                              rel[2], box.lengths.z)};
              if (norm2(d) >= rc2) continue;
              if (mrec.atom == c.atom && rel == kZeroShift) continue;
              EnvRow row;
              row.d = d;
              row.species = atoms.species[static_cast<std::size_t>(mrec.atom)];
              row.member = mj;
              row.image = rel;
              row.sort_id = atoms.global_ids[static_cast<std::size_t>(mrec.atom)];
              rows.push_back(row);
            }
          }
      sort_env_rows(rows);
      if (static_cast<int>(rows.size()) > model.n_max)
        throw CapacityError(
            "dd_evaluate: neighbor overflow at atom id " +
            std::to_string(
                atoms.global_ids[static_cast<std::size_t>(c.atom)]) +
            " on rank " + std::to_string(rank));
      const CenterGrads cg = evaluate_center(
          model, atoms.species[static_cast<std::size_t>(c.atom)], rows, *wsp,
          true);

      const bool c_owned = c.shift == kZeroShift && owner[static_cast<std::size_t>(c.atom)] == rank;
      if (c_owned) {
        out.energy += cg.energy;
        out.local_energies.emplace_back(c.atom, cg.energy);
      }
      // self term lands on the center's own member; for ghost centers that
      // member is a ghost and the term is discarded (the owner computes it)
      if (c_owned) out.acc.add(c.atom, kZeroShift, cg.center_grad);
      for (std::size_t k = 0; k < rows.size(); ++k) {
        const ClusterMember& tgt =
            members[static_cast<std::size_t>(rows[k].member)];
        if (scheme == DdScheme::wide_halo) {
          // keep only contributions landing on this rank's local members
          if (tgt.shift != kZeroShift ||
              owner[static_cast<std::size_t>(tgt.atom)] != rank)
            continue;
        }
        out.acc.add(tgt.atom, rows[k].image, cg.row_grads[k]);
      }
    }
    const double t_inf1 = TraceSink::now();
    out.stats.inference_seconds = t_inf1 - t_inf0;
    if (trace) trace->record_span(rank, Phase::inference, t_inf0, t_inf1, step);

    // --- extract routed ghost-force partials (masked scheme) ---
    if (scheme == DdScheme::masked_reduction) {
      for (std::size_t t = 0; t < n; ++t) {
        for (const auto& [img, g] : out.acc.ordered_partials(static_cast<int>(t))) {
          const bool base = img == kZeroShift && owner[t] == rank;
          if (!base) out.routed.push_back({static_cast<int>(t), img, g});
        }
      }
      out.stats.route_entries = out.routed.size();
    }
  };

  run_rank_tasks(R, workers, rank_task);

  // --- ghost-force route (masked scheme only; second collective's partner) ---
  std::uint64_t total_routed = 0;
  if (scheme == DdScheme::masked_reduction) {
    ScopedSpan span(trace, -1, Phase::ghost_force_route, step);
    for (const auto& out : outputs) total_routed += out.routed.size();
    if (ledger)
      ledger->add(step, CollectiveKind::ghost_force_route,
                  total_routed *
                      static_cast<std::uint64_t>(ledger->layout.route_bytes_per_entry),
                  R);
  }

  // --- assembly + force reduction ---
  DdResult result;
  result.grid = grid;
  result.atom_energy.assign(n, 0.0);
  result.forces.assign(n, Vec3{});
  {
    ScopedSpan span(trace, -1, Phase::reduce_forces, step);
    for (int r = 0; r < R; ++r) {
      result.energy += outputs[static_cast<std::size_t>(r)].energy;
      for (const auto& [atom, e] :
           outputs[static_cast<std::size_t>(r)].local_energies)
        result.atom_energy[static_cast<std::size_t>(atom)] = e;
    }

    if (scheme == DdScheme::wide_halo) {
      // each owner holds the complete force for its locals
      std::vector<std::vector<Vec3>> per_rank(static_cast<std::size_t>(R));
      for (int r = 0; r < R; ++r) {
        auto& fr = per_rank[static_cast<std::size_t>(r)];
        fr.assign(n, Vec3{});
        const auto& acc = outputs[static_cast<std::size_t>(r)].acc;
        for (std::size_t t = 0; t < n; ++t) {
          if (owner[t] != r) continue;
          Vec3 sum{};
          for (const auto& [img, g] : acc.ordered_partials(static_cast<int>(t)))
            sum += g;
          fr[t] = -sum;
        }
      }
      result.forces = reduce_forces(per_rank, ledger, step);
    } else {
      // merge per target: owner's zero-image partial first, then routed
      // partials ordered by (image, contributing rank)
      struct Incoming {
        IVec3 img;
        int rank;
        Vec3 g;
      };
      std::vector<std::vector<Incoming>> incoming(n);
      for (int r = 0; r < R; ++r)
        for (const auto& e : outputs[static_cast<std::size_t>(r)].routed)
          incoming[static_cast<std::size_t>(e.atom)].push_back(
              {e.image, r, e.grad});
      std::vector<std::vector<Vec3>> per_rank(static_cast<std::size_t>(R));
      for (int r = 0; r < R; ++r)
        per_rank[static_cast<std::size_t>(r)].assign(n, Vec3{});
      for (std::size_t t = 0; t < n; ++t) {
        const int r = owner[t];
        Vec3 sum{};
        for (const auto& [img, g] :
             outputs[static_cast<std::size_t>(r)].acc.ordered_partials(
                 static_cast<int>(t)))
          if (img == kZeroShift) sum += g;
        auto& inc = incoming[t];
        std::stable_sort(inc.begin(), inc.end(),
                         [](const Incoming& a, const Incoming& b) {
                           const bool az = a.img == kZeroShift;
                           const bool bz = b.img == kZeroShift;
                           if (az != bz) return az;
                           if (a.img != b.img) return a.img < b.img;
                           return a.rank < b.rank;
                         });
        for (const auto& e : inc) sum += e.g;
        per_rank[static_cast<std::size_t>(r)][t] = -sum;
      }
      result.forces = reduce_forces(per_rank, ledger, step);
    }
  }

  for (auto& out : outputs) result.stats.push_back(out.stats);
  return result;
}

}  // namespace nnmd
