// Shared helpers for the unit and acceptance suites: seeded random
// configurations, small models, and independent oracles.
#pragma once

#include <random>
#include <vector>

#include "nnmd/classical.hpp"
#include "nnmd/deeppot.hpp"
#include "nnmd/system.hpp"

namespace nnmd::testing {

struct RandomConfig {
  SimBox box;
  AtomSet atoms;
};

/// Uniform random positions with a minimum-separation rejection pass so the
/// 1/r radial weight stays in a sane range.
inline RandomConfig random_config(std::mt19937_64& rng, int n, double density,
                                  int n_species, double min_sep = 0.5) {
  RandomConfig cfg;
  const double L = std::cbrt(static_cast<double>(n) / density);
  cfg.box.lengths = {L, L, L};
  std::uniform_real_distribution<double> upos(0.0, L);
  std::uniform_int_distribution<int> uspec(0, n_species - 1);
  const double min_sep2 = min_sep * min_sep;
  for (int i = 0; i < n; ++i) {
    Vec3 r;
    bool ok = false;
    for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
      r = {upos(rng), upos(rng), upos(rng)};
      ok = true;
      for (std::size_t j = 0; j < cfg.atoms.size(); ++j) {
        const Vec3 d = minimum_image(r - cfg.atoms.positions[j], cfg.box);
        if (norm2(d) < min_sep2) {
          ok = false;
          break;
        }
      }
    }
    cfg.atoms.push_back(i, uspec(rng), r);
  }
  return cfg;
}

/// Small random-weight model; rc chosen by the caller to fit the box.
inline DPModel test_model(double rc, int n_species = 3, int n_attn = 3,
                          std::uint64_t seed = 12345) {
  ModelSpec spec;
  spec.rc = rc;
  spec.rcs = 0.55 * rc;
  spec.n_max = 64;
  spec.n_species = n_species;
  spec.type_dim = 4;
  spec.n_feat = 16;
  spec.n_reduced = 4;
  spec.n_attn = n_attn;
  spec.attn_dim = 16;
  spec.embed_hidden = {16};
  spec.fit_hidden = {32, 32};
  return init_model(spec, seed);
}

/// Central finite difference of the total DP energy with respect to one
/// position component; the oracle for the analytic forces.
inline double fd_force_component(const AtomSet& atoms, const SimBox& box,
                                 const DPModel& model, std::size_t atom,
                                 int comp, double h) {
  auto energy_at = [&](double delta) {
    AtomSet moved = atoms;
    moved.positions[atom][comp] += delta;
    const NeighborList list =
        build_neighbor_list(moved, box, model.rc, ListMode::full);
    return evaluate_dp(moved, box, list, model).energy;
  };
  return -(energy_at(h) - energy_at(-h)) / (2.0 * h);
}

inline double fd_classical_force_component(const AtomSet& atoms,
                                           const SimBox& box,
                                           const LJParams& p, std::size_t atom,
                                           int comp, double h) {
  auto energy_at = [&](double delta) {
    AtomSet moved = atoms;
    moved.positions[atom][comp] += delta;
    const NeighborList list =
        build_neighbor_list(moved, box, p.rc, ListMode::half);
    return evaluate_classical(moved, box, list, p).energy;
  };
  return -(energy_at(h) - energy_at(-h)) / (2.0 * h);
}

inline double rel_err(double a, double b, double floor_scale = 1.0) {
  return std::abs(a - b) / std::max(std::abs(b), floor_scale);
}

}  // namespace nnmd::testing
