#pragma once

#include <vector>

#include "nnmd/neighbor.hpp"
#include "nnmd/system.hpp"

namespace nnmd {

/// Lennard-Jones parameters; one interaction table for all species.
struct LJParams {
  double epsilon = 1.0;
  double sigma = 1.0;
  double rc = 2.5;
  bool energy_shift = true;  // shift V so V(rc) = 0

  void validate() const {
    require(epsilon > 0.0 && sigma > 0.0, "LJParams: epsilon, sigma must be > 0");
    require(rc > sigma, "LJParams: rc must exceed sigma");
  }
};

struct PairValue {
  double energy = 0.0;
  double dV_dr = 0.0;
};

/// V(r) = 4 eps [(sigma/r)^12 - (sigma/r)^6], zero at and beyond rc.
/// r == 0 raises a singularity error.
PairValue lj_pair(double r, const LJParams& p);

struct ClassicalResult {
  double energy = 0.0;
  std::vector<Vec3> forces;
};

/// Evaluates the pair potential over a neighbor list built with the same rc
/// and box. Half mode scatters each pair force to both atoms; full mode
/// visits each pair twice with a 1/2 energy factor. Both agree to roundoff.
ClassicalResult evaluate_classical(const AtomSet& atoms, const SimBox& box,
                                   const NeighborList& nlist,
                                   const LJParams& p);

}  // namespace nnmd
