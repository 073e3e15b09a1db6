#include "nnmd/classical.hpp"

#include <cmath>

namespace nnmd {

PairValue lj_pair(double r, const LJParams& p) {
  require(r > 0.0, "lj_pair: r = 0 singularity");
  if (r >= p.rc) return {0.0, 0.0};
  const double sr2 = (p.sigma / r) * (p.sigma / r);
  const double sr6 = sr2 * sr2 * sr2;
  const double sr12 = sr6 * sr6;
  double v = 4.0 * p.epsilon * (sr12 - sr6);
  const double dv = 4.0 * p.epsilon * (-12.0 * sr12 + 6.0 * sr6) / r;
  if (p.energy_shift) {
    const double src = p.sigma / p.rc;
    const double src6 = src * src * src * src * src * src;
    v -= 4.0 * p.epsilon * (src6 * src6 - src6);
  }
  return {v, dv};
}

ClassicalResult evaluate_classical(const AtomSet& atoms, const SimBox& box,
                                   const NeighborList& nlist,
                                   const LJParams& p) {
  p.validate();
  require(nlist.built_from == static_cast<int>(atoms.size()),
          "evaluate_classical: list built from a different atom count");

  ClassicalResult out;
  out.forces.assign(atoms.size(), Vec3{});
  const bool half = nlist.mode == ListMode::half;

  for (std::size_t i = 0; i < atoms.size(); ++i) {
    for (const auto& e : nlist.neighbors[i]) {
      const std::size_t j = static_cast<std::size_t>(e.index);
      const Vec3 d{image_delta(atoms.positions[j].x, atoms.positions[i].x,
                               e.shift[0], box.lengths.x),
                   image_delta(atoms.positions[j].y, atoms.positions[i].y,
                               e.shift[1], box.lengths.y),
                   image_delta(atoms.positions[j].z, atoms.positions[i].z,
                               e.shift[2], box.lengths.z)};
      const double r = norm(d);
      require(r >= 1e-6, "evaluate_classical: overlapping atoms (r < 1e-6)");
      const PairValue pv = lj_pair(r, p);
      const Vec3 f = (pv.dV_dr / r) * d;  // force on atom i
      if (half) {
        out.energy += pv.energy;
        out.forces[i] += f;
        out.forces[j] -= f;
      } else {
        out.energy += 0.5 * pv.energy;
        out.forces[i] += f;
      }
    }
  }
  return out;
}

}  // namespace nnmd
