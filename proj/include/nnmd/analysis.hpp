#pragma once

#include <map>
#include <span>
#include <utility>
#include <vector>

#include "nnmd/system.hpp"

namespace nnmd {

// ---------------------------------------------------------------------------
// Structural observables
// ---------------------------------------------------------------------------

/// Mass-weighted radii of gyration of a group about the Cartesian axes
/// through its center of mass. Periodic images are resolved by clustering
/// the group around its center of mass in two passes.
std::array<double, 3> gyration_radii(const AtomSet& atoms, const SimBox& box,
                                     std::span<const int> group);

struct StabilityResult {
  bool pass = false;
  double max_rel_dev = 0.0;  // worst |windowed mean - initial| / initial
  double drift_slope = 0.0;  // least-squares slope per sample
};

/// Pass when every sliding windowed mean stays within +-band (fractional) of
/// the first windowed mean; reports the drift slope either way.
StabilityResult stability_check(std::span<const double> series, int window,
                                double band);

// ---------------------------------------------------------------------------
// Scaling model: tr = 1 / (alpha / n_p + beta)
// ---------------------------------------------------------------------------

struct ScalingFit {
  double alpha = 0.0;
  double beta = 0.0;
  double r_squared = 0.0;  // of the linearized fit (1/tr space)
  std::vector<double> residuals;
};

double predict_throughput(double alpha, double beta, double n_p);

/// Linear least squares on 1/tr = alpha * (1/n_p) + beta; coefficients
/// clamped at zero. Needs at least two distinct n_p values.
ScalingFit fit_throughput(std::span<const std::pair<double, double>> points);

/// Strong scaling: eff(n) = (tr(n)/tr(ref)) * (ref/n).
/// Weak scaling: eff(n) = tr(n)/tr(ref) (every replica advances the same
/// simulated time, so whole-system throughput already is per-replica).
std::map<int, double> scaling_efficiency(const std::map<int, double>& tr,
                                         int reference, bool weak = false);

// ---------------------------------------------------------------------------
// Load imbalance
// ---------------------------------------------------------------------------

struct ImbalanceReport {
  std::vector<double> seconds;  // per-rank inference time
  double lambda = 0.0;          // t_max / t_mean - 1
  double sync_overhead = 0.0;   // sum over ranks of (t_max - t_r)
};

ImbalanceReport load_imbalance(std::span<const double> per_rank_seconds);

double pearson_correlation(std::span<const double> x,
                           std::span<const double> y);

}  // namespace nnmd
