#include "nnmd/analysis.hpp"

#include <algorithm>
#include <cmath>

namespace nnmd {

std::array<double, 3> gyration_radii(const AtomSet& atoms, const SimBox& box,
                                     std::span<const int> group) {
  require(!group.empty(), "gyration_radii: empty group");

  // Cluster the group to the image nearest its center of mass: first around
  // an arbitrary member, then around the resulting center.
  std::vector<Vec3> unwrapped(group.size());
  Vec3 ref = atoms.positions[static_cast<std::size_t>(group[0])];
  for (int pass = 0; pass < 2; ++pass) {
    double mass = 0.0;
    Vec3 com{};
    for (std::size_t k = 0; k < group.size(); ++k) {
      const std::size_t i = static_cast<std::size_t>(group[k]);
      const Vec3 d = minimum_image(atoms.positions[i] - ref, box);
      unwrapped[k] = ref + d;
      com += atoms.masses[i] * unwrapped[k];
      mass += atoms.masses[i];
    }
    ref = (1.0 / mass) * com;
  }

  double mass = 0.0;
  std::array<double, 3> acc{0.0, 0.0, 0.0};
  for (std::size_t k = 0; k < group.size(); ++k) {
    const std::size_t i = static_cast<std::size_t>(group[k]);
    const Vec3 d = unwrapped[k] - ref;
    const double m = atoms.masses[i];
    acc[0] += m * (d.y * d.y + d.z * d.z);
    acc[1] += m * (d.x * d.x + d.z * d.z);
    acc[2] += m * (d.x * d.x + d.y * d.y);
    mass += m;
  }
  return {std::sqrt(acc[0] / mass), std::sqrt(acc[1] / mass),
          std::sqrt(acc[2] / mass)};
}

StabilityResult stability_check(std::span<const double> series, int window,
                                double band) {
  require(window >= 1, "stability_check: window must be >= 1");
  require(static_cast<int>(series.size()) >= window,
          "stability_check: series shorter than the window");
  StabilityResult out;

  const std::size_t n_windows = series.size() - static_cast<std::size_t>(window) + 1;
  double first = 0.0;
  for (std::size_t k = 0; k < n_windows; ++k) {
    double mean = 0.0;
    for (int j = 0; j < window; ++j) mean += series[k + static_cast<std::size_t>(j)];
    mean /= window;
    if (k == 0) first = mean;
    const double dev = std::abs(mean - first) / std::max(std::abs(first), 1e-300);
    out.max_rel_dev = std::max(out.max_rel_dev, dev);
  }
  out.pass = out.max_rel_dev <= band;

  // least-squares slope of the raw series
  const double n = static_cast<double>(series.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    sx += static_cast<double>(i);
    sy += series[i];
    sxx += static_cast<double>(i) * static_cast<double>(i);
    sxy += static_cast<double>(i) * series[i];
  }
  const double denom = n * sxx - sx * sx;
  out.drift_slope = denom != 0.0 ? (n * sxy - sx * sy) / denom : 0.0;
  return out;
}

double predict_throughput(double alpha, double beta, double n_p) {
  require(n_p >= 1.0, "predict_throughput: n_p must be >= 1");
  require(alpha > 0.0 || beta > 0.0,
          "predict_throughput: alpha = beta = 0 is undefined");
  return 1.0 / (alpha / n_p + beta);
}

ScalingFit fit_throughput(std::span<const std::pair<double, double>> points) {
  require(points.size() >= 2, "fit_throughput: need at least two points");
  bool distinct = false;
  for (std::size_t i = 1; i < points.size(); ++i)
    if (points[i].first != points[0].first) distinct = true;
  require(distinct, "fit_throughput: degenerate design matrix (one n_p)");

  // least squares y = alpha x + beta with x = 1/n_p, y = 1/tr
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double n = static_cast<double>(points.size());
  for (const auto& [np, tr] : points) {
    require(np >= 1.0 && tr > 0.0, "fit_throughput: bad point");
    const double x = 1.0 / np, y = 1.0 / tr;
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  ScalingFit fit;
  const double denom = n * sxx - sx * sx;
  fit.alpha = (n * sxy - sx * sy) / denom;
  fit.beta = (sy - fit.alpha * sx) / n;
  fit.alpha = std::max(fit.alpha, 0.0);
  fit.beta = std::max(fit.beta, 0.0);

  double ss_res = 0.0, ss_tot = 0.0;
  const double y_mean = sy / n;
  for (const auto& [np, tr] : points) {
    const double y = 1.0 / tr;
    const double y_hat = fit.alpha / np + fit.beta;
    fit.residuals.push_back(y - y_hat);
    ss_res += (y - y_hat) * (y - y_hat);
    ss_tot += (y - y_mean) * (y - y_mean);
  }
  fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot
                               : (ss_res < 1e-24 ? 1.0 : 0.0);
  return fit;
}

std::map<int, double> scaling_efficiency(const std::map<int, double>& tr,
                                         int reference, bool weak) {
  require(tr.count(reference) != 0,
          "scaling_efficiency: reference rank count missing");
  const double tr_ref = tr.at(reference);
  require(tr_ref > 0.0, "scaling_efficiency: non-positive reference");
  std::map<int, double> eff;
  for (const auto& [np, t] : tr) {
    if (weak)
      eff[np] = t / tr_ref;
    else
      eff[np] = (t / tr_ref) * (static_cast<double>(reference) / np);
  }
  return eff;
}

ImbalanceReport load_imbalance(std::span<const double> per_rank_seconds) {
  require(!per_rank_seconds.empty(), "load_imbalance: no ranks");
  ImbalanceReport out;
  out.seconds.assign(per_rank_seconds.begin(), per_rank_seconds.end());
  double mx = per_rank_seconds[0], mean = 0.0;
  for (double t : per_rank_seconds) {
    mx = std::max(mx, t);
    mean += t;
  }
  mean /= static_cast<double>(per_rank_seconds.size());
  out.lambda = mean > 0.0 ? mx / mean - 1.0 : 0.0;
  for (double t : per_rank_seconds) out.sync_overhead += mx - t;
  return out;
}

double pearson_correlation(std::span<const double> x,
                           std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2,
          "pearson_correlation: bad input");
  const double n = static_cast<double>(x.size());
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0.0 && syy > 0.0, "pearson_correlation: zero variance");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace nnmd
