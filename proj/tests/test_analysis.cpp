#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "nnmd/analysis.hpp"

using namespace nnmd;

TEST_CASE("gyration radii") {
  SimBox box;
  box.lengths = {20.0, 20.0, 20.0};

  SUBCASE("single atom") {
    AtomSet a;
    a.push_back(0, 0, {3.0, 4.0, 5.0});
    const std::array<int, 1> group{0};
    const auto rg = gyration_radii(a, box, group);
    CHECK(rg[0] == 0.0);
    CHECK(rg[1] == 0.0);
    CHECK(rg[2] == 0.0);
  }
  SUBCASE("two unit masses at +-1 along x") {
    AtomSet a;
    a.push_back(0, 0, {9.0, 5.0, 5.0});
    a.push_back(1, 0, {11.0, 5.0, 5.0});
    const std::array<int, 2> group{0, 1};
    const auto rg = gyration_radii(a, box, group);
    CHECK(rg[0] == doctest::Approx(0.0));
    CHECK(rg[1] == doctest::Approx(1.0));
    CHECK(rg[2] == doctest::Approx(1.0));
  }
  SUBCASE("rigid translation leaves radii unchanged, PBC unwrap included") {
    std::mt19937_64 rng(8);
    AtomSet a;
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (int i = 0; i < 12; ++i)
      a.push_back(i, 0, {10.0 + u(rng), 10.0 + u(rng), 10.0 + u(rng)});
    std::vector<int> group(12);
    for (int i = 0; i < 12; ++i) group[static_cast<std::size_t>(i)] = i;
    const auto rg0 = gyration_radii(a, box, group);
    // translate so the cluster straddles the periodic boundary
    for (auto& r : a.positions) r = wrap_position(r + Vec3{9.4, 0.0, 0.0}, box);
    const auto rg1 = gyration_radii(a, box, group);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(rg1[c] - rg0[c]) < 1e-12);
  }
  SUBCASE("group relabeling leaves radii unchanged") {
    std::mt19937_64 rng(9);
    AtomSet a;
    std::uniform_real_distribution<double> u(-1.2, 1.2);
    for (int i = 0; i < 10; ++i)
      a.push_back(i, 0, {10.0 + u(rng), 10.0 + u(rng), 10.0 + u(rng)});
    std::vector<int> group{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    const auto rg0 = gyration_radii(a, box, group);
    std::shuffle(group.begin(), group.end(), rng);
    const auto rg1 = gyration_radii(a, box, group);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(rg1[c] - rg0[c]) < 1e-12);
  }
  SUBCASE("empty group is an error") {
    AtomSet a;
    a.push_back(0, 0, {0, 0, 0});
    CHECK_THROWS_AS(gyration_radii(a, box, std::span<const int>{}), Error);
  }
}

TEST_CASE("stability_check") {
  SUBCASE("constant series passes with zero drift") {
    std::vector<double> s(100, 2.5);
    const auto r = stability_check(s, 10, 0.25);
    CHECK(r.pass);
    CHECK(r.max_rel_dev == 0.0);
    CHECK(std::abs(r.drift_slope) < 1e-15);
  }
  SUBCASE("linear doubling fails with positive slope") {
    std::vector<double> s;
    for (int i = 0; i < 100; ++i) s.push_back(1.0 + i * (1.0 / 99.0));
    const auto r = stability_check(s, 10, 0.25);
    CHECK(!r.pass);
    CHECK(r.drift_slope > 0.0);
  }
  SUBCASE("small fluctuations pass") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g(0.0, 0.01);
    std::vector<double> s;
    for (int i = 0; i < 200; ++i) s.push_back(2.0 + g(rng));
    CHECK(stability_check(s, 20, 0.25).pass);
  }
}

TEST_CASE("predict_throughput") {
  CHECK(predict_throughput(0.0, 0.5, 8) == doctest::Approx(2.0));   // flat
  CHECK(predict_throughput(8.0, 0.0, 4) == doctest::Approx(0.5));   // linear
  CHECK(predict_throughput(8.0, 0.5, 8) == doctest::Approx(1.0 / 1.5));
  CHECK_THROWS_AS(predict_throughput(0.0, 0.0, 4), Error);
}

TEST_CASE("fit_throughput recovers noise-free coefficients exactly") {
  const double alpha = 800.0, beta = 12.5;
  std::vector<std::pair<double, double>> points;
  for (double np : {1.0, 2.0, 4.0, 8.0, 16.0, 32.0})
    points.emplace_back(np, predict_throughput(alpha, beta, np));
  const ScalingFit fit = fit_throughput(points);
  CHECK(std::abs(fit.alpha - alpha) / alpha < 1e-9);
  CHECK(std::abs(fit.beta - beta) / beta < 1e-9);
  CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));

  SUBCASE("two points interpolate exactly") {
    std::vector<std::pair<double, double>> two{points[0], points[3]};
    const ScalingFit f2 = fit_throughput(two);
    CHECK(std::abs(f2.residuals[0]) < 1e-12);
    CHECK(std::abs(f2.residuals[1]) < 1e-12);
    CHECK(f2.r_squared == doctest::Approx(1.0));
  }
  SUBCASE("degenerate design matrix is an error") {
    std::vector<std::pair<double, double>> bad{{8.0, 1.0}, {8.0, 1.1}};
    CHECK_THROWS_AS(fit_throughput(bad), Error);
  }
}

TEST_CASE("scaling_efficiency") {
  SUBCASE("doubling throughput with ranks is perfect strong scaling") {
    std::map<int, double> tr{{8, 1.0}, {16, 2.0}, {32, 4.0}};
    const auto eff = scaling_efficiency(tr, 8);
    CHECK(eff.at(8) == doctest::Approx(1.0));
    CHECK(eff.at(16) == doctest::Approx(1.0));
    CHECK(eff.at(32) == doctest::Approx(1.0));
  }
  SUBCASE("constant throughput decays as ref/n") {
    std::map<int, double> tr{{8, 1.0}, {16, 1.0}, {32, 1.0}};
    const auto eff = scaling_efficiency(tr, 8);
    CHECK(eff.at(16) == doctest::Approx(0.5));
    CHECK(eff.at(32) == doctest::Approx(0.25));
  }
  SUBCASE("model-implied efficiency chain is monotone decreasing") {
    // alpha/beta chosen so eff(16; ref 8) = 0.66; the model then pins
    // eff(32) below it
    const double alpha = 1.0;
    const double beta = alpha * (1.0 / 8.0 - 1.32 / 16.0) / 0.32;
    std::map<int, double> tr;
    for (int np : {8, 16, 32})
      tr[np] = predict_throughput(alpha, beta, np);
    const auto eff = scaling_efficiency(tr, 8);
    CHECK(eff.at(16) == doctest::Approx(0.66).epsilon(1e-12));
    CHECK(eff.at(32) < eff.at(16));
    CHECK(eff.at(32) == doctest::Approx(0.392857142857).epsilon(1e-9));
  }
  SUBCASE("weak mode normalizes per replica") {
    std::map<int, double> tr{{8, 1.0}, {16, 0.8}};
    const auto eff = scaling_efficiency(tr, 8, /*weak=*/true);
    CHECK(eff.at(16) == doctest::Approx(0.8));
  }
}

TEST_CASE("load_imbalance") {
  SUBCASE("equal times") {
    std::vector<double> t{1.0, 1.0, 1.0};
    const auto rep = load_imbalance(t);
    CHECK(rep.lambda == doctest::Approx(0.0));
    CHECK(rep.sync_overhead == doctest::Approx(0.0));
  }
  SUBCASE("(1,1,1,2)") {
    std::vector<double> t{1.0, 1.0, 1.0, 2.0};
    const auto rep = load_imbalance(t);
    CHECK(rep.lambda == doctest::Approx(0.6));
    CHECK(rep.sync_overhead == doctest::Approx(3.0));
  }
}

TEST_CASE("pearson correlation") {
  std::vector<double> x{1, 2, 3, 4, 5};
  std::vector<double> y{2, 4, 6, 8, 10};
  CHECK(pearson_correlation(x, y) == doctest::Approx(1.0));
  std::vector<double> z{5, 4, 3, 2, 1};
  CHECK(pearson_correlation(x, z) == doctest::Approx(-1.0));
}
