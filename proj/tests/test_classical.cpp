#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "nnmd/classical.hpp"
#include "support.hpp"

using namespace nnmd;
using nnmd::testing::random_config;

TEST_CASE("lj_pair closed-form values") {
  LJParams p;
  p.energy_shift = false;

  CHECK(lj_pair(1.0, p).energy == doctest::Approx(0.0).epsilon(1e-14));
  const double rmin = std::pow(2.0, 1.0 / 6.0);
  CHECK(lj_pair(rmin, p).dV_dr == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(lj_pair(rmin, p).energy == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(lj_pair(2.0, p).energy == doctest::Approx(-0.061523).epsilon(1e-4));
  CHECK(lj_pair(2.5, p).energy == 0.0);
  CHECK(lj_pair(3.0, p).dV_dr == 0.0);
  CHECK_THROWS_AS(lj_pair(0.0, p), Error);

  SUBCASE("shifted potential vanishes at the cutoff") {
    LJParams ps;
    ps.energy_shift = true;
    CHECK(lj_pair(ps.rc - 1e-9, ps).energy ==
          doctest::Approx(0.0).epsilon(1e-7));
  }
}

TEST_CASE("dimer at the minimum") {
  SimBox box;
  box.lengths = {10.0, 10.0, 10.0};
  AtomSet atoms;
  const double rmin = std::pow(2.0, 1.0 / 6.0);
  atoms.push_back(0, 0, {4.0, 5.0, 5.0});
  atoms.push_back(1, 0, {4.0 + rmin, 5.0, 5.0});
  LJParams p;
  p.energy_shift = false;
  const auto list = build_neighbor_list(atoms, box, p.rc, ListMode::half);
  const auto res = evaluate_classical(atoms, box, list, p);
  CHECK(res.energy == doctest::Approx(-1.0).epsilon(1e-12));
  for (int c = 0; c < 3; ++c) {
    CHECK(std::abs(res.forces[0][c]) < 1e-12);
    CHECK(std::abs(res.forces[1][c]) < 1e-12);
  }
}

TEST_CASE("single atom") {
  SimBox box;
  box.lengths = {10.0, 10.0, 10.0};
  AtomSet atoms;
  atoms.push_back(0, 0, {5.0, 5.0, 5.0});
  LJParams p;
  const auto list = build_neighbor_list(atoms, box, p.rc, ListMode::half);
  const auto res = evaluate_classical(atoms, box, list, p);
  CHECK(res.energy == 0.0);
  CHECK(res.forces[0] == Vec3{0, 0, 0});
}

TEST_CASE("half and full lists agree to 1e-12") {
  std::mt19937_64 rng(404);
  for (int trial = 0; trial < 5; ++trial) {
    auto cfg = random_config(rng, 64, 0.6, 1, 0.8);
    LJParams p;
    p.rc = std::min(2.5, 0.49 * cfg.box.lengths.x);
    const auto half = build_neighbor_list(cfg.atoms, cfg.box, p.rc, ListMode::half);
    const auto full = build_neighbor_list(cfg.atoms, cfg.box, p.rc, ListMode::full);
    const auto rh = evaluate_classical(cfg.atoms, cfg.box, half, p);
    const auto rf = evaluate_classical(cfg.atoms, cfg.box, full, p);
    CHECK(std::abs(rh.energy - rf.energy) <=
          1e-12 * std::max(1.0, std::abs(rf.energy)));
    for (std::size_t i = 0; i < cfg.atoms.size(); ++i)
      for (int c = 0; c < 3; ++c)
        CHECK(std::abs(rh.forces[i][c] - rf.forces[i][c]) <=
              1e-12 * std::max(1.0, std::abs(rf.forces[i][c])));
  }
}

TEST_CASE("Newton's third law and force exactness") {
  std::mt19937_64 rng(505);
  auto cfg = random_config(rng, 48, 0.7, 1, 0.8);
  LJParams p;
  p.rc = std::min(2.5, 0.49 * cfg.box.lengths.x);
  const auto list = build_neighbor_list(cfg.atoms, cfg.box, p.rc, ListMode::half);
  const auto res = evaluate_classical(cfg.atoms, cfg.box, list, p);

  SUBCASE("forces sum to zero") {
    Vec3 total{};
    for (const auto& f : res.forces) total += f;
    CHECK(std::abs(total.x) < 1e-10);
    CHECK(std::abs(total.y) < 1e-10);
    CHECK(std::abs(total.z) < 1e-10);
  }
  SUBCASE("analytic force equals centered finite difference") {
    for (std::size_t a = 0; a < cfg.atoms.size(); a += 7)
      for (int c = 0; c < 3; ++c) {
        const double fd = nnmd::testing::fd_classical_force_component(
            cfg.atoms, cfg.box, p, a, c, 1e-6);
        CHECK(std::abs(res.forces[a][c] - fd) /
                  std::max(1.0, std::abs(fd)) <
              1e-6);
      }
  }
  SUBCASE("translation invariance of the energy") {
    AtomSet moved = cfg.atoms;
    for (auto& r : moved.positions)
      r = wrap_position(r + Vec3{1.234, -0.77, 0.31}, cfg.box);
    const auto list2 =
        build_neighbor_list(moved, cfg.box, p.rc, ListMode::half);
    const auto res2 = evaluate_classical(moved, cfg.box, list2, p);
    CHECK(std::abs(res2.energy - res.energy) <
          1e-10 * std::max(1.0, std::abs(res.energy)));
  }
}

TEST_CASE("rotation invariance in an open box") {
  std::mt19937_64 rng(606);
  SimBox open_box;
  open_box.lengths = {50.0, 50.0, 50.0};
  open_box.periodic = {false, false, false};
  AtomSet atoms;
  std::uniform_real_distribution<double> u(24.0, 27.0);
  for (int i = 0; i < 24; ++i) atoms.push_back(i, 0, {u(rng), u(rng), u(rng)});
  LJParams p;
  const auto list = build_neighbor_list(atoms, open_box, p.rc, ListMode::half);
  const auto res = evaluate_classical(atoms, open_box, list, p);

  const double th = 0.731;
  AtomSet rot = atoms;
  for (auto& r : rot.positions) {
    const double x = r.x - 25.0, y = r.y - 25.0;
    r.x = 25.0 + std::cos(th) * x - std::sin(th) * y;
    r.y = 25.0 + std::sin(th) * x + std::cos(th) * y;
  }
  const auto list2 = build_neighbor_list(rot, open_box, p.rc, ListMode::half);
  const auto res2 = evaluate_classical(rot, open_box, list2, p);
  CHECK(std::abs(res2.energy - res.energy) <
        1e-10 * std::max(1.0, std::abs(res.energy)));
}

TEST_CASE("overlapping atoms raise a singularity error") {
  SimBox box;
  box.lengths = {10, 10, 10};
  AtomSet atoms;
  atoms.push_back(0, 0, {5, 5, 5});
  atoms.push_back(1, 0, {5.0 + 1e-9, 5, 5});
  LJParams p;
  const auto list = build_neighbor_list(atoms, box, p.rc, ListMode::half);
  CHECK_THROWS_WITH_AS(evaluate_classical(atoms, box, list, p),
                       doctest::Contains("overlap"), Error);
}
