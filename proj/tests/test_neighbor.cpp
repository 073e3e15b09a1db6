#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>

#include "nnmd/neighbor.hpp"
#include "support.hpp"

using namespace nnmd;
using nnmd::testing::random_config;

TEST_CASE("cell binning") {
  SUBCASE("8-atom lattice, L=2, cell 1 -> one atom per cell") {
    auto [box, atoms] = lattice_init(2, 1.0, std::array<int, 1>{0});
    const CellGrid grid = build_cell_list(atoms, box, 1.0);
    CHECK(grid.dims == std::array<int, 3>{2, 2, 2});
    for (const auto& c : grid.cells) CHECK(c.size() == 1);
  }
  SUBCASE("single atom occupies one cell; counts sum to N") {
    AtomSet a;
    SimBox box;
    box.lengths = {3.0, 3.0, 3.0};
    a.push_back(0, 0, {1.4, 1.4, 1.4});
    const CellGrid grid = build_cell_list(a, box, 1.0);
    std::size_t total = 0;
    for (const auto& c : grid.cells) total += c.size();
    CHECK(total == 1);
  }
  SUBCASE("cell size above the box degenerates to one cell") {
    auto [box, atoms] = lattice_init(2, 1.0, std::array<int, 1>{0});
    const CellGrid grid = build_cell_list(atoms, box, 5.0);
    CHECK(grid.dims == std::array<int, 3>{1, 1, 1});
    CHECK(grid.cells[0].size() == 8);
  }
  SUBCASE("boundary atom binned into the higher cell (half-open)") {
    AtomSet a;
    SimBox box;
    box.lengths = {4.0, 4.0, 4.0};
    a.push_back(0, 0, {2.0, 0.0, 0.0});
    const CellGrid grid = build_cell_list(a, box, 2.0);
    CHECK(grid.cell_of(a.positions[0])[0] == 1);
  }
}

TEST_CASE("two-atom neighbor lists") {
  SimBox box;
  box.lengths = {10.0, 10.0, 10.0};
  AtomSet atoms;
  atoms.push_back(0, 0, {1.0, 1.0, 1.0});
  atoms.push_back(1, 0, {1.5, 1.0, 1.0});

  SUBCASE("within cutoff, full") {
    const auto list = build_neighbor_list(atoms, box, 1.0, ListMode::full);
    REQUIRE(list.neighbors[0].size() == 1);
    REQUIRE(list.neighbors[1].size() == 1);
    CHECK(list.neighbors[0][0].index == 1);
    CHECK(list.neighbors[1][0].index == 0);
  }
  SUBCASE("within cutoff, half keeps j < i") {
    const auto list = build_neighbor_list(atoms, box, 1.0, ListMode::half);
    CHECK(list.neighbors[0].empty());
    REQUIRE(list.neighbors[1].size() == 1);
    CHECK(list.neighbors[1][0].index == 0);
  }
  SUBCASE("beyond cutoff both empty") {
    atoms.positions[1].x = 2.5;
    const auto list = build_neighbor_list(atoms, box, 1.0, ListMode::full);
    CHECK(list.neighbors[0].empty());
    CHECK(list.neighbors[1].empty());
  }
  SUBCASE("periodic image found across the boundary") {
    atoms.positions[0] = {0.2, 5.0, 5.0};
    atoms.positions[1] = {9.9, 5.0, 5.0};
    const auto list = build_neighbor_list(atoms, box, 1.0, ListMode::full);
    REQUIRE(list.neighbors[0].size() == 1);
    CHECK(list.neighbors[0][0].shift == IVec3{-1, 0, 0});
    CHECK(list.neighbors[1][0].shift == IVec3{1, 0, 0});
  }
}

TEST_CASE("oracle equivalence: cell list vs brute force") {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> un(2, 256);
  std::uniform_real_distribution<double> urho(0.1, 0.9);
  for (int trial = 0; trial < 50; ++trial) {
    auto cfg = random_config(rng, un(rng), urho(rng), 2, 0.0);
    const double rc =
        std::min(0.49 * cfg.box.lengths.x, 1.3 * std::cbrt(1.0 / urho(rng)));
    for (ListMode mode : {ListMode::full, ListMode::half}) {
      const auto cell = build_neighbor_list(cfg.atoms, cfg.box, rc, mode);
      const auto brute = brute_force_neighbors(cfg.atoms, cfg.box, rc, mode);
      CHECK(cell == brute);
    }
  }
}

TEST_CASE("full list symmetry and half/full pair-set equivalence") {
  std::mt19937_64 rng(7);
  auto cfg = random_config(rng, 128, 0.6, 2, 0.0);
  const double rc = 1.4;
  const auto full = build_neighbor_list(cfg.atoms, cfg.box, rc, ListMode::full);
  const auto half = build_neighbor_list(cfg.atoms, cfg.box, rc, ListMode::half);

  SUBCASE("(j, s) in N(i) iff (i, -s) in N(j)") {
    for (std::size_t i = 0; i < cfg.atoms.size(); ++i)
      for (const auto& e : full.neighbors[i]) {
        const auto& back = full.neighbors[static_cast<std::size_t>(e.index)];
        const NeighborEntry mirror{static_cast<int>(i), -e.shift};
        CHECK(std::find(back.begin(), back.end(), mirror) != back.end());
      }
  }
  SUBCASE("deduplicated full pairs equal the half pair set") {
    std::set<std::tuple<int, int, IVec3>> from_full, from_half;
    for (std::size_t i = 0; i < cfg.atoms.size(); ++i)
      for (const auto& e : full.neighbors[i]) {
        if (e.index < static_cast<int>(i))
          from_full.insert({static_cast<int>(i), e.index, e.shift});
      }
    for (std::size_t i = 0; i < cfg.atoms.size(); ++i)
      for (const auto& e : half.neighbors[i])
        from_half.insert({static_cast<int>(i), e.index, e.shift});
    CHECK(from_full == from_half);
  }
  SUBCASE("every listed pair is inside the cutoff; no self pairs") {
    for (std::size_t i = 0; i < cfg.atoms.size(); ++i)
      for (const auto& e : full.neighbors[i]) {
        CHECK(!(e.index == static_cast<int>(i) && e.shift == kZeroShift));
        const Vec3 d{
            image_delta(cfg.atoms.positions[static_cast<std::size_t>(e.index)].x,
                        cfg.atoms.positions[i].x, e.shift[0], cfg.box.lengths.x),
            image_delta(cfg.atoms.positions[static_cast<std::size_t>(e.index)].y,
                        cfg.atoms.positions[i].y, e.shift[1], cfg.box.lengths.y),
            image_delta(cfg.atoms.positions[static_cast<std::size_t>(e.index)].z,
                        cfg.atoms.positions[i].z, e.shift[2], cfg.box.lengths.z)};
        CHECK(norm(d) < rc);
      }
  }
}

TEST_CASE("ideal-gas pair count sanity at N = 1000") {
  std::mt19937_64 rng(31415);
  const int n = 1000;
  const double rho = 0.5;
  auto cfg = random_config(rng, n, rho, 1, 0.0);  // uniform, uncorrelated
  const double rc = 1.2;
  const auto half = build_neighbor_list(cfg.atoms, cfg.box, rc, ListMode::half);
  std::size_t pairs = 0;
  for (const auto& row : half.neighbors) pairs += row.size();
  const double vol_sphere = 4.0 / 3.0 * 3.14159265358979323846 * rc * rc * rc;
  const double expected = 0.5 * n * (n - 1) * vol_sphere / cfg.box.volume();
  const double sigma = std::sqrt(expected);
  CHECK(std::abs(static_cast<double>(pairs) - expected) < 5.0 * sigma);
}

TEST_CASE("cutoff beyond box/2 is rejected") {
  auto [box, atoms] = lattice_init(2, 1.0, std::array<int, 1>{0});
  CHECK_THROWS_WITH_AS(
      build_neighbor_list(atoms, box, 1.2, ListMode::full),
      doctest::Contains("minimum-image violation"), Error);
  CHECK_THROWS_AS(brute_force_neighbors(atoms, box, 1.2, ListMode::full),
                  Error);
}

TEST_CASE("unwrapped positions are rejected") {
  SimBox box;
  box.lengths = {10, 10, 10};
  AtomSet atoms;
  atoms.push_back(0, 0, {-0.5, 5.0, 5.0});
  CHECK_THROWS_WITH_AS(build_neighbor_list(atoms, box, 1.0, ListMode::full),
                       doctest::Contains("wrapped"), Error);
}

TEST_CASE("empty system") {
  AtomSet none;
  SimBox box;
  box.lengths = {5, 5, 5};
  const auto list = brute_force_neighbors(none, box, 1.0, ListMode::full);
  CHECK(list.neighbors.empty());
}
