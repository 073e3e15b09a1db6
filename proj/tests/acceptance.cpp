// Acceptance suite: one check per shipping criterion, each printing a
// PASS/FAIL line with the measured numbers. Exit status is the number of
// failed criteria.

#include <cstdio>
#include <thread>
#include <random>
#include <set>

#include "nnmd/analysis.hpp"
#include "nnmd/classical.hpp"
#include "nnmd/decomp.hpp"
#include "nnmd/deeppot.hpp"
#include "nnmd/engine.hpp"
#include "nnmd/trace.hpp"
#include "support.hpp"

using namespace nnmd;
using nnmd::testing::random_config;
using nnmd::testing::test_model;

namespace {

struct Criterion {
  bool pass = false;
  std::string detail;
};

int g_workers = 2;

struct DdCase {
  testing::RandomConfig cfg;
  DPModel model;
};

DdCase make_dd_case(std::mt19937_64& rng, std::uint64_t model_seed) {
  std::uniform_int_distribution<int> un(160, 256);
  std::uniform_real_distribution<double> urho(0.45, 0.6);
  DdCase c{random_config(rng, un(rng), urho(rng), 3, 0.5), DPModel{}};
  const double rc = c.cfg.box.lengths.x / 6.2;  // 3-rank wide halo fits
  c.model = test_model(rc, 3, 3, model_seed);
  return c;
}

// ---------------------------------------------------------------------------
// 1 + 2: decomposition oracle and cross-scheme equivalence
// ---------------------------------------------------------------------------

void criteria_dd_oracle(Criterion& c1, Criterion& c2) {
  constexpr int kConfigs = 50;
  const std::vector<int> kRanks{1, 2, 3, 4, 8};
  std::mt19937_64 rng(20240601);
  double worst_e = 0.0, worst_f = 0.0, worst_cross = 0.0;
  const double t0 = TraceSink::now();

  for (int cfg_i = 0; cfg_i < kConfigs; ++cfg_i) {
    DdCase c = make_dd_case(rng, 9000 + static_cast<std::uint64_t>(cfg_i));
    const auto list = build_neighbor_list(c.cfg.atoms, c.cfg.box, c.model.rc,
                                          ListMode::full);
    const auto oracle = evaluate_dp(c.cfg.atoms, c.cfg.box, list, c.model);
    double fscale = 1.0;
    for (const auto& f : oracle.forces)
      fscale = std::max({fscale, std::abs(f.x), std::abs(f.y), std::abs(f.z)});
    const double escale = std::max(1.0, std::abs(oracle.energy));

    for (int np : kRanks) {
      const auto masked = dd_evaluate(c.cfg.atoms, c.cfg.box, c.model, np,
                                      DdScheme::masked_reduction, g_workers);
      const auto wide = dd_evaluate(c.cfg.atoms, c.cfg.box, c.model, np,
                                    DdScheme::wide_halo, g_workers);
      for (const auto* dd : {&masked, &wide}) {
        worst_e = std::max(worst_e,
                           std::abs(dd->energy - oracle.energy) / escale);
        for (std::size_t i = 0; i < c.cfg.atoms.size(); ++i)
          for (int comp = 0; comp < 3; ++comp)
            worst_f = std::max(worst_f,
                               std::abs(dd->forces[i][comp] -
                                        oracle.forces[i][comp]) / fscale);
      }
      worst_cross = std::max(worst_cross,
                             std::abs(masked.energy - wide.energy) / escale);
      for (std::size_t i = 0; i < c.cfg.atoms.size(); ++i)
        for (int comp = 0; comp < 3; ++comp)
          worst_cross = std::max(worst_cross,
                                 std::abs(masked.forces[i][comp] -
                                          wide.forces[i][comp]) / fscale);
    }
  }
  const double elapsed = TraceSink::now() - t0;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "%d configs x ranks {1,2,3,4,8} x 2 schemes: max energy rel "
                "%.3g (tol 1e-10), max force rel %.3g (tol 1e-9), %.1f s",
                kConfigs, worst_e, worst_f, elapsed);
  c1.pass = worst_e <= 1e-10 && worst_f <= 1e-9 && elapsed < 300.0;
  c1.detail = buf;
  std::snprintf(buf, sizeof buf,
                "masked-reduction vs wide-halo: max rel difference %.3g "
                "(tol 1e-9)",
                worst_cross);
  c2.pass = worst_cross <= 1e-9;
  c2.detail = buf;
}

// ---------------------------------------------------------------------------
// 3: gradient exactness against centered finite differences
// ---------------------------------------------------------------------------

Criterion criterion_gradients() {
  std::mt19937_64 rng(31337);
  double worst = 0.0;
  const double t0 = TraceSink::now();
  for (int trial = 0; trial < 20; ++trial) {
    auto cfg = random_config(rng, 32, 0.5, 3, 0.7);
    const DPModel model = test_model(0.35 * cfg.box.lengths.x, 3, 3,
                                     500 + static_cast<std::uint64_t>(trial));
    const auto list =
        build_neighbor_list(cfg.atoms, cfg.box, model.rc, ListMode::full);
    const auto res = evaluate_dp(cfg.atoms, cfg.box, list, model);
    double fmax = 0.0;
    for (const auto& f : res.forces)
      fmax = std::max({fmax, std::abs(f.x), std::abs(f.y), std::abs(f.z)});
    // relative error with a 1e-3 * max|F| scale floor so near-zero
    // components do not divide FD roundoff by zero
    const double floor_scale = std::max(1e-3 * fmax, 1e-8);
    for (std::size_t a = 0; a < cfg.atoms.size(); ++a)
      for (int comp = 0; comp < 3; ++comp) {
        const double fd = nnmd::testing::fd_force_component(
            cfg.atoms, cfg.box, model, a, comp, 1e-5);
        worst = std::max(worst, std::abs(res.forces[a][comp] - fd) /
                                    std::max(std::abs(fd), floor_scale));
      }
  }
  const double elapsed = TraceSink::now() - t0;
  Criterion c;
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "20 configs of 32 atoms, h=1e-5: max relative error %.3g "
                "(tol 1e-6, floor 1e-3*max|F|), %.1f s",
                worst, elapsed);
  c.pass = worst < 1e-6 && elapsed < 60.0;
  c.detail = buf;
  return c;
}

// ---------------------------------------------------------------------------
// 4: symmetry suite
// ---------------------------------------------------------------------------

Criterion criterion_symmetry() {
  std::mt19937_64 rng(777);
  Criterion c;
  c.pass = true;
  std::string fails;

  // permutation invariance
  {
    auto cfg = random_config(rng, 48, 0.5, 3, 0.6);
    const DPModel model = test_model(0.3 * cfg.box.lengths.x, 3, 3);
    const auto list =
        build_neighbor_list(cfg.atoms, cfg.box, model.rc, ListMode::full);
    const double e0 = evaluate_dp(cfg.atoms, cfg.box, list, model).energy;
    std::vector<std::size_t> perm(cfg.atoms.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    AtomSet shuffled;
    for (std::size_t i : perm)
      shuffled.push_back(cfg.atoms.global_ids[i], cfg.atoms.species[i],
                         cfg.atoms.positions[i]);
    const auto list2 =
        build_neighbor_list(shuffled, cfg.box, model.rc, ListMode::full);
    const double e1 = evaluate_dp(shuffled, cfg.box, list2, model).energy;
    const double rel = std::abs(e1 - e0) / std::max(1.0, std::abs(e0));
    if (rel >= 1e-12) {
      c.pass = false;
      fails += " permutation " + std::to_string(rel) + ";";
    }
  }

  // rotation invariance with covariant forces (open box), translation sum
  {
    SimBox open_box;
    open_box.lengths = {40.0, 40.0, 40.0};
    open_box.periodic = {false, false, false};
    AtomSet atoms;
    std::uniform_real_distribution<double> u(18.0, 22.0);
    std::uniform_int_distribution<int> sp(0, 2);
    for (int i = 0; i < 24; ++i)
      atoms.push_back(i, sp(rng), {u(rng), u(rng), u(rng)});
    const DPModel model = test_model(1.3, 3, 3);
    const auto list =
        build_neighbor_list(atoms, open_box, model.rc, ListMode::full);
    const auto res = evaluate_dp(atoms, open_box, list, model);

    Vec3 fsum{};
    for (const auto& f : res.forces) fsum += f;
    if (std::max({std::abs(fsum.x), std::abs(fsum.y), std::abs(fsum.z)}) >=
        1e-9) {
      c.pass = false;
      fails += " translation-force-sum;";
    }

    std::normal_distribution<double> g(0.0, 1.0);
    double q[4] = {g(rng), g(rng), g(rng), g(rng)};
    const double qn =
        std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    for (double& x : q) x /= qn;
    const double Q[3][3] = {
        {1 - 2 * (q[2] * q[2] + q[3] * q[3]), 2 * (q[1] * q[2] - q[0] * q[3]),
         2 * (q[1] * q[3] + q[0] * q[2])},
        {2 * (q[1] * q[2] + q[0] * q[3]), 1 - 2 * (q[1] * q[1] + q[3] * q[3]),
         2 * (q[2] * q[3] - q[0] * q[1])},
        {2 * (q[1] * q[3] - q[0] * q[2]), 2 * (q[2] * q[3] + q[0] * q[1]),
         1 - 2 * (q[1] * q[1] + q[2] * q[2])}};
    AtomSet rotated = atoms;
    const Vec3 pivot{20, 20, 20};
    for (auto& r : rotated.positions) {
      const Vec3 d = r - pivot;
      r = {pivot.x + Q[0][0] * d.x + Q[0][1] * d.y + Q[0][2] * d.z,
           pivot.y + Q[1][0] * d.x + Q[1][1] * d.y + Q[1][2] * d.z,
           pivot.z + Q[2][0] * d.x + Q[2][1] * d.y + Q[2][2] * d.z};
    }
    const auto list2 =
        build_neighbor_list(rotated, open_box, model.rc, ListMode::full);
    const auto res2 = evaluate_dp(rotated, open_box, list2, model);
    if (std::abs(res2.energy - res.energy) /
            std::max(1.0, std::abs(res.energy)) >=
        1e-10) {
      c.pass = false;
      fails += " rotation-energy;";
    }
    double worst_cov = 0.0;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      const Vec3 f = res.forces[i];
      const Vec3 expect{Q[0][0] * f.x + Q[0][1] * f.y + Q[0][2] * f.z,
                        Q[1][0] * f.x + Q[1][1] * f.y + Q[1][2] * f.z,
                        Q[2][0] * f.x + Q[2][1] * f.y + Q[2][2] * f.z};
      for (int comp = 0; comp < 3; ++comp)
        worst_cov =
            std::max(worst_cov, std::abs(res2.forces[i][comp] - expect[comp]));
    }
    if (worst_cov >= 1e-9) {
      c.pass = false;
      fails += " force-covariance " + std::to_string(worst_cov) + ";";
    }
  }

  // cutoff smoothness
  {
    SimBox box;
    box.lengths = {12.0, 12.0, 12.0};
    const DPModel model = test_model(1.5, 2, 3);
    auto energy_with_gap = [&](double gap) {
      AtomSet atoms;
      atoms.push_back(0, 0, {6.0, 6.0, 6.0});
      atoms.push_back(1, 1, {6.0 + model.rc + gap, 6.0, 6.0});
      atoms.push_back(2, 0, {5.2, 6.4, 6.0});
      const auto list =
          build_neighbor_list(atoms, box, model.rc, ListMode::full);
      return evaluate_dp(atoms, box, list, model).energy;
    };
    const double jump = std::abs(energy_with_gap(-5e-9) - energy_with_gap(5e-9));
    if (jump >= 1e-10) {
      c.pass = false;
      fails += " cutoff-smoothness " + std::to_string(jump) + ";";
    }
  }

  // locality: per-atom energies beyond rc bit-unchanged
  {
    auto cfg = random_config(rng, 48, 0.4, 2, 0.6);
    const DPModel model = test_model(0.25 * cfg.box.lengths.x, 2, 3);
    const auto list =
        build_neighbor_list(cfg.atoms, cfg.box, model.rc, ListMode::full);
    const auto res = evaluate_dp(cfg.atoms, cfg.box, list, model);
    AtomSet moved = cfg.atoms;
    moved.positions[0] =
        wrap_position(moved.positions[0] + Vec3{0.05, -0.04, 0.03}, cfg.box);
    const auto list2 =
        build_neighbor_list(moved, cfg.box, model.rc, ListMode::full);
    const auto res2 = evaluate_dp(moved, cfg.box, list2, model);
    int checked = 0;
    bool exact = true;
    for (std::size_t i = 1; i < cfg.atoms.size(); ++i) {
      const double d0 = norm(minimum_image(
          cfg.atoms.positions[i] - cfg.atoms.positions[0], cfg.box));
      const double d1 = norm(
          minimum_image(moved.positions[i] - moved.positions[0], cfg.box));
      if (d0 > model.rc + 0.1 && d1 > model.rc + 0.1) {
        exact &= res.atom_energy[i] == res2.atom_energy[i];
        ++checked;
      }
    }
    if (!exact || checked < 5) {
      c.pass = false;
      fails += " locality;";
    }
  }

  c.detail = c.pass ? "permutation < 1e-12, rotation E < 1e-10, covariant "
                      "forces < 1e-9, force sum < 1e-9, cutoff jump < 1e-10, "
                      "locality bit-exact"
                    : "failed:" + fails;
  return c;
}

// ---------------------------------------------------------------------------
// 5: neighbor-list oracle and classical half/full agreement
// ---------------------------------------------------------------------------

Criterion criterion_neighbor_oracle() {
  std::mt19937_64 rng(1123);
  std::uniform_int_distribution<int> un(2, 256);
  std::uniform_real_distribution<double> urho(0.1, 0.9);
  bool lists_identical = true;
  bool pairs_equal = true;
  const double t0 = TraceSink::now();
  for (int trial = 0; trial < 200; ++trial) {
    auto cfg = random_config(rng, un(rng), urho(rng), 2, 0.0);
    const double rc = std::min(0.49 * cfg.box.lengths.x, 1.4);
    const auto full = build_neighbor_list(cfg.atoms, cfg.box, rc, ListMode::full);
    const auto half = build_neighbor_list(cfg.atoms, cfg.box, rc, ListMode::half);
    lists_identical &=
        full == brute_force_neighbors(cfg.atoms, cfg.box, rc, ListMode::full);
    lists_identical &=
        half == brute_force_neighbors(cfg.atoms, cfg.box, rc, ListMode::half);
    // half list must be exactly the deduplicated full pair set
    std::set<std::tuple<int, int, IVec3>> from_full, from_half;
    for (std::size_t i = 0; i < cfg.atoms.size(); ++i) {
      for (const auto& e : full.neighbors[i])
        if (e.index < static_cast<int>(i))
          from_full.insert({static_cast<int>(i), e.index, e.shift});
      for (const auto& e : half.neighbors[i])
        from_half.insert({static_cast<int>(i), e.index, e.shift});
    }
    pairs_equal &= from_full == from_half;
  }

  double worst_cls = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    auto cfg = random_config(rng, 64, 0.6, 1, 0.8);
    LJParams p;
    p.rc = std::min(2.5, 0.49 * cfg.box.lengths.x);
    const auto half = build_neighbor_list(cfg.atoms, cfg.box, p.rc, ListMode::half);
    const auto full = build_neighbor_list(cfg.atoms, cfg.box, p.rc, ListMode::full);
    const auto rh = evaluate_classical(cfg.atoms, cfg.box, half, p);
    const auto rf = evaluate_classical(cfg.atoms, cfg.box, full, p);
    worst_cls = std::max(worst_cls, std::abs(rh.energy - rf.energy) /
                                        std::max(1.0, std::abs(rf.energy)));
    for (std::size_t i = 0; i < cfg.atoms.size(); ++i)
      for (int comp = 0; comp < 3; ++comp)
        worst_cls = std::max(worst_cls,
                             std::abs(rh.forces[i][comp] - rf.forces[i][comp]) /
                                 std::max(1.0, std::abs(rf.forces[i][comp])));
  }
  const double elapsed = TraceSink::now() - t0;
  Criterion c;
  char buf[220];
  std::snprintf(buf, sizeof buf,
                "200 configs: lists %s, pair sets %s; classical half/full "
                "max rel %.3g (tol 1e-12); %.1f s",
                lists_identical ? "identical" : "DIFFER",
                pairs_equal ? "equal" : "DIFFER", worst_cls, elapsed);
  c.pass = lists_identical && pairs_equal && worst_cls <= 1e-12;
  c.detail = buf;
  return c;
}

// ---------------------------------------------------------------------------
// 6: training analog (shared with criterion 9 which reuses the model)
// ---------------------------------------------------------------------------

TrainingSet make_training_set(int n_train, int n_val, std::uint64_t seed,
                              const LJParams& lj) {
  TrainingSet data;
  ClassicalProvider provider(lj);
  std::vector<ForceProvider*> providers{&provider};
  for (int f = 0; f < n_train + n_val; ++f) {
    auto [box, atoms] = lattice_init(3, 0.5, std::array<int, 1>{0});
    init_velocities(atoms, 0.05, seed + 1000 + static_cast<std::uint64_t>(f));
    MDConfig burst;
    burst.dt = 0.002;
    burst.n_steps = 90;
    burst.equil_steps = 60;
    burst.target_temperature = 0.05;
    run_md(atoms, box, burst, providers);
    const auto list = build_neighbor_list(atoms, box, lj.rc, ListMode::half);
    const auto res = evaluate_classical(atoms, box, list, lj);
    TrainingFrame frame;
    frame.atoms = std::move(atoms);
    frame.box = box;
    frame.energy = res.energy;
    frame.forces = res.forces;
    data.frames.push_back(std::move(frame));
  }
  for (int f = 0; f < n_train; ++f) data.train_idx.push_back(f);
  for (int f = 0; f < n_val; ++f) data.val_idx.push_back(n_train + f);
  return data;
}

DPModel trained_model_for_c9;  // criterion 9 reuses the trained model

Criterion criterion_training() {
  const double t0 = TraceSink::now();
  LJParams lj;
  lj.rc = 1.5;
  const TrainingSet data = make_training_set(10, 4, 7, lj);

  ModelSpec spec;
  spec.rc = 1.5;
  spec.rcs = 0.825;
  spec.n_species = 1;
  spec.n_attn = 0;
  spec.n_feat = 24;
  spec.n_reduced = 6;
  spec.embed_hidden = {24, 24};
  spec.fit_hidden = {48, 48};
  DPModel model = init_model(spec, 7);

  TrainHyper hp;
  hp.epochs = 2000;
  hp.lr_start = 0.01;
  hp.lr_end = 0.0003;
  hp.w_energy = 0.3;
  hp.w_force = 10.0;
  const TrainResult result = train(model, data, hp);
  trained_model_for_c9 = model;
  const double elapsed = TraceSink::now() - t0;

  Criterion c;
  if (result.diverged || result.val_rmse.size() < 100) {
    c.detail = "training diverged or too short";
    return c;
  }
  const double first = result.val_rmse.front();
  const double last = result.val_rmse.back();
  const double reduction = first / last;

  // plateau: last-quartile slope against the initial slope
  auto slope_of = [&](std::size_t lo, std::size_t hi) {
    const double n = static_cast<double>(hi - lo);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t e = lo; e < hi; ++e) {
      const double x = static_cast<double>(e - lo);
      sx += x;
      sy += result.val_rmse[e];
      sxx += x * x;
      sxy += x * result.val_rmse[e];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
  };
  const std::size_t n_epochs = result.val_rmse.size();
  const double initial_slope = slope_of(0, n_epochs / 4);
  const double final_slope = slope_of(3 * n_epochs / 4, n_epochs);
  const bool plateau = std::abs(final_slope) < 0.05 * std::abs(initial_slope);

  char buf[280];
  std::snprintf(buf, sizeof buf,
                "val force RMSE %.4g -> %.4g (%.1fx, need >= 5x; < 0.2: %s); "
                "last-quartile |slope| %.2e vs initial %.2e (plateau %s); "
                "%.0f s (budget 600)",
                first, last, reduction, last < 0.2 ? "yes" : "NO",
                std::abs(final_slope), std::abs(initial_slope),
                plateau ? "yes" : "NO", elapsed);
  c.pass = reduction >= 5.0 && plateau && last < 0.2 && elapsed < 600.0;
  c.detail = buf;
  return c;
}

// ---------------------------------------------------------------------------
// 7: Eq-8-style fit, synthetic and measured
// ---------------------------------------------------------------------------

Criterion criterion_scaling_fit() {
  Criterion c;

  // exact recovery on noise-free synthetic data
  const double alpha_true = 800.0, beta_true = 12.5;
  std::vector<std::pair<double, double>> synth;
  for (double np : {1.0, 2.0, 4.0, 8.0, 16.0, 32.0})
    synth.emplace_back(np, predict_throughput(alpha_true, beta_true, np));
  const ScalingFit sfit = fit_throughput(synth);
  const bool synth_ok =
      std::abs(sfit.alpha - alpha_true) / alpha_true < 1e-9 &&
      std::abs(sfit.beta - beta_true) / beta_true < 1e-9 &&
      sfit.r_squared > 1.0 - 1e-12;

  // measured sweep: N = 4096, simulated parallel step time per rank count
  const double t0 = TraceSink::now();
  auto [box, atoms] = lattice_init(16, 0.8, std::array<int, 1>{0});
  init_velocities(atoms, 0.3, 99);
  ModelSpec mspec;
  mspec.rc = 1.3;
  mspec.rcs = 0.715;
  mspec.n_species = 1;
  mspec.n_attn = 3;
  const DPModel model = init_model(mspec, 99);

  constexpr int kSteps = 10;
  std::vector<std::pair<double, double>> points;
  std::vector<double> rank_seconds, rank_load;
  // rank count 3 joins the correlation pool (34 points) but not the fit,
  // whose rank set is pinned
  for (int np : {1, 2, 3, 4, 8, 16}) {
    std::map<int, std::vector<double>> busy;
    std::vector<double> collective;
    std::map<int, double> load;
    for (int s = 0; s < kSteps; ++s) {
      TraceSink trace;
      const DdResult dd =
          dd_evaluate(atoms, box, model, np, DdScheme::masked_reduction,
                      g_workers, &trace, nullptr, s);
      double coll = 0.0;
      std::map<int, double> step_busy;
      for (const auto& span : trace.spans()) {
        if (span.rank < 0)
          coll += span.t_end - span.t_start;
        else
          step_busy[span.rank] += span.t_end - span.t_start;
      }
      collective.push_back(coll);
      for (const auto& [r, t] : step_busy) busy[r].push_back(t);
      for (const auto& st : dd.stats)
        load[st.rank] = st.locals + st.ghosts;
    }
    auto min_of = [](const std::vector<double>& v) {
      return *std::min_element(v.begin(), v.end());
    };
    double slowest = 0.0;
    for (const auto& [r, v] : busy) {
      const double t = min_of(v);
      slowest = std::max(slowest, t);
      rank_seconds.push_back(t);
      rank_load.push_back(load[r]);
    }
    if (np != 3) {
      const double step_est = min_of(collective) + slowest;
      points.emplace_back(np, throughput_per_day(1, 0.002, step_est));
    }
  }
  const ScalingFit mfit = fit_throughput(points);
  const double corr = pearson_correlation(rank_seconds, rank_load);
  const double elapsed = TraceSink::now() - t0;

  char buf[300];
  std::snprintf(buf, sizeof buf,
                "synthetic alpha/beta recovered %s (r^2-1 = %.1e); measured "
                "N=4096 ranks {1,2,4,8,16} workers=%d: r^2 %.4f (need >= "
                "0.95), per-rank time vs locals+ghosts Pearson %.3f over %zu "
                "points (need >= 0.9); %.0f s",
                synth_ok ? "exactly" : "WRONG", sfit.r_squared - 1.0,
                g_workers, mfit.r_squared, corr, rank_seconds.size(), elapsed);
  c.pass = synth_ok && mfit.r_squared >= 0.95 && corr >= 0.9;
  c.detail = buf;
  return c;
}

// ---------------------------------------------------------------------------
// 8: efficiency formula consistency
// ---------------------------------------------------------------------------

Criterion criterion_efficiency_consistency() {
  // constrain the model so eff(16; ref 8) = 0.66, then read off eff(32)
  const double alpha = 1.0;
  const double beta = alpha * (1.0 / 8.0 - 1.32 / 16.0) / 0.32;
  std::map<int, double> tr;
  for (int np : {8, 16, 32}) tr[np] = predict_throughput(alpha, beta, np);
  const auto eff = scaling_efficiency(tr, 8);
  Criterion c;
  char buf[220];
  std::snprintf(buf, sizeof buf,
                "with eff(16)=%.4f pinned, the model implies eff(32)=%.4f "
                "(reported reference value 0.40); monotone decreasing: %s",
                eff.at(16), eff.at(32),
                eff.at(8) > eff.at(16) && eff.at(16) > eff.at(32) ? "yes"
                                                                  : "NO");
  c.pass = std::abs(eff.at(16) - 0.66) < 1e-12 && eff.at(32) < eff.at(16) &&
           eff.at(16) < eff.at(8);
  c.detail = buf;
  return c;
}

// ---------------------------------------------------------------------------
// 9: stability of a mixed run + classical NVE baseline
// ---------------------------------------------------------------------------

Criterion criterion_stability() {
  const double t0 = TraceSink::now();
  // mixed system: classical solvent + decomposed deep potential on a
  // central cluster, using the model trained in criterion 6
  auto [box, atoms] = lattice_init(8, 0.7, std::array<int, 1>{0});
  const Vec3 center = 0.5 * box.lengths;
  std::vector<int> group;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (norm(minimum_image(atoms.positions[i] - center, box)) <= 2.3) {
      atoms.species[i] = 1;
      group.push_back(static_cast<int>(i));
    }
  }
  init_velocities(atoms, 0.15, 42);

  LJParams lj;
  lj.rc = 1.5;
  {
    ClassicalProvider all_classical(lj);
    std::vector<ForceProvider*> eq{&all_classical};
    MDConfig eqc;
    eqc.dt = 0.002;
    eqc.n_steps = 100;
    eqc.equil_steps = 100;
    eqc.target_temperature = 0.15;
    run_md(atoms, box, eqc, eq);
  }

  std::vector<std::uint8_t> nn_mask(atoms.size(), 0), solvent_mask(atoms.size(), 1);
  for (int i : group) {
    nn_mask[static_cast<std::size_t>(i)] = 1;
    solvent_mask[static_cast<std::size_t>(i)] = 0;
  }
  ClassicalProvider solvent(lj, solvent_mask);
  DpProvider::Options opts;
  opts.decomposed = true;
  opts.scheme = DdScheme::wide_halo;
  opts.n_ranks = 4;
  opts.workers = g_workers;
  opts.species_map = {0, 0};  // both system species use the single-species model
  DpProvider nn(trained_model_for_c9, opts, nn_mask);
  std::vector<ForceProvider*> providers{&solvent, &nn};

  std::vector<double> rg_series;
  MDConfig stepc;
  stepc.dt = 0.002;
  stepc.n_steps = 1;
  for (int s = 0; s < 500; ++s) {
    run_md(atoms, box, stepc, providers);
    const auto rg = gyration_radii(atoms, box, group);
    rg_series.push_back((rg[0] + rg[1] + rg[2]) / 3.0);
  }
  const StabilityResult stab = stability_check(rg_series, 50, 0.25);

  // classical NVE baseline: energy conserved to 1e-3 over 2000 steps
  SimBox bbox;
  AtomSet batoms;
  {
    auto [b2, a2] = lattice_init(4, 0.8, std::array<int, 1>{0});
    bbox = b2;
    batoms = std::move(a2);
  }
  init_velocities(batoms, 0.7, 2024);
  LJParams blj;
  blj.rc = std::min(2.5, 0.49 * bbox.lengths.x);
  ClassicalProvider bprov(blj);
  std::vector<ForceProvider*> bproviders{&bprov};
  MDConfig beq;
  beq.dt = 0.002;
  beq.n_steps = 200;
  beq.equil_steps = 200;
  beq.target_temperature = 0.7;
  run_md(batoms, bbox, beq, bproviders);
  MDConfig bnve;
  bnve.dt = 0.002;
  bnve.n_steps = 2000;
  const RunSummary bsum = run_md(batoms, bbox, bnve, bproviders);
  double drift = 0.0;
  const double e0 = bsum.total_energy.front();
  for (double e : bsum.total_energy)
    drift = std::max(drift, std::abs(e - e0) / std::abs(e0));
  const double elapsed = TraceSink::now() - t0;

  Criterion c;
  char buf[260];
  std::snprintf(buf, sizeof buf,
                "mixed 500-step run: max windowed Rg deviation %.3f (band "
                "0.25, drift slope %.2e) -> %s; classical NVE drift %.2e "
                "(tol 1e-3); %.0f s",
                stab.max_rel_dev, stab.drift_slope,
                stab.pass ? "stable" : "UNSTABLE", drift, elapsed);
  c.pass = stab.pass && drift < 1e-3;
  c.detail = buf;
  return c;
}

// ---------------------------------------------------------------------------
// 10: trace and load imbalance on a skewed distribution
// ---------------------------------------------------------------------------

Criterion criterion_trace_imbalance() {
  // deliberately off-center cluster: most atoms in one octant
  std::mt19937_64 rng(4242);
  const int n = 2048;
  const double L = 16.0;
  SimBox box;
  box.lengths = {L, L, L};
  AtomSet atoms;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    Vec3 r;
    if (i % 3 != 0) {  // two thirds of the atoms in the lower octant
      r = {u01(rng) * 0.5 * L, u01(rng) * 0.5 * L, u01(rng) * 0.5 * L};
    } else {
      r = {u01(rng) * L, u01(rng) * L, u01(rng) * L};
    }
    atoms.push_back(i, 0, r);
  }
  ModelSpec mspec;
  mspec.rc = 1.1;
  mspec.rcs = 0.6;
  mspec.n_species = 1;
  mspec.n_attn = 2;
  mspec.n_max = 128;
  const DPModel model = init_model(mspec, 5);

  TraceSink trace;
  dd_evaluate(atoms, box, model, 8, DdScheme::masked_reduction, g_workers,
              &trace, nullptr, 0);

  // per-rank inference seconds for one step
  std::map<int, double> inf;
  for (const auto& span : trace.spans())
    if (span.phase == Phase::inference && span.rank >= 0)
      inf[span.rank] += span.t_end - span.t_start;
  std::vector<double> seconds;
  for (const auto& [r, t] : inf) seconds.push_back(t);
  const ImbalanceReport rep = load_imbalance(seconds);
  const PhaseSummary sum = phase_summary(trace.spans());
  const bool barrier_exact = sum.total_barrier_wait == rep.sync_overhead;

  // chrome trace round trip
  const std::string path = "acceptance_trace.json";
  export_chrome_trace(trace.spans(), path);
  const auto back = parse_chrome_trace(path);
  bool roundtrip = back.size() == trace.spans().size();
  if (roundtrip) {
    const auto orig = trace.spans();
    for (std::size_t i = 0; i < back.size(); ++i) {
      roundtrip &= back[i].rank == orig[i].rank &&
                   back[i].phase == orig[i].phase &&
                   back[i].step == orig[i].step &&
                   std::abs((back[i].t_end - back[i].t_start) -
                            (orig[i].t_end - orig[i].t_start)) < 1e-6;
    }
  }

  Criterion c;
  char buf[240];
  std::snprintf(buf, sizeof buf,
                "8 ranks, skewed cluster: lambda %.3f (need > 0.2); barrier "
                "wait %.4g s %s load_imbalance sync overhead; chrome trace "
                "round trip %s (%zu spans)",
                rep.lambda, rep.sync_overhead,
                barrier_exact ? "==" : "!=", roundtrip ? "lossless" : "LOSSY",
                back.size());
  c.pass = rep.lambda > 0.2 && barrier_exact && roundtrip;
  c.detail = buf;
  return c;
}

// ---------------------------------------------------------------------------
// 11: ledger arithmetic
// ---------------------------------------------------------------------------

Criterion criterion_ledger() {
  std::mt19937_64 rng(31);
  auto cfg = random_config(rng, 200, 0.5, 1, 0.5);
  const DPModel model = test_model(cfg.box.lengths.x / 6.5, 1, 0, 77);
  CollectiveLedger ledger;
  const auto dd = dd_evaluate(cfg.atoms, cfg.box, model, 4,
                              DdScheme::masked_reduction, g_workers, nullptr,
                              &ledger, 3);
  const std::uint64_t n = cfg.atoms.size();
  std::uint64_t route_entries = 0;
  for (const auto& s : dd.stats) route_entries += s.route_entries;

  const bool gather_ok =
      ledger.total_bytes(CollectiveKind::gather_positions) ==
      n * static_cast<std::uint64_t>(ledger.layout.gather_bytes_per_atom);
  const bool reduce_ok =
      ledger.total_bytes(CollectiveKind::reduce_forces) ==
      n * static_cast<std::uint64_t>(ledger.layout.reduce_bytes_per_atom);
  const bool route_ok =
      ledger.total_bytes(CollectiveKind::ghost_force_route) ==
      route_entries *
          static_cast<std::uint64_t>(ledger.layout.route_bytes_per_entry);

  Criterion c;
  char buf[260];
  std::snprintf(buf, sizeof buf,
                "gather %llu B = N x %d, reduce %llu B = N x %d, route %llu "
                "B = %llu entries x %d (all exact); reference figure %d "
                "bytes/atom reported alongside",
                static_cast<unsigned long long>(
                    ledger.total_bytes(CollectiveKind::gather_positions)),
                ledger.layout.gather_bytes_per_atom,
                static_cast<unsigned long long>(
                    ledger.total_bytes(CollectiveKind::reduce_forces)),
                ledger.layout.reduce_bytes_per_atom,
                static_cast<unsigned long long>(
                    ledger.total_bytes(CollectiveKind::ghost_force_route)),
                static_cast<unsigned long long>(route_entries),
                ledger.layout.route_bytes_per_entry, kReferenceBytesPerAtom);
  c.pass = gather_ok && reduce_ok && route_ok && route_entries > 0;
  c.detail = buf;
  return c;
}

}  // namespace

int main() {
  g_workers = std::max(2, static_cast<int>(std::thread::hardware_concurrency()));
  std::printf("acceptance suite (workers = %d)\n", g_workers);

  std::vector<std::pair<std::string, Criterion>> results;
  Criterion c1, c2;
  criteria_dd_oracle(c1, c2);
  results.emplace_back(" 1 decomposition oracle", c1);
  results.emplace_back(" 2 cross-scheme equivalence", c2);
  results.emplace_back(" 3 gradient exactness", criterion_gradients());
  results.emplace_back(" 4 symmetry suite", criterion_symmetry());
  results.emplace_back(" 5 neighbor-list oracle", criterion_neighbor_oracle());
  results.emplace_back(" 6 training analog", criterion_training());
  results.emplace_back(" 7 throughput-model fit", criterion_scaling_fit());
  results.emplace_back(" 8 efficiency consistency",
                       criterion_efficiency_consistency());
  results.emplace_back(" 9 stability validation", criterion_stability());
  results.emplace_back("10 trace and imbalance", criterion_trace_imbalance());
  results.emplace_back("11 ledger arithmetic", criterion_ledger());

  int failed = 0;
  for (const auto& [name, crit] : results) {
    std::printf("%s  [%s] %s\n", crit.pass ? "PASS" : "FAIL", name.c_str(),
                crit.detail.c_str());
    failed += crit.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(results.size()) - failed,
              results.size());
  return failed;
}
