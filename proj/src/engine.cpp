#include "nnmd/engine.hpp"

#include <cmath>
#include <fstream>
#include <random>

namespace nnmd {

namespace {

struct GroupView {
  AtomSet atoms;             // subset with original ids
  std::vector<int> indices;  // subset -> full-system index
};

GroupView make_group(const AtomSet& atoms,
                     const std::vector<std::uint8_t>& mask) {
  GroupView view;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    view.atoms.push_back(atoms.global_ids[i], atoms.species[i],
                         atoms.positions[i], atoms.velocities[i],
                         atoms.masses[i]);
    view.indices.push_back(static_cast<int>(i));
  }
  return view;
}

}  // namespace

ClassicalProvider::ClassicalProvider(LJParams params,
                                     std::vector<std::uint8_t> group_mask)
    : params_(params), group_(std::move(group_mask)) {
  params_.validate();
}

ProviderResult ClassicalProvider::evaluate(const AtomSet& atoms,
                                           const SimBox& box,
                                           StepContext& ctx) {
  ScopedSpan span(ctx.trace, 0, Phase::classical_md, ctx.step);
  const GroupView view = make_group(atoms, group_);
  ProviderResult out;
  out.forces.assign(atoms.size(), Vec3{});
  if (view.atoms.size() < 2) return out;
  const NeighborList list =
      build_neighbor_list(view.atoms, box, params_.rc, ListMode::half);
  const ClassicalResult res = evaluate_classical(view.atoms, box, list, params_);
  out.energy = res.energy;
  for (std::size_t k = 0; k < view.indices.size(); ++k)
    out.forces[static_cast<std::size_t>(view.indices[k])] = res.forces[k];
  return out;
}

DpProvider::DpProvider(DPModel model, Options opts,
                       std::vector<std::uint8_t> group_mask)
    : model_(std::move(model)), opts_(opts), group_(std::move(group_mask)) {
  model_.validate();
}

ProviderResult DpProvider::evaluate(const AtomSet& atoms, const SimBox& box,
                                    StepContext& ctx) {
  GroupView view = make_group(atoms, group_);
  if (!opts_.species_map.empty())
    for (auto& z : view.atoms.species) {
      require(z >= 0 && z < static_cast<int>(opts_.species_map.size()),
              "DpProvider: species outside the species map");
      z = opts_.species_map[static_cast<std::size_t>(z)];
    }
  ProviderResult out;
  out.forces.assign(atoms.size(), Vec3{});
  if (view.atoms.size() == 0) return out;
  if (opts_.decomposed) {
    const DdResult res =
        dd_evaluate(view.atoms, box, model_, opts_.n_ranks, opts_.scheme,
                    opts_.workers, ctx.trace, ctx.ledger, ctx.step);
    out.energy = res.energy;
    for (std::size_t k = 0; k < view.indices.size(); ++k)
      out.forces[static_cast<std::size_t>(view.indices[k])] = res.forces[k];
  } else {
    ScopedSpan span(ctx.trace, 0, Phase::inference, ctx.step);
    const NeighborList list =
        build_neighbor_list(view.atoms, box, model_.rc, ListMode::full);
    const DpResult res = evaluate_dp(view.atoms, box, list, model_);
    out.energy = res.energy;
    for (std::size_t k = 0; k < view.indices.size(); ++k)
      out.forces[static_cast<std::size_t>(view.indices[k])] = res.forces[k];
  }
  return out;
}

void leapfrog_step(AtomSet& atoms, std::span<const Vec3> forces, double dt,
                   const SimBox& box) {
  require(forces.size() == atoms.size(), "leapfrog_step: force size mismatch");
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    const double inv_m = 1.0 / atoms.masses[i];
    atoms.velocities[i] += (dt * inv_m) * forces[i];
    atoms.positions[i] += dt * atoms.velocities[i];
    atoms.positions[i] = wrap_position(atoms.positions[i], box);
  }
}

double kinetic_energy(const AtomSet& atoms) {
  double ke = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i)
    ke += 0.5 * atoms.masses[i] * norm2(atoms.velocities[i]);
  return ke;
}

Vec3 momentum(const AtomSet& atoms) {
  Vec3 p{};
  for (std::size_t i = 0; i < atoms.size(); ++i)
    p += atoms.masses[i] * atoms.velocities[i];
  return p;
}

void init_velocities(AtomSet& atoms, double temperature, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    const double s = std::sqrt(temperature / atoms.masses[i]);
    atoms.velocities[i] = {s * g(rng), s * g(rng), s * g(rng)};
  }
  if (atoms.size() > 0) {
    Vec3 p = momentum(atoms);
    double mass = 0.0;
    for (double m : atoms.masses) mass += m;
    const Vec3 vcm = (1.0 / mass) * p;
    for (auto& v : atoms.velocities) v -= vcm;
    if (temperature > 0.0) rescale_to_temperature(atoms, temperature);
  }
}

void rescale_to_temperature(AtomSet& atoms, double temperature) {
  if (atoms.size() == 0) return;
  const double ke = kinetic_energy(atoms);
  if (ke <= 0.0) return;
  const double dof = 3.0 * static_cast<double>(atoms.size());
  const double current = 2.0 * ke / dof;
  const double lambda = std::sqrt(temperature / current);
  for (auto& v : atoms.velocities) v *= lambda;
}

RunSummary run_md(AtomSet& atoms, const SimBox& box, const MDConfig& config,
                  const std::vector<ForceProvider*>& providers,
                  const std::string& trajectory_path, TraceSink* trace,
                  CollectiveLedger* ledger) {
  require(config.dt > 0.0, "run_md: dt must be > 0");
  require(config.n_steps >= 0, "run_md: n_steps must be >= 0");
  atoms.validate();

  RunSummary summary;
  summary.dt = config.dt;

  std::ofstream traj;
  if (!trajectory_path.empty()) {
    traj.open(trajectory_path, std::ios::trunc);
    require(traj.good(), "run_md: cannot open trajectory " + trajectory_path);
    write_xyz_frame(traj, atoms, box, 0);
  }

  const double t0 = TraceSink::now();
  for (long step = 0; step < config.n_steps; ++step) {
    StepContext ctx{step, trace, ledger};
    double potential = 0.0;
    std::vector<Vec3> forces(atoms.size(), Vec3{});
    for (ForceProvider* p : providers) {
      const ProviderResult res = p->evaluate(atoms, box, ctx);
      potential += res.energy;
      for (std::size_t i = 0; i < atoms.size(); ++i) {
        const Vec3& f = res.forces[i];
        if (!std::isfinite(f.x) || !std::isfinite(f.y) || !std::isfinite(f.z))
          throw Error("run_md: non-finite force from provider '" + p->name() +
                      "' at step " + std::to_string(step));
        forces[i] += f;
      }
    }

    const double t_int0 = TraceSink::now();
    const std::vector<Vec3> v_old = atoms.velocities;
    leapfrog_step(atoms, forces, config.dt, box);
    // on-step kinetic energy from the mid-point velocity estimate
    double ke = 0.0;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      const Vec3 v_mid = 0.5 * (v_old[i] + atoms.velocities[i]);
      ke += 0.5 * atoms.masses[i] * norm2(v_mid);
    }
    summary.potential_energy.push_back(potential);
    summary.total_energy.push_back(potential + ke);
    if (trace)
      trace->record_span(-1, Phase::integrate, t_int0, TraceSink::now(), step);

    if (config.target_temperature > 0.0 && step < config.equil_steps &&
        config.rescale_every > 0 && (step + 1) % config.rescale_every == 0)
      rescale_to_temperature(atoms, config.target_temperature);

    if (traj.is_open() && config.output_every > 0 &&
        (step + 1) % config.output_every == 0)
      write_xyz_frame(traj, atoms, box, step + 1);
    ++summary.steps;
  }
  summary.elapsed_seconds = TraceSink::now() - t0;
  summary.throughput =
      throughput_per_day(summary.steps, config.dt, summary.elapsed_seconds);

  if (trace) {
    for (const auto& s : trace->spans()) {
      summary.phase_seconds[phase_name(s.phase)] += s.t_end - s.t_start;
    }
  }
  return summary;
}

double throughput_per_day(long n_steps, double dt, double elapsed_seconds) {
  require(elapsed_seconds > 0.0, "throughput: elapsed must be > 0");
  return static_cast<double>(n_steps) * dt / elapsed_seconds * 86400.0;
}

}  // namespace nnmd
