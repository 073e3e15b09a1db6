#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "nnmd/classical.hpp"
#include "nnmd/decomp.hpp"
#include "nnmd/deeppot.hpp"
#include "nnmd/trace.hpp"

namespace nnmd {

struct StepContext {
  long step = 0;
  TraceSink* trace = nullptr;
  CollectiveLedger* ledger = nullptr;
};

struct ProviderResult {
  double energy = 0.0;
  std::vector<Vec3> forces;  // per atom of the full system
};

/// Evaluation contract plugged into the MD loop; providers must return
/// finite forces for finite inputs.
class ForceProvider {
 public:
  virtual ~ForceProvider() = default;
  virtual std::string name() const = 0;
  virtual ProviderResult evaluate(const AtomSet& atoms, const SimBox& box,
                                  StepContext& ctx) = 0;
};

/// Short-range pair potential over an atom group (empty mask = all atoms).
/// Group atoms interact only among themselves.
class ClassicalProvider : public ForceProvider {
 public:
  ClassicalProvider(LJParams params, std::vector<std::uint8_t> group_mask = {});
  std::string name() const override { return "classical_lj"; }
  ProviderResult evaluate(const AtomSet&, const SimBox&, StepContext&) override;

 private:
  LJParams params_;
  std::vector<std::uint8_t> group_;
};

/// Deep-potential provider over an atom group, either single-domain or under
/// the virtual domain decomposition.
class DpProvider : public ForceProvider {
 public:
  struct Options {
    bool decomposed = false;
    DdScheme scheme = DdScheme::wide_halo;
    int n_ranks = 1;
    int workers = 1;
    // remaps system species ids onto the model's species table
    // (index = system species, value = model species); empty = identity
    std::vector<int> species_map;
  };
  DpProvider(DPModel model, Options opts,
             std::vector<std::uint8_t> group_mask = {});
  std::string name() const override {
    return opts_.decomposed ? "dp_dd" : "dp_single";
  }
  ProviderResult evaluate(const AtomSet&, const SimBox&, StepContext&) override;
  const DPModel& model() const { return model_; }

 private:
  DPModel model_;
  Options opts_;
  std::vector<std::uint8_t> group_;
};

// ---------------------------------------------------------------------------
// Integration
// ---------------------------------------------------------------------------

/// One leap-frog step: v(t+dt/2) = v(t-dt/2) + (F/m) dt, then
/// r(t+dt) = r(t) + v(t+dt/2) dt, positions wrapped.
void leapfrog_step(AtomSet& atoms, std::span<const Vec3> forces, double dt,
                   const SimBox& box);

/// Kinetic energy from the stored (half-step) velocities.
double kinetic_energy(const AtomSet& atoms);

/// Total linear momentum.
Vec3 momentum(const AtomSet& atoms);

/// Maxwell-like velocity draw at the given temperature with the net momentum
/// removed; deterministic under the seed.
void init_velocities(AtomSet& atoms, double temperature, std::uint64_t seed);

void rescale_to_temperature(AtomSet& atoms, double temperature);

// ---------------------------------------------------------------------------
// The MD loop
// ---------------------------------------------------------------------------

struct MDConfig {
  double dt = 0.002;
  long n_steps = 0;
  long output_every = 0;  // trajectory cadence; 0 writes only the first frame
  // velocity rescaling during the first equil_steps (disabled afterwards)
  long equil_steps = 0;
  double target_temperature = -1.0;
  long rescale_every = 10;
};

struct RunSummary {
  long steps = 0;
  double dt = 0.0;
  double elapsed_seconds = 0.0;
  double throughput = 0.0;  // reduced time units per day
  std::vector<double> potential_energy;  // per step, before integration
  std::vector<double> total_energy;      // potential + on-step kinetic
  std::map<std::string, double> phase_seconds;
};

/// Runs n_steps of NVE (with optional equilibration rescaling), summing all
/// providers each step. Non-finite forces abort with the step index and the
/// offending provider's name.
RunSummary run_md(AtomSet& atoms, const SimBox& box, const MDConfig& config,
                  const std::vector<ForceProvider*>& providers,
                  const std::string& trajectory_path = {},
                  TraceSink* trace = nullptr,
                  CollectiveLedger* ledger = nullptr);

/// Simulated time per wall-clock day.
double throughput_per_day(long n_steps, double dt, double elapsed_seconds);

}  // namespace nnmd
