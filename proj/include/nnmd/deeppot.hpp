#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nnmd/neighbor.hpp"
#include "nnmd/system.hpp"

namespace nnmd {

// ---------------------------------------------------------------------------
// Model parameters
// ---------------------------------------------------------------------------

/// Dense layer, weights row-major: out_i = b_i + sum_j w[i*in + j] * in_j.
struct MlpLayer {
  int n_in = 0, n_out = 0;
  std::vector<double> w;
  std::vector<double> b;
};

/// One gated self-attention block over neighbor feature rows.
/// wq, wk, wv map features (M) to the attention dim; wo projects back.
struct AttentionWeights {
  std::vector<double> wq, wk, wv;  // M x d_a, row-major (in-major)
  std::vector<double> wo;          // d_a x M
};

/// Local deep-potential parameters: smooth radial weight with inner radius
/// rcs and cutoff rc, per-species type embedding, an embedding MLP producing
/// M features per neighbor, optional gated self-attention blocks, and a
/// fitting MLP from the M x m_reduced descriptor to a per-atom energy.
struct DPModel {
  double rc = 0.0;
  double rcs = 0.0;
  int n_max = 64;
  int n_species = 1;
  int type_dim = 4;    // d_z
  int n_feat = 16;     // M
  int n_reduced = 4;   // M_< columns used for the reduced feature matrix
  int n_attn = 0;      // 0 disables attention entirely
  int attn_dim = 16;   // d_a

  std::vector<double> type_embed;  // n_species x type_dim
  std::vector<MlpLayer> embed;     // (1 + 2*type_dim) -> ... -> n_feat, tanh
  std::vector<AttentionWeights> attn;
  std::vector<MlpLayer> fit;       // n_feat*n_reduced -> ... -> 1

  // Metadata recorded in the model file. gate_norm_id = 1 means the angular
  // gate rows are normalized by the sum of squared radial weights.
  int gate_norm_id = 1;

  void validate() const;
  std::size_t n_params() const;
  int embed_input_dim() const { return 1 + 2 * type_dim; }
  int descriptor_dim() const { return n_feat * n_reduced; }
};

/// Shape configuration for building a fresh model.
struct ModelSpec {
  double rc = 1.2;
  double rcs = 0.6;
  int n_max = 64;
  int n_species = 1;
  int type_dim = 4;
  int n_feat = 16;
  int n_reduced = 4;
  int n_attn = 3;
  int attn_dim = 16;
  std::vector<int> embed_hidden{16};
  std::vector<int> fit_hidden{32, 32};
};

/// Seeded Xavier-uniform initialization.
DPModel init_model(const ModelSpec& spec, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Switching function and environment matrix
// ---------------------------------------------------------------------------

struct SwitchValue {
  double s = 0.0;
  double ds_dr = 0.0;
};

/// Radial weight s(r): 1/r up to rcs, smoothly switched to zero at rc with a
/// quintic that has vanishing value and slope at both ends.
SwitchValue switch_fn(double r, double rcs, double rc);

/// Per-center environment matrix: n_max x 4 rows (s, s*dx/r, s*dy/r, s*dz/r),
/// ordered by (species, distance, global id) and zero-padded.
struct EnvironmentMatrix {
  int n_real = 0;
  int n_max = 0;
  std::vector<std::array<double, 4>> rows;  // n_max entries
  std::vector<int> neighbor_species;        // n_real entries
  std::vector<int> neighbor_atoms;          // n_real entries (atom indices)
};

EnvironmentMatrix build_environment(int center, const NeighborList& full_list,
                                    const AtomSet& atoms, const SimBox& box,
                                    const DPModel& model);

/// Flattened M x m_reduced descriptor for one center, including the
/// attention blocks. Forward-only; used directly by tests and tools.
std::vector<double> descriptor(const EnvironmentMatrix& env, int center_species,
                               const DPModel& model);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Per-atom ownership flags for decomposed evaluation. `owned` marks atoms
/// whose energies count toward the total (Eq. of the masked sum); `centers`,
/// when non-empty, widens the set of atoms whose energies are differentiated
/// (wide-halo scheme needs first-layer ghosts as centers without counting
/// their energies).
struct LocalMask {
  std::vector<std::uint8_t> owned;
  std::vector<std::uint8_t> centers;  // empty -> centers == owned
};

struct GhostForce {
  int atom = 0;       // index of the non-owned atom
  Vec3 force{};       // accumulated force to be routed to the owner
};

struct DpResult {
  double energy = 0.0;                // sum of owned per-atom energies
  std::vector<double> atom_energy;    // evaluated centers; 0 elsewhere
  std::vector<Vec3> forces;           // per-atom assembled forces
  std::vector<GhostForce> ghost_forces;
};

/// Evaluates the model over a full neighbor list. Every owned atom must have
/// a complete neighbor list (the decomposition layer guarantees this for its
/// clusters). Forces come from the exact hand-derived backward pass.
DpResult evaluate_dp(const AtomSet& atoms, const SimBox& box,
                     const NeighborList& full_list, const DPModel& model,
                     const LocalMask* mask = nullptr);

// ---------------------------------------------------------------------------
// Low-level per-center interface (shared with the decomposition layer)
// ---------------------------------------------------------------------------

/// One neighbor row in canonical form. The displacement d must be computed
/// as image_delta(source positions, relative shift) so that decomposed and
/// single-domain evaluations agree bitwise.
struct EnvRow {
  Vec3 d{};
  int species = 0;
  int member = 0;            // caller-defined member index (scatter target)
  IVec3 image = kZeroShift;  // interaction image shift of this row
  std::int64_t sort_id = 0;  // global id used for deterministic ordering
};

/// Sorts rows by (species, |d|, sort_id); the key set is always unique.
void sort_env_rows(std::vector<EnvRow>& rows);

/// Sorted canonical rows of one center from a full neighbor list; raises a
/// CapacityError naming the atom when the model capacity is exceeded.
std::vector<EnvRow> center_rows(int center, const NeighborList& full_list,
                                const AtomSet& atoms, const SimBox& box,
                                const DPModel& model);

struct CenterGrads {
  double energy = 0.0;
  Vec3 center_grad{};           // d e / d r_center
  std::vector<Vec3> row_grads;  // d e / d r_row, aligned with rows
};

class DpWorkspace;
std::unique_ptr<DpWorkspace> make_workspace();
void free_workspace(DpWorkspace*);

struct DpWorkspaceDeleter {
  void operator()(DpWorkspace* p) const { free_workspace(p); }
};
using DpWorkspacePtr = std::unique_ptr<DpWorkspace, DpWorkspaceDeleter>;
DpWorkspacePtr new_workspace();

/// Energy and exact position gradients of one center. Rows must already be
/// sorted with sort_env_rows.
CenterGrads evaluate_center(const DPModel& model, int center_species,
                            const std::vector<EnvRow>& rows, DpWorkspace& ws,
                            bool with_gradients = true);

/// Deterministic force assembly: per-target partial sums keyed by the
/// interaction image shift, merged zero-shift first and then in ascending
/// lexicographic shift order. This fixed order is what makes a one-rank
/// decomposition reproduce the single-domain forces bit for bit.
class ForceAccumulator {
 public:
  explicit ForceAccumulator(std::size_t n_targets) : buckets_(n_targets) {}

  void add(int target, const IVec3& image, const Vec3& grad);

  /// Partials for one target, merge-ordered.
  std::vector<std::pair<IVec3, Vec3>> ordered_partials(int target) const;

  /// Force per target: negative of the merge-ordered gradient sum.
  std::vector<Vec3> finalize() const;

  std::size_t n_targets() const { return buckets_.size(); }

 private:
  std::vector<std::vector<std::pair<IVec3, Vec3>>> buckets_;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainingFrame {
  AtomSet atoms;
  SimBox box;
  double energy = 0.0;
  std::vector<Vec3> forces;
};

struct TrainingSet {
  std::vector<TrainingFrame> frames;
  std::vector<int> train_idx;
  std::vector<int> val_idx;

  void validate() const;
};

enum class Optimizer { gradient_descent, adam };

struct TrainHyper {
  int epochs = 1000;
  double lr_start = 0.01;
  double lr_end = 0.001;
  double w_energy = 1.0;  // weight of the per-atom energy MSE
  double w_force = 10.0;  // weight of the per-component force MSE
  // Hand-rolled deterministic Adam by default; plain gradient descent was too
  // sensitive to the feature scale to converge reliably at desk scale.
  Optimizer optimizer = Optimizer::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct TrainResult {
  std::vector<double> train_rmse;  // force RMSE per epoch (epoch 0 = initial)
  std::vector<double> val_rmse;
  int epochs_run = 0;
  bool diverged = false;
};

/// Full-batch gradient descent with exponential learning-rate decay.
/// Gradients of the force-matching term are exact (forward-over-reverse).
/// On divergence (non-finite loss) training stops and the model keeps the
/// last finite parameters.
TrainResult train(DPModel& model, const TrainingSet& data,
                  const TrainHyper& hp);

double force_rmse(std::span<const Vec3> pred, std::span<const Vec3> ref);

// ---------------------------------------------------------------------------
// Serialization (binary, little-endian 64-bit floats; see README)
// ---------------------------------------------------------------------------

void save_model(const DPModel& model, const std::string& path);
DPModel load_model(const std::string& path);

}  // namespace nnmd
