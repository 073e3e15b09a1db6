#include "nnmd/deeppot.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dp_core.hpp"

namespace nnmd {

// ---------------------------------------------------------------------------
// Model shape handling
// ---------------------------------------------------------------------------

void DPModel::validate() const {
  require(rc > 0.0 && rcs > 0.0 && rcs < rc, "DPModel: need 0 < rcs < rc");
  require(n_max >= 1, "DPModel: n_max must be >= 1");
  require(n_species >= 1 && type_dim >= 1, "DPModel: bad type embedding shape");
  require(n_reduced >= 1 && n_reduced <= n_feat,
          "DPModel: n_reduced must be in [1, n_feat]");
  require(type_embed.size() ==
              static_cast<std::size_t>(n_species) * type_dim,
          "DPModel: type_embed size mismatch");
  require(!embed.empty() && embed.front().n_in == embed_input_dim() &&
              embed.back().n_out == n_feat,
          "DPModel: embed net shape mismatch");
  require(!fit.empty() && fit.front().n_in == descriptor_dim() &&
              fit.back().n_out == 1,
          "DPModel: fit net shape mismatch");
  auto check_chain = [](const std::vector<MlpLayer>& layers) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      require(layers[l].w.size() == static_cast<std::size_t>(layers[l].n_in) *
                                        layers[l].n_out &&
                  layers[l].b.size() == static_cast<std::size_t>(layers[l].n_out),
              "DPModel: layer buffer size mismatch");
      if (l > 0)
        require(layers[l].n_in == layers[l - 1].n_out,
                "DPModel: layer chain mismatch");
    }
  };
  check_chain(embed);
  check_chain(fit);
  require(static_cast<int>(attn.size()) == n_attn,
          "DPModel: attention layer count mismatch");
  for (const auto& a : attn) {
    const std::size_t proj = static_cast<std::size_t>(n_feat) * attn_dim;
    require(a.wq.size() == proj && a.wk.size() == proj && a.wv.size() == proj &&
                a.wo.size() == proj,
            "DPModel: attention weight size mismatch");
  }
}

std::size_t DPModel::n_params() const {
  std::size_t n = type_embed.size();
  for (const auto& l : embed) n += l.w.size() + l.b.size();
  for (const auto& l : fit) n += l.w.size() + l.b.size();
  for (const auto& a : attn)
    n += a.wq.size() + a.wk.size() + a.wv.size() + a.wo.size();
  return n;
}

namespace {

MlpLayer make_layer(int n_in, int n_out, std::mt19937_64& rng) {
  MlpLayer l;
  l.n_in = n_in;
  l.n_out = n_out;
  const double bound = std::sqrt(6.0 / (n_in + n_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  l.w.resize(static_cast<std::size_t>(n_in) * n_out);
  for (auto& w : l.w) w = dist(rng);
  l.b.assign(static_cast<std::size_t>(n_out), 0.0);
  return l;
}

std::vector<double> make_proj(int n_in, int n_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / (n_in + n_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> w(static_cast<std::size_t>(n_in) * n_out);
  for (auto& x : w) x = dist(rng);
  return w;
}

}  // namespace

DPModel init_model(const ModelSpec& spec, std::uint64_t seed) {
  DPModel m;
  m.rc = spec.rc;
  m.rcs = spec.rcs;
  m.n_max = spec.n_max;
  m.n_species = spec.n_species;
  m.type_dim = spec.type_dim;
  m.n_feat = spec.n_feat;
  m.n_reduced = spec.n_reduced;
  m.n_attn = spec.n_attn;
  m.attn_dim = spec.attn_dim;

  std::mt19937_64 rng(seed);
  {
    const double bound = std::sqrt(6.0 / (1 + m.type_dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    m.type_embed.resize(static_cast<std::size_t>(m.n_species) * m.type_dim);
    for (auto& x : m.type_embed) x = dist(rng);
  }
  int prev = m.embed_input_dim();
  for (int h : spec.embed_hidden) {
    m.embed.push_back(make_layer(prev, h, rng));
    prev = h;
  }
  m.embed.push_back(make_layer(prev, m.n_feat, rng));
  for (int l = 0; l < m.n_attn; ++l) {
    AttentionWeights a;
    a.wq = make_proj(m.n_feat, m.attn_dim, rng);
    a.wk = make_proj(m.n_feat, m.attn_dim, rng);
    a.wv = make_proj(m.n_feat, m.attn_dim, rng);
    a.wo = make_proj(m.attn_dim, m.n_feat, rng);
    m.attn.push_back(std::move(a));
  }
  prev = m.descriptor_dim();
  for (int h : spec.fit_hidden) {
    m.fit.push_back(make_layer(prev, h, rng));
    prev = h;
  }
  m.fit.push_back(make_layer(prev, 1, rng));
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Switching function and environment matrix
// ---------------------------------------------------------------------------

SwitchValue switch_fn(double r, double rcs, double rc) {
  require(r > 0.0, "switch_fn: r = 0 singularity");
  require(rcs > 0.0 && rcs < rc, "switch_fn: need 0 < rcs < rc");
  SwitchValue out;
  detail::switch_eval(r, rcs, rc, out.s, out.ds_dr);
  return out;
}

void sort_env_rows(std::vector<EnvRow>& rows) {
  std::sort(rows.begin(), rows.end(), [](const EnvRow& a, const EnvRow& b) {
    if (a.species != b.species) return a.species < b.species;
    const double ra = norm2(a.d), rb = norm2(b.d);
    if (ra != rb) return ra < rb;
    return a.sort_id < b.sort_id;
  });
}

std::vector<EnvRow> center_rows(int center, const NeighborList& list,
                                const AtomSet& atoms, const SimBox& box,
                                const DPModel& model) {
  require(list.mode == ListMode::full,
          "deep potential requires a full neighbor list");
  std::vector<EnvRow> rows;
  const auto& entries = list.neighbors[static_cast<std::size_t>(center)];
  rows.reserve(entries.size());
  for (const auto& e : entries) {
    EnvRow row;
    const std::size_t j = static_cast<std::size_t>(e.index);
    row.d = {image_delta(atoms.positions[j].x,
                         atoms.positions[static_cast<std::size_t>(center)].x,
                         e.shift[0], box.lengths.x),
             image_delta(atoms.positions[j].y,
                         atoms.positions[static_cast<std::size_t>(center)].y,
                         e.shift[1], box.lengths.y),
             image_delta(atoms.positions[j].z,
                         atoms.positions[static_cast<std::size_t>(center)].z,
                         e.shift[2], box.lengths.z)};
    row.species = atoms.species[j];
    row.member = e.index;
    row.image = e.shift;
    row.sort_id = atoms.global_ids[j];
    rows.push_back(row);
  }
  sort_env_rows(rows);
  if (static_cast<int>(rows.size()) > model.n_max)
    throw CapacityError(
        "neighbor overflow: atom id " +
        std::to_string(atoms.global_ids[static_cast<std::size_t>(center)]) +
        " has " + std::to_string(rows.size()) + " neighbors, n_max " +
        std::to_string(model.n_max));
  return rows;
}

EnvironmentMatrix build_environment(int center, const NeighborList& full_list,
                                    const AtomSet& atoms, const SimBox& box,
                                    const DPModel& model) {
  const auto rows = center_rows(center, full_list, atoms, box, model);
  EnvironmentMatrix env;
  env.n_real = static_cast<int>(rows.size());
  env.n_max = model.n_max;
  env.rows.assign(static_cast<std::size_t>(model.n_max), {0.0, 0.0, 0.0, 0.0});
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const double r = norm(rows[k].d);
    const SwitchValue sw = switch_fn(r, model.rcs, model.rc);
    const double sr = sw.s / r;
    env.rows[k] = {sw.s, sr * rows[k].d.x, sr * rows[k].d.y, sr * rows[k].d.z};
    env.neighbor_species.push_back(rows[k].species);
    env.neighbor_atoms.push_back(rows[k].member);
  }
  return env;
}

std::vector<double> descriptor(const EnvironmentMatrix& env, int center_species,
                               const DPModel& model) {
  model.validate();
  detail::Workspace<double> ws;
  ws.n = env.n_real;
  ws.env.assign(env.rows.begin(), env.rows.begin() + env.n_real);
  ws.row_species = env.neighbor_species;
  ws.s.resize(static_cast<std::size_t>(env.n_real));
  ws.r.resize(static_cast<std::size_t>(env.n_real));
  ws.ds.resize(static_cast<std::size_t>(env.n_real));
  for (int k = 0; k < env.n_real; ++k)
    ws.s[static_cast<std::size_t>(k)] = env.rows[static_cast<std::size_t>(k)][0];
  detail::forward_from_rows(model, center_species, ws);
  return ws.d_vec;
}

// ---------------------------------------------------------------------------
// Per-center evaluation
// ---------------------------------------------------------------------------

class DpWorkspace {
 public:
  detail::Workspace<double> ws;
  std::vector<detail::TRow<double>> rows;
  std::vector<detail::TVec3<double>> row_grads;
};

std::unique_ptr<DpWorkspace> make_workspace() {
  return std::make_unique<DpWorkspace>();
}
void free_workspace(DpWorkspace* p) { delete p; }
DpWorkspacePtr new_workspace() { return DpWorkspacePtr(new DpWorkspace); }

CenterGrads evaluate_center(const DPModel& model, int center_species,
                            const std::vector<EnvRow>& rows, DpWorkspace& w,
                            bool with_gradients) {
  require(static_cast<int>(rows.size()) <= model.n_max,
          "evaluate_center: neighbor overflow");
  w.rows.resize(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    w.rows[k].d = {rows[k].d.x, rows[k].d.y, rows[k].d.z};
    w.rows[k].species = rows[k].species;
  }
  const std::span<const detail::TRow<double>> span_rows(w.rows);
  detail::prepare_rows(model, span_rows, w.ws);
  CenterGrads out;
  out.energy = detail::forward_from_rows(model, center_species, w.ws);
  if (with_gradients) {
    detail::backward_from_rows<double>(model, center_species, span_rows, w.ws,
                                       &w.row_grads, nullptr);
    out.row_grads.resize(rows.size());
    Vec3 center_grad{};
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const Vec3 g{w.row_grads[k].x, w.row_grads[k].y, w.row_grads[k].z};
      out.row_grads[k] = g;
      center_grad -= g;
    }
    out.center_grad = center_grad;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Deterministic force assembly
// ---------------------------------------------------------------------------

namespace {

bool shift_merge_before(const IVec3& a, const IVec3& b) {
  const bool az = (a == kZeroShift), bz = (b == kZeroShift);
  if (az != bz) return az;  // zero shift merges first
  return a < b;
}

}  // namespace

void ForceAccumulator::add(int target, const IVec3& image, const Vec3& grad) {
  auto& bucket = buckets_[static_cast<std::size_t>(target)];
  for (auto& [img, sum] : bucket)
    if (img == image) {
      sum += grad;
      return;
    }
  bucket.emplace_back(image, grad);
}

std::vector<std::pair<IVec3, Vec3>> ForceAccumulator::ordered_partials(
    int target) const {
  auto out = buckets_[static_cast<std::size_t>(target)];
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return shift_merge_before(a.first, b.first);
  });
  return out;
}

std::vector<Vec3> ForceAccumulator::finalize() const {
  std::vector<Vec3> forces(buckets_.size());
  for (std::size_t t = 0; t < buckets_.size(); ++t) {
    Vec3 sum{};
    for (const auto& [img, g] : ordered_partials(static_cast<int>(t)))
      sum += g;
    forces[t] = -sum;
  }
  return forces;
}

// ---------------------------------------------------------------------------
// Whole-system evaluation
// ---------------------------------------------------------------------------

DpResult evaluate_dp(const AtomSet& atoms, const SimBox& box,
                     const NeighborList& full_list, const DPModel& model,
                     const LocalMask* mask) {
  model.validate();
  box.validate(model.rc);
  require(full_list.mode == ListMode::full,
          "evaluate_dp: full neighbor list required");
  require(full_list.built_from == static_cast<int>(atoms.size()),
          "evaluate_dp: list built from a different atom count");
  for (int z : atoms.species)
    require(z >= 0 && z < model.n_species,
            "evaluate_dp: species id outside the model's species table");
  const std::size_t n = atoms.size();
  if (mask) {
    require(mask->owned.size() == n, "evaluate_dp: mask size mismatch");
    require(mask->centers.empty() || mask->centers.size() == n,
            "evaluate_dp: center mask size mismatch");
    bool any = false;
    for (auto f : mask->owned) any |= (f != 0);
    require(any, "evaluate_dp: at least one owned atom required");
  }

  auto is_owned = [&](std::size_t i) {
    return !mask || mask->owned[i] != 0;
  };
  auto is_center = [&](std::size_t i) {
    if (!mask) return true;
    if (!mask->centers.empty()) return mask->centers[i] != 0;
    return mask->owned[i] != 0;
  };

  DpResult out;
  out.atom_energy.assign(n, 0.0);
  ForceAccumulator acc(n);
  auto w = new_workspace();

  for (std::size_t i = 0; i < n; ++i) {
    if (!is_center(i)) continue;
    const auto rows =
        center_rows(static_cast<int>(i), full_list, atoms, box, model);
    const CenterGrads cg =
        evaluate_center(model, atoms.species[i], rows, *w, true);
    out.atom_energy[i] = cg.energy;
    if (is_owned(i)) out.energy += cg.energy;
    acc.add(static_cast<int>(i), kZeroShift, cg.center_grad);
    for (std::size_t k = 0; k < rows.size(); ++k)
      acc.add(rows[k].member, rows[k].image, cg.row_grads[k]);
  }

  out.forces = acc.finalize();
  for (std::size_t i = 0; i < n; ++i)
    if (!is_owned(i))
      out.ghost_forces.push_back({static_cast<int>(i), out.forces[i]});
  return out;
}

}  // namespace nnmd
