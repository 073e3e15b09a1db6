#include <cmath>

#include "dp_core.hpp"
#include "nnmd/deeppot.hpp"

// Full-batch gradient descent on w_e * MSE(E/N) + w_f * MSE(F).
//
// The energy term uses the exact reverse-mode parameter gradient. The force
// term needs d/dtheta of position gradients, a second-order quantity: it is
// obtained exactly by seeding the positions with the direction (F - F_ref)
// as dual numbers and reading the derivative lane of the reverse-mode
// parameter gradient (forward-over-reverse).

namespace nnmd {

namespace {

template <class A, class B, class F>
void zip_grad_vectors(A& a, B& b, F&& f) {
  f(a.type_embed, b.type_embed);
  for (std::size_t l = 0; l < a.embed.size(); ++l) {
    f(a.embed[l].w, b.embed[l].w);
    f(a.embed[l].b, b.embed[l].b);
  }
  for (std::size_t l = 0; l < a.attn.size(); ++l) {
    f(a.attn[l].wq, b.attn[l].wq);
    f(a.attn[l].wk, b.attn[l].wk);
    f(a.attn[l].wv, b.attn[l].wv);
    f(a.attn[l].wo, b.attn[l].wo);
  }
  for (std::size_t l = 0; l < a.fit.size(); ++l) {
    f(a.fit[l].w, b.fit[l].w);
    f(a.fit[l].b, b.fit[l].b);
  }
}

template <class F>
void zip_model_params(DPModel& m, detail::ModelGrads<double>& g, F&& f) {
  f(m.type_embed, g.type_embed);
  for (std::size_t l = 0; l < m.embed.size(); ++l) {
    f(m.embed[l].w, g.embed[l].w);
    f(m.embed[l].b, g.embed[l].b);
  }
  for (std::size_t l = 0; l < m.attn.size(); ++l) {
    f(m.attn[l].wq, g.attn[l].wq);
    f(m.attn[l].wk, g.attn[l].wk);
    f(m.attn[l].wv, g.attn[l].wv);
    f(m.attn[l].wo, g.attn[l].wo);
  }
  for (std::size_t l = 0; l < m.fit.size(); ++l) {
    f(m.fit[l].w, g.fit[l].w);
    f(m.fit[l].b, g.fit[l].b);
  }
}

struct FrameEval {
  double energy = 0.0;
  std::vector<Vec3> forces;
};

struct FrameRows {
  // per-center sorted canonical rows, shared by the plain and dual passes
  std::vector<std::vector<EnvRow>> rows;
};

FrameRows build_frame_rows(const DPModel& model, const TrainingFrame& f) {
  const NeighborList list =
      build_neighbor_list(f.atoms, f.box, model.rc, ListMode::full);
  FrameRows fr;
  fr.rows.resize(f.atoms.size());
  for (std::size_t i = 0; i < f.atoms.size(); ++i)
    fr.rows[i] =
        center_rows(static_cast<int>(i), list, f.atoms, f.box, model);
  return fr;
}

FrameEval eval_frame(const DPModel& model, const TrainingFrame& f,
                     const FrameRows& fr, DpWorkspace& w) {
  FrameEval out;
  ForceAccumulator acc(f.atoms.size());
  for (std::size_t i = 0; i < f.atoms.size(); ++i) {
    const CenterGrads cg =
        evaluate_center(model, f.atoms.species[i], fr.rows[i], w, true);
    out.energy += cg.energy;
    acc.add(static_cast<int>(i), kZeroShift, cg.center_grad);
    for (std::size_t k = 0; k < fr.rows[i].size(); ++k)
      acc.add(fr.rows[i][k].member, fr.rows[i][k].image, cg.row_grads[k]);
  }
  out.forces = acc.finalize();
  return out;
}

/// Parameter gradient of the total energy, carried as duals whose derivative
/// lane is the directional derivative along the position seed.
void dual_param_grads(const DPModel& model, const TrainingFrame& f,
                      const FrameRows& fr, const std::vector<Vec3>& seed,
                      detail::Workspace<Dual>& ws,
                      detail::ModelGrads<Dual>& grads) {
  std::vector<detail::TRow<Dual>> rows;
  for (std::size_t i = 0; i < f.atoms.size(); ++i) {
    rows.clear();
    rows.reserve(fr.rows[i].size());
    for (const EnvRow& er : fr.rows[i]) {
      const std::size_t j = static_cast<std::size_t>(er.member);
      detail::TRow<Dual> tr;
      tr.d.x = Dual(er.d.x, seed[j].x - seed[i].x);
      tr.d.y = Dual(er.d.y, seed[j].y - seed[i].y);
      tr.d.z = Dual(er.d.z, seed[j].z - seed[i].z);
      tr.species = er.species;
      rows.push_back(tr);
    }
    const std::span<const detail::TRow<Dual>> span_rows(rows);
    detail::prepare_rows(model, span_rows, ws);
    detail::forward_from_rows(model, f.atoms.species[i], ws);
    detail::backward_from_rows<Dual>(model, f.atoms.species[i], span_rows, ws,
                                     nullptr, &grads);
  }
}

double frame_force_sq_sum(const FrameEval& ev, const TrainingFrame& f) {
  double acc = 0.0;
  for (std::size_t a = 0; a < ev.forces.size(); ++a) {
    const Vec3 d = ev.forces[a] - f.forces[a];
    acc += norm2(d);
  }
  return acc;
}

}  // namespace

void TrainingSet::validate() const {
  std::vector<char> used(frames.size(), 0);
  auto check = [&](const std::vector<int>& idx) {
    for (int i : idx) {
      require(i >= 0 && i < static_cast<int>(frames.size()),
              "TrainingSet: split index out of range");
      require(!used[static_cast<std::size_t>(i)],
              "TrainingSet: train/validation splits overlap");
      used[static_cast<std::size_t>(i)] = 1;
    }
  };
  check(train_idx);
  check(val_idx);
  for (const auto& f : frames) {
    require(f.forces.size() == f.atoms.size(),
            "TrainingSet: force array size mismatch");
    for (const auto& fv : f.forces)
      require(std::isfinite(fv.x) && std::isfinite(fv.y) && std::isfinite(fv.z),
              "TrainingSet: non-finite reference force");
  }
}

double force_rmse(std::span<const Vec3> pred, std::span<const Vec3> ref) {
  require(pred.size() == ref.size(), "force_rmse: shape mismatch");
  if (pred.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += norm2(pred[i] - ref[i]);
  return std::sqrt(acc / (3.0 * static_cast<double>(pred.size())));
}

TrainResult train(DPModel& model, const TrainingSet& data,
                  const TrainHyper& hp) {
  model.validate();
  data.validate();
  require(!data.train_idx.empty(), "train: empty training split");
  require(hp.epochs >= 0 && hp.lr_start > 0.0 && hp.lr_end > 0.0,
          "train: bad hyperparameters");

  TrainResult result;
  if (hp.epochs == 0) return result;

  // Neighbor geometry is fixed per frame; build row sets once.
  std::vector<FrameRows> rows(data.frames.size());
  for (std::size_t i = 0; i < data.frames.size(); ++i)
    rows[i] = build_frame_rows(model, data.frames[i]);

  auto w = new_workspace();
  detail::Workspace<Dual> dual_ws;
  detail::ModelGrads<double> grad;
  detail::ModelGrads<Dual> dual_grad;
  grad.init(model);
  dual_grad.init(model);
  detail::ModelGrads<double> adam_m, adam_v;
  adam_m.init(model);
  adam_v.init(model);

  DPModel checkpoint = model;

  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    const double frac =
        hp.epochs > 1 ? static_cast<double>(epoch) / (hp.epochs - 1) : 0.0;
    const double lr = hp.lr_start * std::pow(hp.lr_end / hp.lr_start, frac);

    zip_model_params(model, grad, [](auto&, auto& g) {
      std::fill(g.begin(), g.end(), 0.0);
    });

    double train_sq = 0.0;
    std::size_t train_comp = 0;
    bool finite = true;
    for (int fi : data.train_idx) {
      const TrainingFrame& f = data.frames[static_cast<std::size_t>(fi)];
      const std::size_t n = f.atoms.size();
      const FrameEval ev = eval_frame(model, f, rows[static_cast<std::size_t>(fi)], *w);
      if (!std::isfinite(ev.energy)) finite = false;

      std::vector<Vec3> seed(n);
      for (std::size_t a = 0; a < n; ++a) seed[a] = ev.forces[a] - f.forces[a];
      train_sq += frame_force_sq_sum(ev, f);
      train_comp += 3 * n;

      zip_grad_vectors(dual_grad, dual_grad, [](auto& a, auto&) {
        std::fill(a.begin(), a.end(), Dual{});
      });
      dual_param_grads(model, f, rows[static_cast<std::size_t>(fi)], seed,
                       dual_ws, dual_grad);

      const double dn = static_cast<double>(n);
      const double ce =
          hp.w_energy * 2.0 * (ev.energy - f.energy) / (dn * dn);
      const double cf = -hp.w_force * 2.0 / (3.0 * dn);
      zip_grad_vectors(grad, dual_grad, [&](auto& g, auto& dg) {
        for (std::size_t p = 0; p < g.size(); ++p)
          g[p] += ce * dg[p].v + cf * dg[p].d;
      });
    }

    const double train_rmse =
        std::sqrt(train_sq / static_cast<double>(train_comp));
    double val_rmse = 0.0;
    if (!data.val_idx.empty()) {
      double vsq = 0.0;
      std::size_t vcomp = 0;
      for (int fi : data.val_idx) {
        const TrainingFrame& f = data.frames[static_cast<std::size_t>(fi)];
        const FrameEval ev =
            eval_frame(model, f, rows[static_cast<std::size_t>(fi)], *w);
        vsq += frame_force_sq_sum(ev, f);
        vcomp += 3 * f.atoms.size();
      }
      val_rmse = std::sqrt(vsq / static_cast<double>(vcomp));
    }
    if (!finite || !std::isfinite(train_rmse) || !std::isfinite(val_rmse)) {
      model = checkpoint;  // last finite parameters
      result.diverged = true;
      break;
    }
    result.train_rmse.push_back(train_rmse);
    result.val_rmse.push_back(val_rmse);
    checkpoint = model;

    const double inv_frames = 1.0 / static_cast<double>(data.train_idx.size());
    std::vector<std::pair<double*, std::size_t>> params, grads, ms, vs;
    zip_model_params(model, grad, [&](auto& p, auto& g) {
      params.emplace_back(p.data(), p.size());
      grads.emplace_back(g.data(), g.size());
    });
    zip_grad_vectors(adam_m, adam_v, [&](auto& m, auto& v) {
      ms.emplace_back(m.data(), m.size());
      vs.emplace_back(v.data(), v.size());
    });
    if (hp.optimizer == Optimizer::adam) {
      const double bc1 = 1.0 - std::pow(hp.adam_beta1, epoch + 1.0);
      const double bc2 = 1.0 - std::pow(hp.adam_beta2, epoch + 1.0);
      for (std::size_t b = 0; b < params.size(); ++b) {
        double* p = params[b].first;
        const double* g = grads[b].first;
        double* m = ms[b].first;
        double* v = vs[b].first;
        for (std::size_t k = 0; k < params[b].second; ++k) {
          const double gk = g[k] * inv_frames;
          m[k] = hp.adam_beta1 * m[k] + (1.0 - hp.adam_beta1) * gk;
          v[k] = hp.adam_beta2 * v[k] + (1.0 - hp.adam_beta2) * gk * gk;
          p[k] -= lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + hp.adam_eps);
        }
      }
    } else {
      for (std::size_t b = 0; b < params.size(); ++b)
        for (std::size_t k = 0; k < params[b].second; ++k)
          params[b].first[k] -= lr * inv_frames * grads[b].first[k];
    }
    ++result.epochs_run;
  }
  return result;
}

}  // namespace nnmd
