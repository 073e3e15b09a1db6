// Per-center forward and hand-derived backward pass of the local deep
// potential, templated on the scalar type so the same code serves plain
// evaluation (double) and forward-over-reverse training gradients (Dual).
//
// Pipeline per center atom i with n real neighbor rows:
//   row k:  r_k, radial weight s(r_k), environment row
//           R[k] = (s, s*dx/r, s*dy/r, s*dz/r)
//           embed input u_k = (s, type_embed[z_k], type_embed[z_i])
//           G0[k] = embed MLP(u_k)                       (M features, tanh)
//   n_attn gated self-attention blocks over rows (below)
//   A = G^T R / n_max,  B = R^T G_reduced / n_max,  D = A B  (flattened)
//   e_i = fit MLP(D)
//
// Attention block:
//   Q = G Wq, K = G Wk, V = G Wv, scores S = Q K^T / sqrt(d_a)
//   P = softmax over rows with per-column weights s^2 (a neighbor's influence
//       as key/value fades smoothly to zero at the cutoff, so the energy is
//       continuous when the neighbor list changes)
//   Theta = (R R^T) / sum(s^2)   -- angular gate, O(1) by construction
//   G <- G + ((P .* Theta) V) Wo

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "nnmd/deeppot.hpp"
#include "nnmd/dual.hpp"

namespace nnmd::detail {

template <class T>
struct TVec3 {
  T x{}, y{}, z{};
};

template <class T>
struct TRow {
  TVec3<T> d;
  int species = 0;
};

template <class T>
struct LayerGrads {
  std::vector<T> w, b;
};

template <class T>
struct AttnGrads {
  std::vector<T> wq, wk, wv, wo;
};

template <class T>
struct ModelGrads {
  std::vector<T> type_embed;
  std::vector<LayerGrads<T>> embed, fit;
  std::vector<AttnGrads<T>> attn;

  void init(const DPModel& m) {
    type_embed.assign(m.type_embed.size(), T{});
    auto init_layers = [](std::vector<LayerGrads<T>>& dst,
                          const std::vector<MlpLayer>& src) {
      dst.resize(src.size());
      for (std::size_t l = 0; l < src.size(); ++l) {
        dst[l].w.assign(src[l].w.size(), T{});
        dst[l].b.assign(src[l].b.size(), T{});
      }
    };
    init_layers(embed, m.embed);
    init_layers(fit, m.fit);
    attn.resize(m.attn.size());
    for (std::size_t l = 0; l < m.attn.size(); ++l) {
      attn[l].wq.assign(m.attn[l].wq.size(), T{});
      attn[l].wk.assign(m.attn[l].wk.size(), T{});
      attn[l].wv.assign(m.attn[l].wv.size(), T{});
      attn[l].wo.assign(m.attn[l].wo.size(), T{});
    }
  }
};

template <class T>
struct AttnStack {
  std::vector<T> g_in;             // n*M
  std::vector<T> q, k, v, h;       // n*da
  std::vector<T> p, pu, theta, c;  // n*n
  T sigma_s{};
};

template <class T>
struct Workspace {
  int n = 0;
  std::vector<T> r, s, ds;
  std::vector<std::array<T, 4>> env;
  std::vector<int> row_species;

  std::vector<std::vector<T>> embed_act;
  std::vector<AttnStack<T>> attn;
  std::vector<T> g_fin;  // n*M, post-attention features
  std::vector<T> a_mat;  // M*4
  std::vector<T> b_mat;  // 4*mr
  std::vector<T> d_vec;  // M*mr descriptor
  std::vector<std::vector<T>> fit_act;

  // scratch
  std::vector<T> score_row;
  std::vector<T> d_gfin, d_a, d_b, d_d;
  std::vector<std::array<T, 4>> d_env;
  std::vector<T> ds_extra;
  std::vector<T> d_q, d_k, d_v, d_h, d_s_mat, d_p, d_theta, d_c, d_w;
  std::vector<T> mlp_delta, mlp_delta_prev;
};

template <class T>
inline void switch_eval(const T& r, double rcs, double rc, T& s, T& ds) {
  if (primal(r) >= rc) {
    s = T{};
    ds = T{};
    return;
  }
  const T inv_r = 1.0 / r;
  if (primal(r) <= rcs) {
    s = inv_r;
    ds = -inv_r * inv_r;
    return;
  }
  const double span = rc - rcs;
  const T u = (r - rcs) * (1.0 / span);
  const T u2 = u * u;
  const T u3 = u2 * u;
  const T w = u3 * (u * (-6.0 * u + 15.0) - 10.0) + 1.0;
  const T dw = -30.0 * u2 * (u - 1.0) * (u - 1.0) * (1.0 / span);
  s = w * inv_r;
  ds = dw * inv_r - w * inv_r * inv_r;
}

template <class T>
inline void dense(const MlpLayer& layer, const T* x, T* out) {
  for (int i = 0; i < layer.n_out; ++i) {
    T acc = layer.b[static_cast<std::size_t>(i)];
    const double* wrow =
        layer.w.data() + static_cast<std::size_t>(i) * layer.n_in;
    for (int j = 0; j < layer.n_in; ++j) acc += wrow[j] * x[j];
    out[i] = acc;
  }
}

/// MLP forward storing post-activation stacks; act[0] must hold the input
/// for the given row. tanh throughout, linear last layer when requested.
template <class T>
inline void mlp_forward(const std::vector<MlpLayer>& layers,
                        std::vector<std::vector<T>>& act, int row,
                        bool last_linear) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const MlpLayer& ly = layers[l];
    const T* x = act[l].data() + static_cast<std::size_t>(row) * ly.n_in;
    T* out = act[l + 1].data() + static_cast<std::size_t>(row) * ly.n_out;
    dense(ly, x, out);
    if (!(last_linear && l + 1 == layers.size()))
      for (int i = 0; i < ly.n_out; ++i) out[i] = tanh(out[i]);
  }
}

/// Reverse of mlp_forward; delta enters as d/d(output), leaves as d/d(input).
template <class T>
inline void mlp_backward(const std::vector<MlpLayer>& layers,
                         const std::vector<std::vector<T>>& act, int row,
                         bool last_linear, std::vector<T>& delta,
                         std::vector<T>& delta_prev,
                         std::vector<LayerGrads<T>>* grads) {
  for (std::size_t li = layers.size(); li-- > 0;) {
    const MlpLayer& ly = layers[li];
    const T* x = act[li].data() + static_cast<std::size_t>(row) * ly.n_in;
    const T* y = act[li + 1].data() + static_cast<std::size_t>(row) * ly.n_out;
    if (!(last_linear && li + 1 == layers.size()))
      for (int i = 0; i < ly.n_out; ++i)
        delta[static_cast<std::size_t>(i)] =
            delta[static_cast<std::size_t>(i)] * (1.0 - y[i] * y[i]);
    delta_prev.assign(static_cast<std::size_t>(ly.n_in), T{});
    for (int i = 0; i < ly.n_out; ++i) {
      const T dz = delta[static_cast<std::size_t>(i)];
      const double* wrow =
          ly.w.data() + static_cast<std::size_t>(i) * ly.n_in;
      for (int j = 0; j < ly.n_in; ++j)
        delta_prev[static_cast<std::size_t>(j)] += wrow[j] * dz;
      if (grads) {
        T* gw = (*grads)[li].w.data() + static_cast<std::size_t>(i) * ly.n_in;
        for (int j = 0; j < ly.n_in; ++j) gw[j] += dz * x[j];
        (*grads)[li].b[static_cast<std::size_t>(i)] += dz;
      }
    }
    std::swap(delta, delta_prev);
  }
}

/// Geometry rows (r, s, ds, env row) from canonical displacements, in the
/// caller's (already deterministic) row order.
template <class T>
void prepare_rows(const DPModel& m, std::span<const TRow<T>> rows,
                  Workspace<T>& ws) {
  const int n = static_cast<int>(rows.size());
  ws.n = n;
  ws.r.resize(static_cast<std::size_t>(n));
  ws.s.resize(static_cast<std::size_t>(n));
  ws.ds.resize(static_cast<std::size_t>(n));
  ws.env.resize(static_cast<std::size_t>(n));
  ws.row_species.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const auto& d = rows[static_cast<std::size_t>(k)].d;
    const T r = sqrt(d.x * d.x + d.y * d.y + d.z * d.z);
    T s, ds;
    switch_eval(r, m.rcs, m.rc, s, ds);
    ws.r[static_cast<std::size_t>(k)] = r;
    ws.s[static_cast<std::size_t>(k)] = s;
    ws.ds[static_cast<std::size_t>(k)] = ds;
    const T sr = s / r;
    ws.env[static_cast<std::size_t>(k)] = {s, sr * d.x, sr * d.y, sr * d.z};
    ws.row_species[static_cast<std::size_t>(k)] =
        rows[static_cast<std::size_t>(k)].species;
  }
}

/// Forward pass from prepared rows; returns the per-atom energy.
template <class T>
T forward_from_rows(const DPModel& m, int center_species, Workspace<T>& ws) {
  const int n = ws.n;
  const int M = m.n_feat;
  const int mr = m.n_reduced;
  const int da = m.attn_dim;
  const int in_dim = m.embed_input_dim();
  const int dz = m.type_dim;

  ws.embed_act.resize(m.embed.size() + 1);
  ws.embed_act[0].resize(static_cast<std::size_t>(n) * in_dim);
  for (std::size_t l = 0; l < m.embed.size(); ++l)
    ws.embed_act[l + 1].resize(static_cast<std::size_t>(n) * m.embed[l].n_out);
  const double* te_center =
      m.type_embed.data() + static_cast<std::size_t>(center_species) * dz;
  for (int k = 0; k < n; ++k) {
    T* u = ws.embed_act[0].data() + static_cast<std::size_t>(k) * in_dim;
    u[0] = ws.s[static_cast<std::size_t>(k)];
    const double* te_j =
        m.type_embed.data() +
        static_cast<std::size_t>(ws.row_species[static_cast<std::size_t>(k)]) * dz;
    for (int t = 0; t < dz; ++t) u[1 + t] = te_j[t];
    for (int t = 0; t < dz; ++t) u[1 + dz + t] = te_center[t];
    mlp_forward(m.embed, ws.embed_act, k, /*last_linear=*/false);
  }

  ws.g_fin = ws.embed_act.back();
  ws.attn.resize(static_cast<std::size_t>(m.n_attn));
  const double inv_sqrt_da = 1.0 / std::sqrt(static_cast<double>(da));
  for (int l = 0; l < m.n_attn && n > 0; ++l) {
    AttnStack<T>& st = ws.attn[static_cast<std::size_t>(l)];
    const AttentionWeights& aw = m.attn[static_cast<std::size_t>(l)];
    st.g_in = ws.g_fin;
    st.q.assign(static_cast<std::size_t>(n) * da, T{});
    st.k.assign(static_cast<std::size_t>(n) * da, T{});
    st.v.assign(static_cast<std::size_t>(n) * da, T{});
    for (int k = 0; k < n; ++k) {
      const T* g = st.g_in.data() + static_cast<std::size_t>(k) * M;
      T* q = st.q.data() + static_cast<std::size_t>(k) * da;
      T* kk = st.k.data() + static_cast<std::size_t>(k) * da;
      T* v = st.v.data() + static_cast<std::size_t>(k) * da;
      for (int mm = 0; mm < M; ++mm) {
        const T gm = g[mm];
        const double* wq = aw.wq.data() + static_cast<std::size_t>(mm) * da;
        const double* wk = aw.wk.data() + static_cast<std::size_t>(mm) * da;
        const double* wv = aw.wv.data() + static_cast<std::size_t>(mm) * da;
        for (int a = 0; a < da; ++a) {
          q[a] += gm * wq[a];
          kk[a] += gm * wk[a];
          v[a] += gm * wv[a];
        }
      }
    }

    st.sigma_s = T{};
    for (int k = 0; k < n; ++k)
      st.sigma_s +=
          ws.s[static_cast<std::size_t>(k)] * ws.s[static_cast<std::size_t>(k)];
    const bool gate_ok = primal(st.sigma_s) > 0.0;
    st.c.assign(static_cast<std::size_t>(n) * n, T{});
    st.theta.assign(static_cast<std::size_t>(n) * n, T{});
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < n; ++j) {
        T acc{};
        for (int c = 0; c < 4; ++c)
          acc += ws.env[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)] *
                 ws.env[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
        st.c[static_cast<std::size_t>(k) * n + j] = acc;
        if (gate_ok)
          st.theta[static_cast<std::size_t>(k) * n + j] = acc / st.sigma_s;
      }

    st.p.assign(static_cast<std::size_t>(n) * n, T{});
    st.pu.assign(static_cast<std::size_t>(n) * n, T{});
    ws.score_row.resize(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
      const T* q = st.q.data() + static_cast<std::size_t>(k) * da;
      for (int j = 0; j < n; ++j) {
        T acc{};
        const T* kj = st.k.data() + static_cast<std::size_t>(j) * da;
        for (int a = 0; a < da; ++a) acc += q[a] * kj[a];
        ws.score_row[static_cast<std::size_t>(j)] = acc * inv_sqrt_da;
      }
      T mx = ws.score_row[0];
      for (int j = 1; j < n; ++j)
        if (primal(ws.score_row[static_cast<std::size_t>(j)]) > primal(mx))
          mx = ws.score_row[static_cast<std::size_t>(j)];
      T denom{};
      for (int j = 0; j < n; ++j) {
        const T wgt =
            ws.s[static_cast<std::size_t>(j)] * ws.s[static_cast<std::size_t>(j)];
        const T e = exp(ws.score_row[static_cast<std::size_t>(j)] - mx);
        st.pu[static_cast<std::size_t>(k) * n + j] = e;
        denom += wgt * e;
      }
      if (primal(denom) > 0.0) {
        for (int j = 0; j < n; ++j) {
          const T wgt = ws.s[static_cast<std::size_t>(j)] *
                        ws.s[static_cast<std::size_t>(j)];
          const T pu = st.pu[static_cast<std::size_t>(k) * n + j] / denom;
          st.pu[static_cast<std::size_t>(k) * n + j] = pu;
          st.p[static_cast<std::size_t>(k) * n + j] = wgt * pu;
        }
      } else {
        for (int j = 0; j < n; ++j) {
          st.pu[static_cast<std::size_t>(k) * n + j] = T{};
          st.p[static_cast<std::size_t>(k) * n + j] = T{};
        }
      }
    }

    st.h.assign(static_cast<std::size_t>(n) * da, T{});
    for (int k = 0; k < n; ++k) {
      T* hk = st.h.data() + static_cast<std::size_t>(k) * da;
      for (int j = 0; j < n; ++j) {
        const T ptil = st.p[static_cast<std::size_t>(k) * n + j] *
                       st.theta[static_cast<std::size_t>(k) * n + j];
        const T* vj = st.v.data() + static_cast<std::size_t>(j) * da;
        for (int a = 0; a < da; ++a) hk[a] += ptil * vj[a];
      }
    }
    for (int k = 0; k < n; ++k) {
      const T* hk = st.h.data() + static_cast<std::size_t>(k) * da;
      T* gk = ws.g_fin.data() + static_cast<std::size_t>(k) * M;
      for (int a = 0; a < da; ++a) {
        const double* wo = aw.wo.data() + static_cast<std::size_t>(a) * M;
        const T ha = hk[a];
        for (int mm = 0; mm < M; ++mm) gk[mm] += ha * wo[mm];
      }
    }
  }

  // one factor of 1/sqrt(n_max) per contraction side keeps the
  // descriptor O(1) at realistic neighbor counts
  const double inv_nmax = 1.0 / std::sqrt(static_cast<double>(m.n_max));
  ws.a_mat.assign(static_cast<std::size_t>(M) * 4, T{});
  ws.b_mat.assign(static_cast<std::size_t>(4) * mr, T{});
  for (int k = 0; k < n; ++k) {
    const T* g = ws.g_fin.data() + static_cast<std::size_t>(k) * M;
    const auto& rrow = ws.env[static_cast<std::size_t>(k)];
    for (int mm = 0; mm < M; ++mm)
      for (int c = 0; c < 4; ++c)
        ws.a_mat[static_cast<std::size_t>(mm) * 4 + c] +=
            g[mm] * rrow[static_cast<std::size_t>(c)];
    for (int c = 0; c < 4; ++c)
      for (int q = 0; q < mr; ++q)
        ws.b_mat[static_cast<std::size_t>(c) * mr + q] +=
            rrow[static_cast<std::size_t>(c)] * g[q];
  }
  for (auto& x : ws.a_mat) x = x * inv_nmax;
  for (auto& x : ws.b_mat) x = x * inv_nmax;
  ws.d_vec.assign(static_cast<std::size_t>(M) * mr, T{});
  for (int mm = 0; mm < M; ++mm)
    for (int c = 0; c < 4; ++c) {
      const T a = ws.a_mat[static_cast<std::size_t>(mm) * 4 + c];
      for (int q = 0; q < mr; ++q)
        ws.d_vec[static_cast<std::size_t>(mm) * mr + q] +=
            a * ws.b_mat[static_cast<std::size_t>(c) * mr + q];
    }

  ws.fit_act.resize(m.fit.size() + 1);
  ws.fit_act[0] = ws.d_vec;
  for (std::size_t l = 0; l < m.fit.size(); ++l)
    ws.fit_act[l + 1].resize(static_cast<std::size_t>(m.fit[l].n_out));
  mlp_forward(m.fit, ws.fit_act, 0, /*last_linear=*/true);
  return ws.fit_act.back()[0];
}

/// Reverse pass with seed d(e) = 1. Emits position gradients per row (when
/// row_grads is given) and parameter gradients (when pgrads is given).
template <class T>
void backward_from_rows(const DPModel& m, int center_species,
                        std::span<const TRow<T>> rows, Workspace<T>& ws,
                        std::vector<TVec3<T>>* row_grads,
                        ModelGrads<T>* pgrads) {
  const int n = ws.n;
  const int M = m.n_feat;
  const int mr = m.n_reduced;
  const int da = m.attn_dim;
  const int dz = m.type_dim;
  const double inv_sqrt_da = 1.0 / std::sqrt(static_cast<double>(da));
  // one factor of 1/sqrt(n_max) per contraction side keeps the
  // descriptor O(1) at realistic neighbor counts
  const double inv_nmax = 1.0 / std::sqrt(static_cast<double>(m.n_max));

  ws.mlp_delta.assign(1, T{1.0});
  mlp_backward(m.fit, ws.fit_act, 0, /*last_linear=*/true, ws.mlp_delta,
               ws.mlp_delta_prev, pgrads ? &pgrads->fit : nullptr);
  ws.d_d = ws.mlp_delta;

  ws.d_a.assign(static_cast<std::size_t>(M) * 4, T{});
  ws.d_b.assign(static_cast<std::size_t>(4) * mr, T{});
  for (int mm = 0; mm < M; ++mm)
    for (int q = 0; q < mr; ++q) {
      const T dd = ws.d_d[static_cast<std::size_t>(mm) * mr + q];
      for (int c = 0; c < 4; ++c) {
        ws.d_a[static_cast<std::size_t>(mm) * 4 + c] +=
            dd * ws.b_mat[static_cast<std::size_t>(c) * mr + q];
        ws.d_b[static_cast<std::size_t>(c) * mr + q] +=
            dd * ws.a_mat[static_cast<std::size_t>(mm) * 4 + c];
      }
    }

  ws.d_gfin.assign(static_cast<std::size_t>(std::max(n, 1)) * M, T{});
  ws.d_env.assign(static_cast<std::size_t>(n), std::array<T, 4>{});
  ws.ds_extra.assign(static_cast<std::size_t>(n), T{});
  for (int k = 0; k < n; ++k) {
    const T* g = ws.g_fin.data() + static_cast<std::size_t>(k) * M;
    const auto& rrow = ws.env[static_cast<std::size_t>(k)];
    T* dg = ws.d_gfin.data() + static_cast<std::size_t>(k) * M;
    auto& drow = ws.d_env[static_cast<std::size_t>(k)];
    for (int mm = 0; mm < M; ++mm)
      for (int c = 0; c < 4; ++c) {
        const T da_mc = ws.d_a[static_cast<std::size_t>(mm) * 4 + c];
        dg[mm] += da_mc * rrow[static_cast<std::size_t>(c)] * inv_nmax;
        drow[static_cast<std::size_t>(c)] += da_mc * g[mm] * inv_nmax;
      }
    for (int c = 0; c < 4; ++c)
      for (int q = 0; q < mr; ++q) {
        const T db_cq = ws.d_b[static_cast<std::size_t>(c) * mr + q];
        dg[q] += db_cq * rrow[static_cast<std::size_t>(c)] * inv_nmax;
        drow[static_cast<std::size_t>(c)] += db_cq * g[q] * inv_nmax;
      }
  }

  for (int l = m.n_attn - 1; l >= 0 && n > 0; --l) {
    const AttnStack<T>& st = ws.attn[static_cast<std::size_t>(l)];
    const AttentionWeights& aw = m.attn[static_cast<std::size_t>(l)];
    AttnGrads<T>* ag =
        pgrads ? &pgrads->attn[static_cast<std::size_t>(l)] : nullptr;

    ws.d_h.assign(static_cast<std::size_t>(n) * da, T{});
    for (int k = 0; k < n; ++k) {
      const T* dg = ws.d_gfin.data() + static_cast<std::size_t>(k) * M;
      const T* hk = st.h.data() + static_cast<std::size_t>(k) * da;
      T* dh = ws.d_h.data() + static_cast<std::size_t>(k) * da;
      for (int a = 0; a < da; ++a) {
        const double* wo = aw.wo.data() + static_cast<std::size_t>(a) * M;
        T acc{};
        for (int mm = 0; mm < M; ++mm) acc += dg[mm] * wo[mm];
        dh[a] = acc;
        if (ag)
          for (int mm = 0; mm < M; ++mm)
            ag->wo[static_cast<std::size_t>(a) * M + mm] += hk[a] * dg[mm];
      }
    }

    ws.d_p.assign(static_cast<std::size_t>(n) * n, T{});
    ws.d_theta.assign(static_cast<std::size_t>(n) * n, T{});
    ws.d_v.assign(static_cast<std::size_t>(n) * da, T{});
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < n; ++j) {
        const T p = st.p[static_cast<std::size_t>(k) * n + j];
        const T th = st.theta[static_cast<std::size_t>(k) * n + j];
        const T* dh = ws.d_h.data() + static_cast<std::size_t>(k) * da;
        const T* vj = st.v.data() + static_cast<std::size_t>(j) * da;
        T dptil{};
        for (int a = 0; a < da; ++a) dptil += dh[a] * vj[a];
        ws.d_p[static_cast<std::size_t>(k) * n + j] = dptil * th;
        ws.d_theta[static_cast<std::size_t>(k) * n + j] = dptil * p;
        const T ptil = p * th;
        T* dv = ws.d_v.data() + static_cast<std::size_t>(j) * da;
        for (int a = 0; a < da; ++a) dv[a] += ptil * dh[a];
      }

    if (primal(st.sigma_s) > 0.0) {
      ws.d_c.assign(static_cast<std::size_t>(n) * n, T{});
      T dsigma{};
      const T inv_sigma = 1.0 / st.sigma_s;
      for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j) {
          const T dth = ws.d_theta[static_cast<std::size_t>(k) * n + j];
          ws.d_c[static_cast<std::size_t>(k) * n + j] = dth * inv_sigma;
          dsigma -= dth * st.c[static_cast<std::size_t>(k) * n + j] *
                    inv_sigma * inv_sigma;
        }
      for (int k = 0; k < n; ++k) {
        auto& drow = ws.d_env[static_cast<std::size_t>(k)];
        for (int j = 0; j < n; ++j) {
          const T dc_sym = ws.d_c[static_cast<std::size_t>(k) * n + j] +
                           ws.d_c[static_cast<std::size_t>(j) * n + k];
          for (int c = 0; c < 4; ++c)
            drow[static_cast<std::size_t>(c)] +=
                dc_sym *
                ws.env[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
        }
        ws.ds_extra[static_cast<std::size_t>(k)] +=
            2.0 * ws.s[static_cast<std::size_t>(k)] * dsigma;
      }
    }

    ws.d_s_mat.assign(static_cast<std::size_t>(n) * n, T{});
    ws.d_w.assign(static_cast<std::size_t>(n), T{});
    for (int k = 0; k < n; ++k) {
      T t{};
      for (int j = 0; j < n; ++j)
        t += ws.d_p[static_cast<std::size_t>(k) * n + j] *
             st.p[static_cast<std::size_t>(k) * n + j];
      for (int j = 0; j < n; ++j) {
        const T diff = ws.d_p[static_cast<std::size_t>(k) * n + j] - t;
        ws.d_s_mat[static_cast<std::size_t>(k) * n + j] =
            st.p[static_cast<std::size_t>(k) * n + j] * diff;
        ws.d_w[static_cast<std::size_t>(j)] +=
            st.pu[static_cast<std::size_t>(k) * n + j] * diff;
      }
    }
    for (int j = 0; j < n; ++j)
      ws.ds_extra[static_cast<std::size_t>(j)] +=
          2.0 * ws.s[static_cast<std::size_t>(j)] *
          ws.d_w[static_cast<std::size_t>(j)];

    ws.d_q.assign(static_cast<std::size_t>(n) * da, T{});
    ws.d_k.assign(static_cast<std::size_t>(n) * da, T{});
    for (int k = 0; k < n; ++k) {
      const T* qk = st.q.data() + static_cast<std::size_t>(k) * da;
      T* dqk = ws.d_q.data() + static_cast<std::size_t>(k) * da;
      for (int j = 0; j < n; ++j) {
        const T dsv =
            ws.d_s_mat[static_cast<std::size_t>(k) * n + j] * inv_sqrt_da;
        const T* kj = st.k.data() + static_cast<std::size_t>(j) * da;
        T* dkj = ws.d_k.data() + static_cast<std::size_t>(j) * da;
        for (int a = 0; a < da; ++a) {
          dqk[a] += dsv * kj[a];
          dkj[a] += dsv * qk[a];
        }
      }
    }

    for (int k = 0; k < n; ++k) {
      const T* g = st.g_in.data() + static_cast<std::size_t>(k) * M;
      T* dg = ws.d_gfin.data() + static_cast<std::size_t>(k) * M;
      const T* dq = ws.d_q.data() + static_cast<std::size_t>(k) * da;
      const T* dk = ws.d_k.data() + static_cast<std::size_t>(k) * da;
      const T* dv = ws.d_v.data() + static_cast<std::size_t>(k) * da;
      for (int mm = 0; mm < M; ++mm) {
        const double* wq = aw.wq.data() + static_cast<std::size_t>(mm) * da;
        const double* wk = aw.wk.data() + static_cast<std::size_t>(mm) * da;
        const double* wv = aw.wv.data() + static_cast<std::size_t>(mm) * da;
        T acc{};
        for (int a = 0; a < da; ++a)
          acc += dq[a] * wq[a] + dk[a] * wk[a] + dv[a] * wv[a];
        dg[mm] += acc;
        if (ag) {
          const T gm = g[mm];
          for (int a = 0; a < da; ++a) {
            ag->wq[static_cast<std::size_t>(mm) * da + a] += gm * dq[a];
            ag->wk[static_cast<std::size_t>(mm) * da + a] += gm * dk[a];
            ag->wv[static_cast<std::size_t>(mm) * da + a] += gm * dv[a];
          }
        }
      }
    }
  }

  if (row_grads) row_grads->assign(static_cast<std::size_t>(n), TVec3<T>{});
  for (int k = 0; k < n; ++k) {
    ws.mlp_delta.assign(static_cast<std::size_t>(M), T{});
    for (int mm = 0; mm < M; ++mm)
      ws.mlp_delta[static_cast<std::size_t>(mm)] =
          ws.d_gfin[static_cast<std::size_t>(k) * M + mm];
    mlp_backward(m.embed, ws.embed_act, k, /*last_linear=*/false, ws.mlp_delta,
                 ws.mlp_delta_prev, pgrads ? &pgrads->embed : nullptr);
    ws.ds_extra[static_cast<std::size_t>(k)] += ws.mlp_delta[0];
    if (pgrads) {
      const int zj = ws.row_species[static_cast<std::size_t>(k)];
      for (int t = 0; t < dz; ++t) {
        pgrads->type_embed[static_cast<std::size_t>(zj) * dz + t] +=
            ws.mlp_delta[static_cast<std::size_t>(1 + t)];
        pgrads->type_embed[static_cast<std::size_t>(center_species) * dz + t] +=
            ws.mlp_delta[static_cast<std::size_t>(1 + dz + t)];
      }
    }

    if (row_grads) {
      const auto& d = rows[static_cast<std::size_t>(k)].d;
      const T inv_r = 1.0 / ws.r[static_cast<std::size_t>(k)];
      const T s_over_r = ws.s[static_cast<std::size_t>(k)] * inv_r;
      const T dsr = ws.ds[static_cast<std::size_t>(k)];
      const auto& drow = ws.d_env[static_cast<std::size_t>(k)];
      const TVec3<T> e{d.x * inv_r, d.y * inv_r, d.z * inv_r};
      const T ge = drow[1] * e.x + drow[2] * e.y + drow[3] * e.z;
      const T coef = (drow[0] + ws.ds_extra[static_cast<std::size_t>(k)]) * dsr +
                     (dsr - s_over_r) * ge;
      (*row_grads)[static_cast<std::size_t>(k)] = {
          coef * e.x + s_over_r * drow[1], coef * e.y + s_over_r * drow[2],
          coef * e.z + s_over_r * drow[3]};
    }
  }
}

}  // namespace nnmd::detail
