// Copyright 2026 The viewseg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense mesh CRF over the source vertices.
//
//   E(y) = sum_n psi_u(y_n) + sum_{n < m} psi_p(y_n, y_m)
//   psi_u(l)     = -log(max(g_l, 1e-12))
//   psi_p(l, l') = mu(l, l') (w_near k_near + far_sign w_far k_far + w_feat k_feat)
//   k_near = exp(-d / s_near), k_far = 1 - exp(-d / s_far),
//   k_feat = exp(-|f_n - f_m| / s_feat),  f = (position, normal), d geodesic.
//
// Mean-field inference is unrolled for T iterations, which makes the loss
// differentiable with respect to mu and the three kernel weights.

#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "viewseg/aggregate.hpp"
#include "viewseg/common.hpp"
#include "viewseg/decompose.hpp"
#include "viewseg/mesh.hpp"
#include "viewseg/optim.hpp"

namespace viewseg {

struct CrfParams {
  int num_labels = 0;
  Matrix mu;  // L x L label compatibility, row = label at the vertex being updated
  double w_near = 1.0;
  double w_far = 1.0;
  double w_feat = 1.0;
  double sigma_near = 1.0;
  double sigma_far = 1.0;
  double sigma_feat = 1.0;
  int iterations = 5;  // T
  int far_sign = -1;
  // When set, kernels are truncated to pairs within this geodesic radius.
  std::optional<double> cutoff;
  // Scale each kernel by the reciprocal of its mean off-diagonal row sum
  // inside the pairwise term, so weights keep the same scale across meshes
  // of different size.
  bool normalize_kernels = true;

  void validate() const {
    if (num_labels < 1) throw ConfigError("CRF: L must be >= 1");
    if (mu.rows != static_cast<std::size_t>(num_labels) || mu.cols != mu.rows) throw ConfigError("CRF: mu must be L x L");
    if (!(sigma_near > 0.0 && sigma_far > 0.0 && sigma_feat > 0.0)) throw ConfigError("CRF: bandwidths must be positive");
    if (iterations < 1) throw ConfigError("CRF: T must be >= 1");
    if (far_sign != -1 && far_sign != 1) throw ConfigError("CRF: far_sign must be -1 or +1");
    if (cutoff && !(*cutoff > 0.0)) throw ConfigError("CRF: cutoff must be positive");
  }

  friend bool operator==(const CrfParams&, const CrfParams&) = default;
};

// Learnables: mu, w_near, w_far, w_feat. Bandwidths stay fixed.
template <class P, class F>
  requires std::same_as<std::remove_const_t<P>, CrfParams>
void for_each_block(P& p, F&& fn) {
  using Span = std::conditional_t<std::is_const_v<P>, std::span<const double>, std::span<double>>;
  fn("mu", Span(p.mu.data));
  fn("w_near", Span(&p.w_near, 1));
  fn("w_far", Span(&p.w_far, 1));
  fn("w_feat", Span(&p.w_feat, 1));
}

struct Bandwidths {
  double near = 1.0;
  double far = 1.0;
  double feat = 1.0;
};

inline std::vector<Signal> vertex_features(const Mesh& mesh) {
  const auto normals = mesh.has_normals() ? mesh.normals : vertex_normals(mesh);
  std::vector<Signal> f(mesh.vertex_count());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const Vec3 p = mesh.vertices[i], n = normals[i];
    f[i] = {p.x, p.y, p.z, n.x, n.y, n.z};
  }
  return f;
}

inline double feature_distance(const Signal& a, const Signal& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < 6; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

// s_near = 0.05 D, s_far = 0.5 D with D the largest finite geodesic, and
// s_feat = 0.5 x RMS distance of the features to their mean.
inline Bandwidths default_bandwidths(const Matrix& geodesics, std::span<const Signal> features) {
  double diameter = 0.0;
  for (double d : geodesics.data) {
    if (std::isfinite(d)) diameter = std::max(diameter, d);
  }
  if (!(diameter > 0.0)) diameter = 1.0;
  Signal mean{};
  for (const Signal& f : features) {
    for (std::size_t k = 0; k < 6; ++k) mean[k] += f[k];
  }
  for (double& m : mean) m /= std::max<std::size_t>(features.size(), 1);
  double var = 0.0;
  for (const Signal& f : features) var += feature_distance(f, mean) * feature_distance(f, mean);
  double spread = features.empty() ? 0.0 : std::sqrt(var / static_cast<double>(features.size()));
  if (!(spread > 0.0)) spread = 1.0;
  return {0.05 * diameter, 0.5 * diameter, 0.5 * spread};
}

inline CrfParams make_crf_params(int num_labels, const Bandwidths& bw) {
  CrfParams p;
  p.num_labels = num_labels;
  p.mu = Matrix(num_labels, num_labels);
  for (int l = 0; l < num_labels; ++l) p.mu(l, l) = 1.0;
  p.sigma_near = bw.near;
  p.sigma_far = bw.far;
  p.sigma_feat = bw.feat;
  return p;
}

// Identity mu, unit weights, bandwidths derived from the mesh.
inline CrfParams default_crf_params(const Mesh& mesh, int num_labels) {
  const auto feats = vertex_features(mesh);
  return make_crf_params(num_labels, default_bandwidths(all_pairs_geodesics(mesh), feats));
}

struct KernelMatrices {
  Matrix near;
  Matrix far;
  Matrix feat;
  std::vector<Signal> features;
  // Multipliers applied to each kernel in the pairwise term (1 unless normalized).
  double near_scale = 1.0;
  double far_scale = 1.0;
  double feat_scale = 1.0;

  std::size_t vertex_count() const { return near.rows; }
};

inline KernelMatrices build_kernels(const Matrix& geodesics, std::span<const Signal> features, const CrfParams& params) {
  params.validate();
  const std::size_t n = features.size();
  if (geodesics.rows != n || geodesics.cols != n) throw ValidationError("build_kernels: distance matrix shape mismatch");
  KernelMatrices k{Matrix(n, n), Matrix(n, n), Matrix(n, n), std::vector<Signal>(features.begin(), features.end())};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double d = geodesics(i, j);
      double kn = 0.0, kf = 1.0, ke = 0.0;
      const double fd = feature_distance(features[i], features[j]);
      if (params.cutoff && !(d <= *params.cutoff)) {
        kf = 0.0;
      } else {
        kn = std::isfinite(d) ? std::exp(-d / params.sigma_near) : 0.0;
        kf = std::isfinite(d) ? -std::expm1(-d / params.sigma_far) : 1.0;
        ke = std::exp(-fd / params.sigma_feat);
      }
      k.near(i, j) = k.near(j, i) = kn;
      k.far(i, j) = k.far(j, i) = kf;
      k.feat(i, j) = k.feat(j, i) = ke;
    }
  }
  if (params.normalize_kernels && n > 1) {
    auto scale_of = [n](const Matrix& m) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (i != j) total += m(i, j);
        }
      }
      return total > 0.0 ? static_cast<double>(n) / total : 1.0;
    };
    k.near_scale = scale_of(k.near);
    k.far_scale = scale_of(k.far);
    k.feat_scale = scale_of(k.feat);
  }
  return k;
}

inline KernelMatrices build_kernels(const Mesh& mesh, const CrfParams& params) {
  params.validate();
  const auto feats = vertex_features(mesh);
  return build_kernels(all_pairs_geodesics(mesh, params.cutoff), feats, params);
}

inline Matrix unary_from_probabilities(const ProbabilityField& g) {
  Matrix u(g.vertex_count(), g.num_labels());
  for (std::size_t i = 0; i < u.data.size(); ++i) u.data[i] = -std::log(std::max(g.values.data[i], kProbFloor));
  return u;
}

inline Matrix unary_from_aggregate(const AggregateResult& agg) { return unary_from_probabilities(agg.pdf); }

// w_near K_near + far_sign w_far K_far + w_feat K_feat with a zero diagonal,
// kernel scales included.
inline Matrix combined_kernel(const CrfParams& p, const KernelMatrices& k) {
  const std::size_t n = k.vertex_count();
  const double a = p.w_near * k.near_scale, b = p.far_sign * p.w_far * k.far_scale, c0 = p.w_feat * k.feat_scale;
  Matrix c(n, n);
  for (std::size_t i = 0; i < n * n; ++i) c.data[i] = a * k.near.data[i] + b * k.far.data[i] + c0 * k.feat.data[i];
  for (std::size_t i = 0; i < n; ++i) c(i, i) = 0.0;
  return c;
}

// Labels are 1-based; i and j must differ.
inline double pairwise_potential(Label l, Label lp, std::size_t i, std::size_t j, const CrfParams& p,
                                 const KernelMatrices& k) {
  if (i == j) throw ValidationError("pairwise_potential: i and j must differ");
  if (l < 1 || lp < 1 || l > p.num_labels || lp > p.num_labels) throw ValidationError("pairwise_potential: label out of range");
  return p.mu(l - 1, lp - 1) * (p.w_near * k.near_scale * k.near(i, j) +
                                p.far_sign * p.w_far * k.far_scale * k.far(i, j) +
                                p.w_feat * k.feat_scale * k.feat(i, j));
}

inline double crf_energy(std::span<const Label> labeling, const Matrix& unary, const CrfParams& p,
                         const KernelMatrices& k) {
  const std::size_t n = labeling.size();
  if (unary.rows != n || k.vertex_count() != n) throw ValidationError("crf_energy: size mismatch");
  check_labels(labeling, p.num_labels, "crf_energy");
  double e = 0.0;
  for (std::size_t i = 0; i < n; ++i) e += unary(i, labeling[i] - 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) e += pairwise_potential(labeling[i], labeling[j], i, j, p, k);
  }
  return e;
}

namespace detail {

// out = K Q (K is n x n, Q is n x L).
inline Matrix matmul(const Matrix& k, const Matrix& q) {
  Matrix out(k.rows, q.cols);
  for (std::size_t i = 0; i < k.rows; ++i) {
    auto o = out.row(i);
    const double* krow = &k.data[i * k.cols];
    for (std::size_t j = 0; j < k.cols; ++j) {
      const double kij = krow[j];
      if (kij == 0.0) continue;
      const auto qj = q.row(j);
      for (std::size_t l = 0; l < q.cols; ++l) o[l] += kij * qj[l];
    }
  }
  return out;
}

// scale * K Q with the diagonal of K skipped.
inline Matrix matmul_offdiag(const Matrix& k, const Matrix& q, double scale = 1.0) {
  Matrix out = matmul(k, q);
  for (std::size_t i = 0; i < k.rows; ++i) {
    const double kii = k(i, i);
    auto o = out.row(i);
    const auto qi = q.row(i);
    for (std::size_t l = 0; l < q.cols; ++l) o[l] = scale * (o[l] - kii * qi[l]);
  }
  return out;
}

// C(n, l) = sum_l' mu(l, l') M(n, l'), i.e. C = M mu^T.
inline Matrix apply_compatibility(const Matrix& m, const Matrix& mu) {
  Matrix c(m.rows, mu.rows);
  for (std::size_t n = 0; n < m.rows; ++n) {
    for (std::size_t l = 0; l < mu.rows; ++l) {
      double acc = 0.0;
      for (std::size_t lp = 0; lp < mu.cols; ++lp) acc += mu(l, lp) * m(n, lp);
      c(n, l) = acc;
    }
  }
  return c;
}

inline void softmax_rows(Matrix& z) {
  for (std::size_t n = 0; n < z.rows; ++n) softmax_inplace(z.row(n));
}

inline void check_finite(const Matrix& m, int iteration) {
  for (double x : m.data) {
    if (!std::isfinite(x)) throw NumericError("mean_field_infer: non-finite value at iteration " + std::to_string(iteration));
  }
}

inline void check_inputs(const Matrix& unary, const CrfParams& p, const KernelMatrices& k) {
  p.validate();
  if (unary.cols != static_cast<std::size_t>(p.num_labels)) throw ValidationError("CRF: unary has wrong label count");
  if (unary.rows != k.vertex_count()) throw ValidationError("CRF: unary and kernels disagree on vertex count");
}

}  // namespace detail

// Q^0 = softmax(-psi_u); Q^t = softmax(-psi_u - C^t), C^t = (Kc Q^{t-1}) mu^T.
inline ProbabilityField mean_field_infer(const Matrix& unary, const CrfParams& p, const KernelMatrices& k) {
  detail::check_inputs(unary, p, k);
  Matrix z(unary.rows, unary.cols);
  for (std::size_t i = 0; i < z.data.size(); ++i) z.data[i] = -unary.data[i];
  Matrix q = z;
  detail::softmax_rows(q);
  detail::check_finite(q, 0);
  const bool pairwise = p.w_near != 0.0 || p.w_far != 0.0 || p.w_feat != 0.0;
  if (!pairwise) return ProbabilityField(std::move(q));
  const Matrix kc = combined_kernel(p, k);
  for (int t = 1; t <= p.iterations; ++t) {
    const Matrix c = detail::apply_compatibility(detail::matmul(kc, q), p.mu);
    for (std::size_t i = 0; i < z.data.size(); ++i) q.data[i] = -unary.data[i] - c.data[i];
    detail::softmax_rows(q);
    detail::check_finite(q, t);
  }
  return ProbabilityField(std::move(q));
}

struct CrfGradient {
  double loss = 0.0;
  CrfParams grad;  // mu, w_near, w_far, w_feat hold gradients; other fields copied
  Matrix unary;    // dL / d psi_u
};

// Mean cross-entropy of Q^T against the labels, and its gradient by
// backpropagation through the T unrolled updates.
inline CrfGradient crf_backward(const Matrix& unary, const CrfParams& p, const KernelMatrices& k,
                                std::span<const Label> labels) {
  detail::check_inputs(unary, p, k);
  const std::size_t n = unary.rows;
  const std::size_t L = unary.cols;
  if (labels.size() != n) throw ValidationError("crf_backward: label count mismatch");
  if (n == 0) throw ValidationError("crf_backward: empty vertex set");
  check_labels(labels, p.num_labels, "crf_backward");
  const int T = p.iterations;

  // Forward with everything the backward pass needs.
  std::vector<Matrix> q(T + 1), near_q(T + 1), far_q(T + 1), feat_q(T + 1), msg(T + 1);
  q[0] = Matrix(n, L);
  for (std::size_t i = 0; i < q[0].data.size(); ++i) q[0].data[i] = -unary.data[i];
  detail::softmax_rows(q[0]);
  for (int t = 1; t <= T; ++t) {
    near_q[t] = detail::matmul_offdiag(k.near, q[t - 1], k.near_scale);
    far_q[t] = detail::matmul_offdiag(k.far, q[t - 1], k.far_scale);
    feat_q[t] = detail::matmul_offdiag(k.feat, q[t - 1], k.feat_scale);
    msg[t] = Matrix(n, L);
    for (std::size_t i = 0; i < msg[t].data.size(); ++i) {
      msg[t].data[i] = p.w_near * near_q[t].data[i] + p.far_sign * p.w_far * far_q[t].data[i] +
                       p.w_feat * feat_q[t].data[i];
    }
    const Matrix c = detail::apply_compatibility(msg[t], p.mu);
    q[t] = Matrix(n, L);
    for (std::size_t i = 0; i < c.data.size(); ++i) q[t].data[i] = -unary.data[i] - c.data[i];
    detail::softmax_rows(q[t]);
    detail::check_finite(q[t], t);
  }

  CrfGradient out;
  out.grad = p;
  std::fill(out.grad.mu.data.begin(), out.grad.mu.data.end(), 0.0);
  out.grad.w_near = out.grad.w_far = out.grad.w_feat = 0.0;
  out.unary = Matrix(n, L);

  const double scale = 1.0 / static_cast<double>(n);
  Matrix dz(n, L);
  for (std::size_t v = 0; v < n; ++v) {
    const std::size_t gt = static_cast<std::size_t>(labels[v] - 1);
    const double pv = q[T](v, gt);
    out.loss += -std::log(std::max(pv, kProbFloor));
    if (pv < kProbFloor) continue;
    for (std::size_t l = 0; l < L; ++l) dz(v, l) = scale * (q[T](v, l) - (l == gt ? 1.0 : 0.0));
  }
  out.loss *= scale;

  const Matrix kc = combined_kernel(p, k);
  for (int t = T; t >= 1; --t) {
    // Z^t = -psi - M^t mu^T.
    Matrix dm(n, L);
    for (std::size_t v = 0; v < n; ++v) {
      for (std::size_t l = 0; l < L; ++l) {
        const double dc = -dz(v, l);
        out.unary(v, l) -= dz(v, l);
        if (dc == 0.0) continue;
        for (std::size_t lp = 0; lp < L; ++lp) {
          out.grad.mu(l, lp) += dc * msg[t](v, lp);
          dm(v, lp) += dc * p.mu(l, lp);
        }
      }
    }
    for (std::size_t i = 0; i < dm.data.size(); ++i) {
      out.grad.w_near += dm.data[i] * near_q[t].data[i];
      out.grad.w_far += p.far_sign * dm.data[i] * far_q[t].data[i];
      out.grad.w_feat += dm.data[i] * feat_q[t].data[i];
    }
    const Matrix dq = detail::matmul(kc, dm);  // Kc is symmetric
    for (std::size_t v = 0; v < n; ++v) {
      double s = 0.0;
      for (std::size_t l = 0; l < L; ++l) s += dq(v, l) * q[t - 1](v, l);
      for (std::size_t l = 0; l < L; ++l) dz(v, l) = q[t - 1](v, l) * (dq(v, l) - s);
    }
  }
  for (std::size_t i = 0; i < dz.data.size(); ++i) out.unary.data[i] -= dz.data[i];
  return out;
}

struct CrfSample {
  const KernelMatrices* kernels = nullptr;
  Matrix unary;
  std::vector<Label> labels;
};

struct CrfTrainOptions {
  int steps = 100;
  AdamConfig adam{};
  // Called after every step with (step, loss before the step).
  std::function<void(int, double)> on_step;
};

// Adam on (mu, w_near, w_far, w_feat), one sample per step in round-robin
// order. Bandwidths, T and far_sign are left as given.
inline CrfParams train_crf(std::span<const CrfSample> samples, CrfParams params, AdamState& state,
                           const CrfTrainOptions& opts = {}) {
  if (samples.empty()) throw ValidationError("train_crf: no training samples");
  for (int step = 0; step < opts.steps; ++step) {
    const CrfSample& s = samples[static_cast<std::size_t>(step) % samples.size()];
    if (s.kernels == nullptr) throw ValidationError("train_crf: sample without kernels");
    const CrfGradient g = crf_backward(s.unary, params, *s.kernels, s.labels);
    adam_step(params, g.grad, state, opts.adam);
    if (opts.on_step) opts.on_step(step, g.loss);
  }
  return params;
}

inline CrfParams train_crf(std::span<const CrfSample> samples, CrfParams params, const CrfTrainOptions& opts = {}) {
  AdamState state;
  return train_crf(samples, std::move(params), state, opts);
}

// Negated near-kernel pairwise cost between labels a and b (1-based),
// averaged over both orders: larger means the CRF rewards the pair more.
inline double near_affinity(const CrfParams& p, Label a, Label b) {
  return -p.w_near * 0.5 * (p.mu(a - 1, b - 1) + p.mu(b - 1, a - 1));
}

}  // namespace viewseg
