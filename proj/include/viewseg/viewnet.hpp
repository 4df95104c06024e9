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

// ViewNet: the per-view vertex classifier shared by all views.
//
// Intrinsic convolution (IC) layers use a mixture of J Gaussian weighting
// functions over grid pseudo-coordinates. For vertex v and Gaussian j,
//
//   a_j(v) = sum_y w_j(u_vy) s(y) / sum_y w_j(u_vy),
//   w_j(u) = exp(-1/2 (u - mu_j)^T D_j (u - mu_j)),  D_j = diag(softplus(raw_j)),
//   out(v) = relu(sum_j G_j a_j(v)),
//
// followed by per-vertex fully connected layers and a softmax.

#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "viewseg/common.hpp"
#include "viewseg/decompose.hpp"
#include "viewseg/optim.hpp"

namespace viewseg {

struct IcSpec {
  int in = 0;
  int out = 0;
  int gaussians = 0;  // J
  bool relu = true;
  friend bool operator==(const IcSpec&, const IcSpec&) = default;
};

struct FcSpec {
  int in = 0;
  int out = 0;
  bool relu = true;
  friend bool operator==(const FcSpec&, const FcSpec&) = default;
};

struct Architecture {
  int radius = 2;  // IC neighbourhood, grid cells (Chebyshev)
  std::vector<IcSpec> ic;
  std::vector<FcSpec> fc;

  int input_channels() const { return ic.empty() ? (fc.empty() ? 0 : fc.front().in) : ic.front().in; }
  int num_labels() const { return fc.empty() ? (ic.empty() ? 0 : ic.back().out) : fc.back().out; }

  void validate() const {
    if (ic.empty() && fc.empty()) throw ConfigError("architecture has no layers");
    if (!ic.empty() && radius < 1) throw ConfigError("IC radius must be >= 1");
    int channels = input_channels();
    if (channels != 6) throw ConfigError("architecture input must have 6 channels (position, normal)");
    auto step = [&](int in, int out, const char* what, std::size_t k) {
      if (in != channels || out < 1) {
        throw ConfigError(std::string(what) + std::to_string(k) + " expects " + std::to_string(in) +
                          " input channels, previous layer gives " + std::to_string(channels));
      }
      channels = out;
    };
    for (std::size_t k = 0; k < ic.size(); ++k) {
      if (ic[k].gaussians < 1) throw ConfigError("IC layer needs at least one Gaussian");
      step(ic[k].in, ic[k].out, "ic", k);
    }
    for (std::size_t k = 0; k < fc.size(); ++k) step(fc[k].in, fc[k].out, "fc", k);
    if (num_labels() < 2) throw ConfigError("architecture must output at least 2 classes");
  }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

// IC(6->16, J=8) -> IC(16->32, J=16) -> FC(32->128) -> FC(128->L), r = 2.
// 14 570 learnables for L = 10.
inline Architecture default_architecture(int num_labels) {
  Architecture a;
  a.radius = 2;
  a.ic = {{6, 16, 8, true}, {16, 32, 16, true}};
  a.fc = {{32, 128, true}, {128, num_labels, false}};
  return a;
}

struct IcLayer {
  IcSpec spec;
  std::vector<double> means;           // J x 2
  std::vector<double> raw_precisions;  // J x 2, D = softplus(raw)
  std::vector<double> mixing;          // J x out x in

  double& g(int j, int o, int i) { return mixing[(static_cast<std::size_t>(j) * spec.out + o) * spec.in + i]; }
  double g(int j, int o, int i) const { return mixing[(static_cast<std::size_t>(j) * spec.out + o) * spec.in + i]; }
  friend bool operator==(const IcLayer&, const IcLayer&) = default;
};

struct FcLayer {
  FcSpec spec;
  std::vector<double> weight;  // out x in
  std::vector<double> bias;    // out
  friend bool operator==(const FcLayer&, const FcLayer&) = default;
};

struct ViewNetParams {
  Architecture arch;
  std::vector<IcLayer> ic;
  std::vector<FcLayer> fc;
  friend bool operator==(const ViewNetParams&, const ViewNetParams&) = default;
};

template <class P, class F>
  requires std::same_as<std::remove_const_t<P>, ViewNetParams>
void for_each_block(P& p, F&& fn) {
  using Span = std::conditional_t<std::is_const_v<P>, std::span<const double>, std::span<double>>;
  for (std::size_t k = 0; k < p.ic.size(); ++k) {
    const std::string pre = "ic" + std::to_string(k) + ".";
    fn(pre + "means", Span(p.ic[k].means));
    fn(pre + "raw_precisions", Span(p.ic[k].raw_precisions));
    fn(pre + "mixing", Span(p.ic[k].mixing));
  }
  for (std::size_t k = 0; k < p.fc.size(); ++k) {
    const std::string pre = "fc" + std::to_string(k) + ".";
    fn(pre + "weight", Span(p.fc[k].weight));
    fn(pre + "bias", Span(p.fc[k].bias));
  }
}

inline std::size_t parameter_count(const ViewNetParams& p) { return count_scalars(p); }

inline double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }
inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
inline double inverse_softplus(double y) { return y + std::log(-std::expm1(-y)); }

inline ViewNetParams zeros_like(const Architecture& arch) {
  arch.validate();
  ViewNetParams p;
  p.arch = arch;
  for (const IcSpec& s : arch.ic) {
    const auto j = static_cast<std::size_t>(s.gaussians);
    p.ic.push_back({s, std::vector<double>(j * 2), std::vector<double>(j * 2),
                    std::vector<double>(j * s.out * s.in)});
  }
  for (const FcSpec& s : arch.fc) {
    p.fc.push_back({s, std::vector<double>(static_cast<std::size_t>(s.out) * s.in), std::vector<double>(s.out)});
  }
  return p;
}

inline ViewNetParams zeros_like(const ViewNetParams& p) { return zeros_like(p.arch); }

// Gaussian means uniform in [-1, 1]^2, precisions 4 (sigma = half the
// pseudo-coordinate range), He-uniform mixing and FC weights, zero biases.
inline ViewNetParams init_params(const Architecture& arch, std::uint64_t seed) {
  ViewNetParams p = zeros_like(arch);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double raw = inverse_softplus(4.0);
  for (IcLayer& layer : p.ic) {
    for (double& m : layer.means) m = unit(rng);
    std::fill(layer.raw_precisions.begin(), layer.raw_precisions.end(), raw);
    const double a = std::sqrt(6.0 / (layer.spec.gaussians * layer.spec.in));
    for (double& g : layer.mixing) g = a * unit(rng);
  }
  for (FcLayer& layer : p.fc) {
    const double a = std::sqrt(6.0 / layer.spec.in);
    for (double& w : layer.weight) w = a * unit(rng);
  }
  return p;
}

// Grid neighbourhoods in compressed rows: the neighbours of vertex v are
// entries [begin[v], begin[v + 1]). Offsets are (d_row, d_col) / r.
struct PseudoCoords {
  int radius = 1;
  std::vector<std::size_t> begin;
  std::vector<VertexIndex> neighbor;
  std::vector<std::array<double, 2>> offset;

  std::size_t vertex_count() const { return begin.empty() ? 0 : begin.size() - 1; }
  std::size_t degree(std::size_t v) const { return begin[v + 1] - begin[v]; }
};

inline PseudoCoords build_pseudo_coords(std::span<const GridPos> grid, int radius) {
  if (radius < 1) throw ValidationError("build_pseudo_coords: radius must be >= 1");
  PseudoCoords pc;
  pc.radius = radius;
  pc.begin.push_back(0);
  if (grid.empty()) return pc;
  int rmin = grid[0].row, rmax = grid[0].row, cmin = grid[0].col, cmax = grid[0].col;
  for (const GridPos& g : grid) {
    rmin = std::min(rmin, g.row);
    rmax = std::max(rmax, g.row);
    cmin = std::min(cmin, g.col);
    cmax = std::max(cmax, g.col);
  }
  const int w = cmax - cmin + 1;
  const int h = rmax - rmin + 1;
  std::vector<VertexIndex> lookup(static_cast<std::size_t>(w) * h, kNoVertex);
  for (std::size_t v = 0; v < grid.size(); ++v) {
    lookup[static_cast<std::size_t>(grid[v].row - rmin) * w + (grid[v].col - cmin)] = static_cast<VertexIndex>(v);
  }
  const double inv_r = 1.0 / radius;
  for (const GridPos& g : grid) {
    for (int dr = -radius; dr <= radius; ++dr) {
      const int r = g.row + dr - rmin;
      if (r < 0 || r >= h) continue;
      for (int dc = -radius; dc <= radius; ++dc) {
        const int c = g.col + dc - cmin;
        if (c < 0 || c >= w) continue;
        const VertexIndex y = lookup[static_cast<std::size_t>(r) * w + c];
        if (y == kNoVertex) continue;
        pc.neighbor.push_back(y);
        pc.offset.push_back({dr * inv_r, dc * inv_r});
      }
    }
    pc.begin.push_back(pc.neighbor.size());
  }
  return pc;
}

inline PseudoCoords build_pseudo_coords(const View& view, int radius) {
  if (view.empty()) throw ValidationError("build_pseudo_coords: empty view");
  return build_pseudo_coords(std::span<const GridPos>(view.grid_pos), radius);
}

// Network input of one view: its signal matrix and neighbourhoods.
struct ViewInput {
  Matrix signal;  // n x 6
  PseudoCoords coords;

  std::size_t vertex_count() const { return signal.rows; }
};

inline Matrix signal_matrix(const View& view) {
  Matrix m(view.vertex_count(), 6);
  for (std::size_t v = 0; v < view.vertex_count(); ++v) {
    for (std::size_t c = 0; c < 6; ++c) m(v, c) = view.signal[v][c];
  }
  return m;
}

inline ViewInput make_view_input(const View& view, int radius) {
  return {signal_matrix(view), build_pseudo_coords(view, radius)};
}

namespace detail {

struct IcCache {
  std::vector<double> weights;   // per neighbour entry x J, normalised per (v, j)
  std::vector<double> averaged;  // n x J x in
  Matrix pre;
  Matrix out;
};

struct FcCache {
  Matrix pre;
  Matrix out;
};

struct Trace {
  std::vector<Matrix> inputs;  // input of every layer, IC first then FC
  std::vector<IcCache> ic;
  std::vector<FcCache> fc;
  ProbabilityField probs;
};

inline void ic_layer_forward(const Matrix& in, const PseudoCoords& pc, const IcLayer& layer, IcCache& cache) {
  const int J = layer.spec.gaussians;
  const int cin = layer.spec.in;
  const int cout = layer.spec.out;
  const std::size_t n = in.rows;
  if (static_cast<int>(in.cols) != cin) throw ConfigError("IC layer: input has wrong channel count");
  if (pc.vertex_count() != n) throw ConfigError("IC layer: pseudo-coordinates do not match the signal");
  std::vector<double> prec(static_cast<std::size_t>(J) * 2);
  for (std::size_t k = 0; k < prec.size(); ++k) prec[k] = softplus(layer.raw_precisions[k]);

  cache.weights.assign(pc.neighbor.size() * J, 0.0);
  cache.averaged.assign(n * J * cin, 0.0);
  cache.pre = Matrix(n, cout);
  for (std::size_t v = 0; v < n; ++v) {
    const std::size_t b = pc.begin[v], e = pc.begin[v + 1];
    for (int j = 0; j < J; ++j) {
      // Normalised weights are invariant to a common factor; shift log-weights by their max.
      double lmax = -kInf;
      for (std::size_t k = b; k < e; ++k) {
        const double d0 = pc.offset[k][0] - layer.means[2 * j];
        const double d1 = pc.offset[k][1] - layer.means[2 * j + 1];
        const double lw = -0.5 * (prec[2 * j] * d0 * d0 + prec[2 * j + 1] * d1 * d1);
        cache.weights[k * J + j] = lw;
        lmax = std::max(lmax, lw);
      }
      double sum = 0.0;
      for (std::size_t k = b; k < e; ++k) {
        double& w = cache.weights[k * J + j];
        w = std::exp(w - lmax);
        sum += w;
      }
      double* avg = &cache.averaged[(v * J + j) * cin];
      for (std::size_t k = b; k < e; ++k) {
        double& w = cache.weights[k * J + j];
        w /= sum;
        const auto src = in.row(pc.neighbor[k]);
        for (int i = 0; i < cin; ++i) avg[i] += w * src[i];
      }
      auto pre = cache.pre.row(v);
      for (int o = 0; o < cout; ++o) {
        double acc = 0.0;
        for (int i = 0; i < cin; ++i) acc += layer.g(j, o, i) * avg[i];
        pre[o] += acc;
      }
    }
  }
  cache.out = cache.pre;
  if (layer.spec.relu) {
    for (double& x : cache.out.data) x = std::max(x, 0.0);
  }
}

inline void fc_layer_forward(const Matrix& in, const FcLayer& layer, FcCache& cache) {
  const int cin = layer.spec.in;
  const int cout = layer.spec.out;
  if (static_cast<int>(in.cols) != cin) throw ConfigError("FC layer: input has wrong channel count");
  cache.pre = Matrix(in.rows, cout);
  for (std::size_t v = 0; v < in.rows; ++v) {
    const auto x = in.row(v);
    auto y = cache.pre.row(v);
    for (int o = 0; o < cout; ++o) {
      double acc = layer.bias[o];
      const double* w = &layer.weight[static_cast<std::size_t>(o) * cin];
      for (int i = 0; i < cin; ++i) acc += w[i] * x[i];
      y[o] = acc;
    }
  }
  cache.out = cache.pre;
  if (layer.spec.relu) {
    for (double& x : cache.out.data) x = std::max(x, 0.0);
  }
}

inline Trace forward_trace(const ViewInput& input, const ViewNetParams& params) {
  if (input.signal.cols != 6) throw ConfigError("ViewNet input must have 6 channels");
  if (params.ic.size() != params.arch.ic.size() || params.fc.size() != params.arch.fc.size()) {
    throw ConfigError("ViewNet parameters do not match their architecture");
  }
  if (!params.ic.empty() && input.coords.radius != params.arch.radius) {
    throw ConfigError("pseudo-coordinates built with radius " + std::to_string(input.coords.radius) +
                      ", architecture expects " + std::to_string(params.arch.radius));
  }
  Trace t;
  const Matrix* x = &input.signal;
  t.ic.resize(params.ic.size());
  t.fc.resize(params.fc.size());
  for (std::size_t k = 0; k < params.ic.size(); ++k) {
    t.inputs.push_back(*x);
    ic_layer_forward(*x, input.coords, params.ic[k], t.ic[k]);
    x = &t.ic[k].out;
  }
  for (std::size_t k = 0; k < params.fc.size(); ++k) {
    t.inputs.push_back(*x);
    fc_layer_forward(*x, params.fc[k], t.fc[k]);
    x = &t.fc[k].out;
  }
  t.probs = ProbabilityField(*x);
  for (std::size_t v = 0; v < t.probs.vertex_count(); ++v) softmax_inplace(t.probs.row(v));
  return t;
}

inline Matrix relu_backward(Matrix grad, const Matrix& pre, bool relu) {
  if (relu) {
    for (std::size_t i = 0; i < grad.data.size(); ++i) {
      if (!(pre.data[i] > 0.0)) grad.data[i] = 0.0;
    }
  }
  return grad;
}

inline Matrix fc_layer_backward(const Matrix& in, const FcLayer& layer, const FcCache& cache, const Matrix& dout,
                                FcLayer& grad) {
  const int cin = layer.spec.in;
  const int cout = layer.spec.out;
  const Matrix dpre = relu_backward(dout, cache.pre, layer.spec.relu);
  Matrix din(in.rows, cin);
  for (std::size_t v = 0; v < in.rows; ++v) {
    const auto x = in.row(v);
    const auto d = dpre.row(v);
    auto dx = din.row(v);
    for (int o = 0; o < cout; ++o) {
      if (d[o] == 0.0) continue;
      grad.bias[o] += d[o];
      double* gw = &grad.weight[static_cast<std::size_t>(o) * cin];
      const double* w = &layer.weight[static_cast<std::size_t>(o) * cin];
      for (int i = 0; i < cin; ++i) {
        gw[i] += d[o] * x[i];
        dx[i] += d[o] * w[i];
      }
    }
  }
  return din;
}

inline Matrix ic_layer_backward(const Matrix& in, const PseudoCoords& pc, const IcLayer& layer,
                                const IcCache& cache, const Matrix& dout, IcLayer& grad) {
  const int J = layer.spec.gaussians;
  const int cin = layer.spec.in;
  const int cout = layer.spec.out;
  const Matrix dpre = relu_backward(dout, cache.pre, layer.spec.relu);
  std::vector<double> prec(static_cast<std::size_t>(J) * 2);
  for (std::size_t k = 0; k < prec.size(); ++k) prec[k] = softplus(layer.raw_precisions[k]);
  std::vector<double> dprec(prec.size(), 0.0);
  Matrix din(in.rows, cin);
  std::vector<double> b(cin);
  for (std::size_t v = 0; v < in.rows; ++v) {
    const auto d = dpre.row(v);
    bool any = false;
    for (int o = 0; o < cout; ++o) any = any || d[o] != 0.0;
    if (!any) continue;
    for (int j = 0; j < J; ++j) {
      const double* avg = &cache.averaged[(v * J + j) * cin];
      // dG_j += d a_j^T and b = G_j^T d.
      std::fill(b.begin(), b.end(), 0.0);
      for (int o = 0; o < cout; ++o) {
        if (d[o] == 0.0) continue;
        for (int i = 0; i < cin; ++i) {
          grad.g(j, o, i) += d[o] * avg[i];
          b[i] += layer.g(j, o, i) * d[o];
        }
      }
      double b_dot_avg = 0.0;
      for (int i = 0; i < cin; ++i) b_dot_avg += b[i] * avg[i];
      for (std::size_t k = pc.begin[v]; k < pc.begin[v + 1]; ++k) {
        const double w = cache.weights[k * J + j];
        const auto src = in.row(pc.neighbor[k]);
        auto dsrc = din.row(pc.neighbor[k]);
        double b_dot_src = 0.0;
        for (int i = 0; i < cin; ++i) {
          dsrc[i] += w * b[i];
          b_dot_src += b[i] * src[i];
        }
        // Gradient with respect to the log-weight of this neighbour.
        const double glog = w * (b_dot_src - b_dot_avg);
        const double d0 = pc.offset[k][0] - layer.means[2 * j];
        const double d1 = pc.offset[k][1] - layer.means[2 * j + 1];
        grad.means[2 * j] += glog * prec[2 * j] * d0;
        grad.means[2 * j + 1] += glog * prec[2 * j + 1] * d1;
        dprec[2 * j] += glog * (-0.5 * d0 * d0);
        dprec[2 * j + 1] += glog * (-0.5 * d1 * d1);
      }
    }
  }
  for (std::size_t k = 0; k < prec.size(); ++k) grad.raw_precisions[k] += dprec[k] * sigmoid(layer.raw_precisions[k]);
  return din;
}

inline ViewNetParams backprop_logits(const Trace& t, const ViewInput& input, const ViewNetParams& params, Matrix dz) {
  ViewNetParams grad = zeros_like(params);
  Matrix d = std::move(dz);
  const std::size_t nic = params.ic.size();
  for (std::size_t k = params.fc.size(); k-- > 0;) {
    d = fc_layer_backward(t.inputs[nic + k], params.fc[k], t.fc[k], d, grad.fc[k]);
  }
  for (std::size_t k = nic; k-- > 0;) {
    d = ic_layer_backward(t.inputs[k], input.coords, params.ic[k], t.ic[k], d, grad.ic[k]);
  }
  return grad;
}

}  // namespace detail

// One IC layer (including its optional ReLU) on an arbitrary signal.
inline Matrix ic_forward(const Matrix& signal, const PseudoCoords& pc, const IcLayer& layer) {
  detail::IcCache cache;
  detail::ic_layer_forward(signal, pc, layer, cache);
  return std::move(cache.out);
}

inline ProbabilityField forward(const ViewInput& input, const ViewNetParams& params) {
  return detail::forward_trace(input, params).probs;
}

inline ProbabilityField forward(const View& view, const ViewNetParams& params) {
  if (view.empty()) throw ValidationError("forward: empty view");
  return forward(make_view_input(view, params.arch.radius), params);
}

// Mean over the masked vertices of -log(max(p[v, gt(v)], 1e-12)). Mask
// entries may repeat; each occurrence counts.
inline double cross_entropy_loss(const ProbabilityField& pred, std::span<const Label> labels,
                                 std::optional<std::span<const VertexIndex>> mask = std::nullopt) {
  if (labels.size() != pred.vertex_count()) throw ValidationError("cross_entropy_loss: label count mismatch");
  check_labels(labels, static_cast<int>(pred.num_labels()), "cross_entropy_loss");
  auto term = [&](std::size_t v) { return -std::log(std::max(pred(v, labels[v] - 1), kProbFloor)); };
  double sum = 0.0;
  std::size_t count = 0;
  if (mask) {
    for (VertexIndex v : *mask) {
      if (v >= pred.vertex_count()) throw ValidationError("cross_entropy_loss: mask index out of range");
      sum += term(v);
      ++count;
    }
  } else {
    for (std::size_t v = 0; v < pred.vertex_count(); ++v) sum += term(v);
    count = pred.vertex_count();
  }
  if (count == 0) throw ValidationError("cross_entropy_loss: empty vertex set");
  return sum / static_cast<double>(count);
}

enum class Reduction { kMean, kSum };

struct ViewNetGradient {
  double loss = 0.0;  // reduced the same way as the gradient
  ViewNetParams grad;
};

// Gradients of all parameters given dL/dprobs (n x L).
inline ViewNetParams backward_from_probs(const ViewInput& input, const ViewNetParams& params,
                                         const Matrix& dprobs) {
  const detail::Trace t = detail::forward_trace(input, params);
  if (dprobs.rows != t.probs.vertex_count() || dprobs.cols != t.probs.num_labels()) {
    throw ValidationError("backward_from_probs: gradient shape mismatch");
  }
  Matrix dz(dprobs.rows, dprobs.cols);
  for (std::size_t v = 0; v < dz.rows; ++v) {
    const auto p = t.probs.row(v);
    const auto dp = dprobs.row(v);
    double s = 0.0;
    for (std::size_t l = 0; l < p.size(); ++l) s += dp[l] * p[l];
    for (std::size_t l = 0; l < p.size(); ++l) dz(v, l) = p[l] * (dp[l] - s);
  }
  return detail::backprop_logits(t, input, params, std::move(dz));
}

// Analytic gradient of the cross-entropy loss. With Reduction::kSum the
// per-vertex terms are added instead of averaged.
inline ViewNetGradient backward(const ViewInput& input, const ViewNetParams& params, std::span<const Label> labels,
                                std::optional<std::span<const VertexIndex>> mask = std::nullopt,
                                Reduction reduction = Reduction::kMean) {
  const detail::Trace t = detail::forward_trace(input, params);
  const std::size_t n = t.probs.vertex_count();
  const std::size_t L = t.probs.num_labels();
  if (labels.size() != n) throw ValidationError("backward: label count mismatch");
  check_labels(labels, static_cast<int>(L), "backward");
  std::vector<double> weight(n, 0.0);
  std::size_t count = 0;
  if (mask) {
    for (VertexIndex v : *mask) {
      if (v >= n) throw ValidationError("backward: mask index out of range");
      weight[v] += 1.0;
      ++count;
    }
  } else {
    std::fill(weight.begin(), weight.end(), 1.0);
    count = n;
  }
  if (count == 0) throw ValidationError("backward: empty vertex set");
  const double scale = reduction == Reduction::kMean ? 1.0 / static_cast<double>(count) : 1.0;

  ViewNetGradient out;
  Matrix dz(n, L);
  for (std::size_t v = 0; v < n; ++v) {
    if (weight[v] == 0.0) continue;
    const std::size_t gt = static_cast<std::size_t>(labels[v] - 1);
    const double p = t.probs(v, gt);
    out.loss += weight[v] * -std::log(std::max(p, kProbFloor));
    if (p < kProbFloor) continue;  // clamped term is constant
    for (std::size_t l = 0; l < L; ++l) dz(v, l) = weight[v] * scale * (t.probs(v, l) - (l == gt ? 1.0 : 0.0));
  }
  out.loss *= scale;

  out.grad = detail::backprop_logits(t, input, params, std::move(dz));
  return out;
}

inline ViewNetGradient backward(const View& view, const ViewNetParams& params, std::span<const Label> labels,
                                std::optional<std::span<const VertexIndex>> mask = std::nullopt,
                                Reduction reduction = Reduction::kMean) {
  return backward(make_view_input(view, params.arch.radius), params, labels, mask, reduction);
}

// Ground-truth label of every view vertex, read through the correspondence.
inline std::vector<Label> view_labels(const View& view, std::span<const Label> source_labels) {
  std::vector<Label> out(view.vertex_count());
  for (std::size_t v = 0; v < out.size(); ++v) out[v] = source_labels[view.correspondence[v]];
  return out;
}

}  // namespace viewseg
