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

// End-to-end training and inference: decompose, per-view prediction,
// aggregation onto the source mesh, CRF refinement.

#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <thread>
#include <utility>
#include <vector>

#include "viewseg/aggregate.hpp"
#include "viewseg/common.hpp"
#include "viewseg/config.hpp"
#include "viewseg/crf.hpp"
#include "viewseg/decompose.hpp"
#include "viewseg/mesh.hpp"
#include "viewseg/mesh_io.hpp"
#include "viewseg/optim.hpp"
#include "viewseg/viewnet.hpp"

namespace viewseg {

// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception
// thrown by any task is rethrown after all threads finish.
template <class F>
void parallel_for(std::size_t n, int jobs, F&& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

struct PreparedShape {
  Mesh mesh;
  std::vector<View> views;
  std::vector<ViewInput> inputs;
  std::vector<std::vector<Label>> view_labels;  // empty when the mesh is unlabeled
};

inline PreparedShape prepare_shape(Mesh mesh, const RunConfig& cfg) {
  validate(mesh, cfg.num_labels);
  if (!mesh.has_normals()) mesh.normals = vertex_normals(mesh);
  PreparedShape s;
  s.views = decompose_shape(mesh, cfg.decompose_options());
  s.inputs.resize(s.views.size());
  const int radius = cfg.resolved_architecture().radius;
  parallel_for(s.views.size(), cfg.jobs, [&](std::size_t m) {
    if (!s.views[m].empty()) s.inputs[m] = make_view_input(s.views[m], radius);
  });
  if (mesh.has_labels()) {
    for (const View& v : s.views) s.view_labels.push_back(view_labels(v, mesh.labels));
  }
  s.mesh = std::move(mesh);
  return s;
}

struct TrainState {
  ViewNetParams params;
  AdamState adam;
  std::int64_t step = 0;
  int epoch = 0;  // completed ViewNet epochs
  // Learned CRF part (mu and weights). Bandwidths here are placeholders;
  // crf_for_mesh fills in per-mesh values.
  CrfParams crf;
  AdamState crf_adam;
  bool crf_trained = false;
  int joint_epoch = 0;

  friend bool operator==(const TrainState&, const TrainState&) = default;
};

inline TrainState init_train_state(const RunConfig& cfg) {
  cfg.validate();
  TrainState s;
  s.params = init_params(cfg.resolved_architecture(), cfg.seed);
  s.crf = make_crf_params(cfg.num_labels, Bandwidths{});
  s.crf.iterations = cfg.crf.iterations;
  s.crf.far_sign = cfg.crf.far_sign;
  s.crf.cutoff = cfg.crf.cutoff;
  s.crf.normalize_kernels = cfg.crf.normalize_kernels;
  return s;
}

struct TrainLogEntry {
  int epoch = 0;
  std::int64_t step = 0;
  double loss = 0.0;
};

using TrainLog = std::function<void(const TrainLogEntry&)>;

namespace detail {
inline std::mt19937_64 epoch_rng(std::uint64_t seed, int epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x5eedu};
  return std::mt19937_64(seq);
}
}  // namespace detail

// Per-view cross-entropy training, one (shape, view) pair per Adam step,
// in a freshly shuffled order each epoch. Continues from state.epoch up to
// cfg.epochs, so a resumed run visits the same sequence as an uninterrupted one.
inline void train_viewnet(std::span<const PreparedShape> shapes, TrainState& state, const RunConfig& cfg,
                          const TrainLog& log = {}) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t s = 0; s < shapes.size(); ++s) {
    if (shapes[s].view_labels.size() != shapes[s].views.size()) {
      throw ValidationError("train: shape " + std::to_string(s) + " has no ground-truth labels");
    }
    for (std::size_t m = 0; m < shapes[s].views.size(); ++m) {
      if (!shapes[s].views[m].empty()) pairs.emplace_back(s, m);
    }
  }
  if (pairs.empty()) throw ValidationError("train: no non-empty views");
  const AdamConfig adam{cfg.lr};
  for (; state.epoch < cfg.epochs; ++state.epoch) {
    auto order = pairs;
    auto rng = detail::epoch_rng(cfg.seed, state.epoch);
    std::shuffle(order.begin(), order.end(), rng);
    for (const auto& [s, m] : order) {
      const ViewNetGradient g = backward(shapes[s].inputs[m], state.params, shapes[s].view_labels[m]);
      adam_step(state.params, g.grad, state.adam, adam);
      ++state.step;
      if (log) log({state.epoch, state.step, g.loss});
    }
  }
}

inline std::vector<ProbabilityField> predict_views(const PreparedShape& shape, const ViewNetParams& params, int jobs) {
  std::vector<ProbabilityField> out(shape.views.size());
  parallel_for(shape.views.size(), jobs, [&](std::size_t m) {
    if (shape.views[m].empty()) {
      out[m] = ProbabilityField(0, static_cast<std::size_t>(params.arch.num_labels()));
    } else {
      out[m] = forward(shape.inputs[m], params);
    }
  });
  return out;
}

inline AggregateResult aggregate_shape(const PreparedShape& shape, const ViewNetParams& params, int jobs) {
  const auto pdfs = predict_views(shape, params, jobs);
  return project_predictions(std::span<const ProbabilityField>(pdfs), std::span<const View>(shape.views),
                             shape.mesh.vertex_count(), static_cast<std::size_t>(params.arch.num_labels()));
}

struct CrfSetup {
  CrfParams params;
  KernelMatrices kernels;
};

// Learned mu and weights from `learned`, bandwidths from the config or,
// when unset, from the mesh.
inline CrfSetup crf_for_mesh(const Mesh& mesh, const CrfParams& learned, const RunConfig& cfg) {
  const Matrix geo = all_pairs_geodesics(mesh, cfg.crf.cutoff);
  const auto feats = vertex_features(mesh);
  Bandwidths bw;
  if (!cfg.crf.sigma_near || !cfg.crf.sigma_far || !cfg.crf.sigma_feat) {
    // Defaults need the untruncated diameter.
    bw = default_bandwidths(cfg.crf.cutoff ? all_pairs_geodesics(mesh) : geo, feats);
  }
  CrfSetup s{learned, {}};
  s.params.sigma_near = cfg.crf.sigma_near.value_or(bw.near);
  s.params.sigma_far = cfg.crf.sigma_far.value_or(bw.far);
  s.params.sigma_feat = cfg.crf.sigma_feat.value_or(bw.feat);
  s.params.iterations = cfg.crf.iterations;
  s.params.far_sign = cfg.crf.far_sign;
  s.params.cutoff = cfg.crf.cutoff;
  s.params.normalize_kernels = cfg.crf.normalize_kernels;
  s.kernels = build_kernels(geo, feats, s.params);
  return s;
}

// Trains the CRF on the aggregated predictions of the current ViewNet for
// the first cfg.crf.max_train_shapes shapes, continuing from the steps
// already taken up to cfg.crf.train_steps.
inline void train_crf_stage(std::span<const PreparedShape> shapes, TrainState& state, const RunConfig& cfg,
                            const TrainLog& log = {}) {
  const std::int64_t start = state.crf_adam.step;
  if (state.joint_epoch > 0 || start >= cfg.crf.train_steps) {
    state.crf_trained = true;
    return;
  }
  const std::size_t count = std::min<std::size_t>(shapes.size(), static_cast<std::size_t>(cfg.crf.max_train_shapes));
  if (count == 0) throw ValidationError("train: no shapes for CRF training");
  std::vector<CrfSetup> setups(count);
  std::vector<CrfSample> samples(count);
  for (std::size_t s = 0; s < count; ++s) {
    if (!shapes[s].mesh.has_labels()) throw ValidationError("train: shape " + std::to_string(s) + " has no labels");
    setups[s] = crf_for_mesh(shapes[s].mesh, state.crf, cfg);
    samples[s] = {&setups[s].kernels, unary_from_aggregate(aggregate_shape(shapes[s], state.params, cfg.jobs)),
                  shapes[s].mesh.labels};
  }
  // Each step uses its own mesh's bandwidths; only mu and the weights are shared.
  const AdamConfig adam_cfg{cfg.crf.lr};
  for (std::int64_t step = start; step < cfg.crf.train_steps; ++step) {
    const std::size_t s = static_cast<std::size_t>(step) % count;
    CrfParams p = setups[s].params;
    p.mu = state.crf.mu;
    p.w_near = state.crf.w_near;
    p.w_far = state.crf.w_far;
    p.w_feat = state.crf.w_feat;
    const CrfGradient g = crf_backward(samples[s].unary, p, *samples[s].kernels, samples[s].labels);
    adam_step(state.crf, g.grad, state.crf_adam, adam_cfg);
    if (log) log({cfg.epochs, step + 1, g.loss});
  }
  state.crf_trained = true;
}

// Prepares a restored state so the remaining stages run as they would in an
// uninterrupted run. Extra ViewNet epochs invalidate a CRF fitted to the
// older network; they cannot follow joint fine-tuning.
inline void reset_stale_stages(TrainState& state, const RunConfig& cfg) {
  if (state.epoch >= cfg.epochs) return;
  if (state.joint_epoch > 0) throw ConfigError("train: cannot add ViewNet epochs after joint fine-tuning");
  if (state.crf_adam.step > 0 || state.crf_trained) {
    const TrainState fresh = init_train_state(cfg);
    state.crf = fresh.crf;
    state.crf_adam = fresh.crf_adam;
    state.crf_trained = false;
  }
}

struct JointStep {
  double loss = 0.0;
  ViewNetParams viewnet_grad;
  CrfParams crf_grad;
};

// Loss of the refined per-vertex labels on one shape and its gradient with
// respect to both the ViewNet and the CRF, through aggregation and the
// unary -log(max(g, floor)). Uncovered vertices are constant.
inline JointStep joint_gradient(const PreparedShape& shape, const CrfSetup& setup, const ViewNetParams& params, int jobs) {
  const auto pdfs = predict_views(shape, params, jobs);
  const std::size_t L = static_cast<std::size_t>(params.arch.num_labels());
  const AggregateResult agg = project_predictions(std::span<const ProbabilityField>(pdfs),
                                                  std::span<const View>(shape.views), shape.mesh.vertex_count(), L);
  const CrfGradient cg = crf_backward(unary_from_aggregate(agg), setup.params, setup.kernels, shape.mesh.labels);
  Matrix dg(agg.pdf.vertex_count(), L);
  for (std::size_t i = 0; i < dg.data.size(); ++i) {
    const double g = agg.pdf.values.data[i];
    if (g >= kProbFloor) dg.data[i] = -cg.unary.data[i] / g;
  }
  JointStep out{cg.loss, zeros_like(params), cg.grad};
  std::vector<ViewNetParams> grads(shape.views.size());
  parallel_for(shape.views.size(), jobs, [&](std::size_t m) {
    const View& view = shape.views[m];
    if (view.empty()) return;
    Matrix dp(view.vertex_count(), L);
    for (std::size_t v = 0; v < dp.rows; ++v) {
      const VertexIndex t = view.correspondence[v];
      const double c = agg.coverage[t];
      for (std::size_t l = 0; l < L; ++l) dp(v, l) = dg(t, l) / c;
    }
    grads[m] = backward_from_probs(shape.inputs[m], params, dp);
  });
  auto acc = collect_blocks(out.viewnet_grad);
  for (const ViewNetParams& g : grads) {
    if (g.ic.empty() && g.fc.empty()) continue;
    const auto src = collect_blocks(g);
    for (std::size_t b = 0; b < acc.size(); ++b) {
      for (std::size_t i = 0; i < acc[b].size(); ++i) acc[b][i] += src[b][i];
    }
  }
  return out;
}

// End-to-end fine-tuning of both stages on the CRF training shapes.
inline void train_joint_stage(std::span<const PreparedShape> shapes, TrainState& state, const RunConfig& cfg,
                              const TrainLog& log = {}) {
  if (state.joint_epoch >= cfg.joint_epochs) return;
  const std::size_t count = std::min<std::size_t>(shapes.size(), static_cast<std::size_t>(cfg.crf.max_train_shapes));
  if (count == 0) throw ValidationError("train: no shapes for joint training");
  std::vector<CrfSetup> setups(count);
  for (std::size_t s = 0; s < count; ++s) setups[s] = crf_for_mesh(shapes[s].mesh, state.crf, cfg);
  for (; state.joint_epoch < cfg.joint_epochs; ++state.joint_epoch) {
    for (std::size_t s = 0; s < count; ++s) {
      CrfSetup& setup = setups[s];
      setup.params.mu = state.crf.mu;
      setup.params.w_near = state.crf.w_near;
      setup.params.w_far = state.crf.w_far;
      setup.params.w_feat = state.crf.w_feat;
      const JointStep g = joint_gradient(shapes[s], setup, state.params, cfg.jobs);
      adam_step(state.params, g.viewnet_grad, state.adam, AdamConfig{cfg.lr});
      adam_step(state.crf, g.crf_grad, state.crf_adam, AdamConfig{cfg.crf.lr});
      ++state.step;
      if (log) log({cfg.epochs + state.joint_epoch, state.step, g.loss});
    }
  }
}

struct Inference {
  AggregateResult aggregate;
  std::optional<ProbabilityField> refined;  // CRF output
  std::vector<Label> labels;

  const ProbabilityField& pdf() const { return refined ? *refined : aggregate.pdf; }
};

inline Inference infer(const PreparedShape& shape, const TrainState& state, const RunConfig& cfg, bool use_crf) {
  Inference out;
  out.aggregate = aggregate_shape(shape, state.params, cfg.jobs);
  if (use_crf) {
    const CrfSetup setup = crf_for_mesh(shape.mesh, state.crf, cfg);
    out.refined = mean_field_infer(unary_from_aggregate(out.aggregate), setup.params, setup.kernels);
  }
  out.labels = map_labeling(out.pdf());
  return out;
}

// Fixed palette, cycled for L > 10.
inline Rgb label_color(Label l) {
  static constexpr std::array<Rgb, 10> palette{{{31, 119, 180},
                                                {255, 127, 14},
                                                {44, 160, 44},
                                                {214, 39, 40},
                                                {148, 103, 189},
                                                {140, 86, 75},
                                                {227, 119, 194},
                                                {127, 127, 127},
                                                {188, 189, 34},
                                                {23, 190, 207}}};
  return palette[static_cast<std::size_t>(l - 1) % palette.size()];
}

// Grayscale, black at maximum normalized entropy.
inline Rgb entropy_color(double h) {
  const auto g = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - std::clamp(h, 0.0, 1.0))));
  return {g, g, g};
}

}  // namespace viewseg
