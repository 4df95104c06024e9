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

// Adam over any parameter structure that exposes its learnables through
// `for_each_block(params, fn)`, where fn receives (name, span) and the span
// is const exactly when params is.

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "viewseg/common.hpp"

namespace viewseg {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t step = 0;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

// Spans over every learnable block, in visiting order. Constness follows Params.
template <class Params>
auto collect_blocks(Params& p, std::vector<std::string>* names = nullptr) {
  using Span = std::conditional_t<std::is_const_v<Params>, std::span<const double>, std::span<double>>;
  std::vector<Span> out;
  for_each_block(p, [&](std::string_view name, Span block) {
    out.push_back(block);
    if (names) names->emplace_back(name);
  });
  return out;
}

template <class Params>
std::size_t count_scalars(const Params& p) {
  std::size_t n = 0;
  for (auto block : collect_blocks(p)) n += block.size();
  return n;
}

// One bias-corrected Adam update. Gradients are checked for finiteness
// before anything is modified.
template <class Params>
void adam_step(Params& params, const Params& grads, AdamState& state, const AdamConfig& cfg = {}) {
  std::vector<std::string> names;
  auto p = collect_blocks(params, &names);
  auto g = collect_blocks(grads);
  if (p.size() != g.size()) throw ConfigError("adam_step: parameter/gradient block count mismatch");
  for (std::size_t b = 0; b < p.size(); ++b) {
    if (p[b].size() != g[b].size()) throw ConfigError("adam_step: shape mismatch in block '" + names[b] + "'");
    for (double x : g[b]) {
      if (!std::isfinite(x)) throw NumericError("adam_step: non-finite gradient in block '" + names[b] + "'");
    }
  }
  if (state.m.empty()) {
    state.m.resize(p.size());
    state.v.resize(p.size());
    for (std::size_t b = 0; b < p.size(); ++b) {
      state.m[b].assign(p[b].size(), 0.0);
      state.v[b].assign(p[b].size(), 0.0);
    }
  }
  if (state.m.size() != p.size()) throw ConfigError("adam_step: optimizer state does not match parameters");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t b = 0; b < p.size(); ++b) {
    auto& m = state.m[b];
    auto& v = state.v[b];
    if (m.size() != p[b].size()) throw ConfigError("adam_step: optimizer state shape mismatch in '" + names[b] + "'");
    for (std::size_t i = 0; i < p[b].size(); ++i) {
      const double gi = g[b][i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      p[b][i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
    }
  }
}

}  // namespace viewseg
