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

// Re-projection of per-view predictions onto the source mesh.

#pragma once

#include <span>
#include <string>
#include <vector>

#include "viewseg/common.hpp"
#include "viewseg/decompose.hpp"

namespace viewseg {

struct AggregateResult {
  ProbabilityField pdf;                // g over source vertices
  std::vector<std::uint32_t> coverage;  // contributing (view, view vertex) pairs
};

// Plain mean over every (view, view vertex) pair whose correspondence hits
// the source vertex. Uncovered vertices get the uniform distribution.
inline AggregateResult project_predictions(std::span<const ProbabilityField> view_pdfs,
                                           std::span<const std::vector<VertexIndex>> correspondences,
                                           std::size_t source_vertex_count, std::size_t num_labels) {
  if (view_pdfs.size() != correspondences.size()) {
    throw ValidationError("project_predictions: " + std::to_string(view_pdfs.size()) + " predictions for " +
                          std::to_string(correspondences.size()) + " views");
  }
  if (num_labels < 1) throw ValidationError("project_predictions: L must be >= 1");
  AggregateResult out{ProbabilityField(source_vertex_count, num_labels), std::vector<std::uint32_t>(source_vertex_count, 0)};
  for (std::size_t m = 0; m < view_pdfs.size(); ++m) {
    const ProbabilityField& g = view_pdfs[m];
    const auto& t = correspondences[m];
    if (g.vertex_count() != t.size()) {
      throw ValidationError("project_predictions: view " + std::to_string(m) + " has " + std::to_string(g.vertex_count()) +
                            " predictions for " + std::to_string(t.size()) + " vertices");
    }
    if (g.vertex_count() > 0 && g.num_labels() != num_labels) {
      throw ValidationError("project_predictions: view " + std::to_string(m) + " has " + std::to_string(g.num_labels()) +
                            " classes, expected " + std::to_string(num_labels));
    }
    for (std::size_t v = 0; v < t.size(); ++v) {
      if (t[v] >= source_vertex_count) {
        throw ValidationError("project_predictions: view " + std::to_string(m) + " maps to vertex " + std::to_string(t[v]) +
                              " of " + std::to_string(source_vertex_count));
      }
      auto dst = out.pdf.row(t[v]);
      const auto src = g.row(v);
      for (std::size_t l = 0; l < num_labels; ++l) dst[l] += src[l];
      ++out.coverage[t[v]];
    }
  }
  const double uniform = 1.0 / static_cast<double>(num_labels);
  for (std::size_t n = 0; n < source_vertex_count; ++n) {
    auto row = out.pdf.row(n);
    if (out.coverage[n] == 0) {
      for (double& x : row) x = uniform;
    } else {
      const double c = out.coverage[n];
      for (double& x : row) x /= c;
    }
  }
  return out;
}

inline AggregateResult project_predictions(std::span<const ProbabilityField> view_pdfs, std::span<const View> views,
                                           std::size_t source_vertex_count, std::size_t num_labels) {
  std::vector<std::vector<VertexIndex>> t;
  t.reserve(views.size());
  for (const View& v : views) t.push_back(v.correspondence);
  return project_predictions(view_pdfs, std::span<const std::vector<VertexIndex>>(t), source_vertex_count, num_labels);
}

}  // namespace viewseg
