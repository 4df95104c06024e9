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

// Segmentation scores and per-vertex uncertainty.

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "viewseg/common.hpp"
#include "viewseg/mesh.hpp"

namespace viewseg {

// One third of the summed area of the faces around each vertex.
inline std::vector<double> vertex_area_weights(const Mesh& mesh) {
  std::vector<double> w(mesh.vertex_count(), 0.0);
  const auto areas = face_areas(mesh);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    for (VertexIndex i : mesh.faces[f]) w[i] += areas[f] / 3.0;
  }
  return w;
}

// Fraction of matching labels, optionally weighted per vertex.
inline double accuracy(std::span<const Label> pred, std::span<const Label> gt,
                       std::optional<std::span<const double>> weights = std::nullopt) {
  if (pred.size() != gt.size()) {
    throw ValidationError("accuracy: " + std::to_string(pred.size()) + " predictions for " +
                          std::to_string(gt.size()) + " ground-truth labels");
  }
  if (weights && weights->size() != pred.size()) throw ValidationError("accuracy: weight count mismatch");
  double hit = 0.0, total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double w = weights ? (*weights)[i] : 1.0;
    total += w;
    if (pred[i] == gt[i]) hit += w;
  }
  if (!(total > 0.0)) throw ValidationError("accuracy: no vertices (or zero total weight)");
  return hit / total;
}

struct EvalReport {
  double accuracy = 0.0;
  std::optional<double> area_weighted_accuracy;
  std::vector<std::optional<double>> per_class_iou;  // nullopt for classes absent from both
  double mean_iou = 0.0;
  std::vector<std::size_t> gt_counts;    // vertices per class in the ground truth
  std::vector<std::size_t> pred_counts;  // vertices per class in the prediction
};

// IoU per class; the mean runs over classes present in gt or pred.
inline EvalReport mean_iou(std::span<const Label> pred, std::span<const Label> gt, int num_labels) {
  if (pred.size() != gt.size()) throw ValidationError("mean_iou: length mismatch");
  check_labels(pred, num_labels, "mean_iou (prediction)");
  check_labels(gt, num_labels, "mean_iou (ground truth)");
  const auto L = static_cast<std::size_t>(num_labels);
  std::vector<std::size_t> inter(L, 0), pc(L, 0), gc(L, 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ++pc[pred[i] - 1];
    ++gc[gt[i] - 1];
    if (pred[i] == gt[i]) ++inter[pred[i] - 1];
  }
  EvalReport r;
  r.per_class_iou.resize(L);
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t uni = pc[l] + gc[l] - inter[l];
    if (uni == 0) continue;
    const double iou = static_cast<double>(inter[l]) / static_cast<double>(uni);
    r.per_class_iou[l] = iou;
    sum += iou;
    ++present;
  }
  if (present == 0) throw ValidationError("mean_iou: no class present in either labeling");
  r.mean_iou = sum / static_cast<double>(present);
  r.accuracy = accuracy(pred, gt);
  r.gt_counts = std::move(gc);
  r.pred_counts = std::move(pc);
  return r;
}

// Full report; area-weighted accuracy is filled when a mesh is supplied.
inline EvalReport evaluate(std::span<const Label> pred, std::span<const Label> gt, int num_labels,
                           const Mesh* mesh = nullptr) {
  EvalReport r = mean_iou(pred, gt, num_labels);
  if (mesh != nullptr && !mesh->faces.empty()) {
    const auto w = vertex_area_weights(*mesh);
    r.area_weighted_accuracy = accuracy(pred, gt, std::span<const double>(w));
  }
  return r;
}

// Shannon entropy of each row divided by ln L: 0 is certain, 1 is uniform.
inline std::vector<double> entropy_map(const ProbabilityField& pdf) {
  std::vector<double> out(pdf.vertex_count(), 0.0);
  const std::size_t L = pdf.num_labels();
  if (L < 2) return out;
  const double norm = std::log(static_cast<double>(L));
  for (std::size_t v = 0; v < out.size(); ++v) {
    double h = 0.0;
    for (double p : pdf.row(v)) {
      if (p > 0.0) h -= p * std::log(p);
    }
    out[v] = std::clamp(h / norm, 0.0, 1.0);
  }
  return out;
}

// Vertices sharing an edge with a differently labeled vertex.
inline std::vector<char> label_boundary_vertices(const Mesh& mesh, std::span<const Label> labels) {
  std::vector<char> b(mesh.vertex_count(), 0);
  for (const Face& f : mesh.faces) {
    for (int k = 0; k < 3; ++k) {
      const VertexIndex a = f[k], c = f[(k + 1) % 3];
      if (labels[a] != labels[c]) b[a] = b[c] = 1;
    }
  }
  return b;
}

}  // namespace viewseg
