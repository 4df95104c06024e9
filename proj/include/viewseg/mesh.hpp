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

// Indexed triangle meshes, vertex normals and graph geodesics.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "viewseg/common.hpp"

namespace viewseg {

using Face = std::array<VertexIndex, 3>;

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::vector<Vec3> normals;  // empty when absent
  std::vector<Label> labels;  // empty when absent

  std::size_t vertex_count() const { return vertices.size(); }
  bool has_normals() const { return !normals.empty(); }
  bool has_labels() const { return !labels.empty(); }

  friend bool operator==(const Mesh&, const Mesh&) = default;
};

// Throws ValidationError when a Mesh invariant does not hold. With
// num_labels == 0 only the lower label bound is checked.
inline void validate(const Mesh& mesh, int num_labels = 0) {
  const auto n = mesh.vertex_count();
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& t = mesh.faces[f];
    for (VertexIndex i : t) {
      if (i >= n) {
        throw ValidationError("face " + std::to_string(f) + " references vertex " + std::to_string(i) +
                              " but the mesh has " + std::to_string(n) + " vertices");
      }
    }
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
      throw ValidationError("face " + std::to_string(f) + " is degenerate (repeated vertex index)");
    }
  }
  if (mesh.has_normals()) {
    if (mesh.normals.size() != n) throw ValidationError("normal count does not match vertex count");
    for (std::size_t i = 0; i < n; ++i) {
      if (std::abs(norm(mesh.normals[i]) - 1.0) > 1e-6) {
        throw ValidationError("normal " + std::to_string(i) + " is not unit length");
      }
    }
  }
  if (mesh.has_labels()) {
    if (mesh.labels.size() != n) throw ValidationError("label count does not match vertex count");
    for (std::size_t i = 0; i < n; ++i) {
      if (mesh.labels[i] < 1 || (num_labels > 0 && mesh.labels[i] > num_labels)) {
        throw ValidationError("vertex " + std::to_string(i) + " has out-of-range label " +
                              std::to_string(mesh.labels[i]));
      }
    }
  }
}

// Cross product of the face edges; its length is twice the face area.
inline Vec3 face_normal_unnormalized(const Mesh& mesh, const Face& f) {
  const Vec3 a = mesh.vertices[f[0]];
  return cross(mesh.vertices[f[1]] - a, mesh.vertices[f[2]] - a);
}

inline std::vector<double> face_areas(const Mesh& mesh) {
  std::vector<double> out(mesh.faces.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    out[f] = 0.5 * norm(face_normal_unnormalized(mesh, mesh.faces[f]));
  }
  return out;
}

// Per-vertex sum of incident face normals, each weighted by face area.
// Vertices without incident faces get the zero vector.
inline std::vector<Vec3> accumulate_face_normals(const Mesh& mesh) {
  std::vector<Vec3> acc(mesh.vertex_count());
  for (const Face& f : mesh.faces) {
    const Vec3 n = face_normal_unnormalized(mesh, f);
    for (VertexIndex i : f) acc[i] += n;
  }
  return acc;
}

// Area-weighted vertex normals. Orphan vertices are an error.
inline std::vector<Vec3> vertex_normals(const Mesh& mesh) {
  if (mesh.faces.empty()) throw ValidationError("vertex_normals: mesh has no faces");
  std::vector<char> used(mesh.vertex_count(), 0);
  for (const Face& f : mesh.faces) {
    for (VertexIndex i : f) used[i] = 1;
  }
  std::vector<VertexIndex> orphans;
  for (std::size_t i = 0; i < used.size(); ++i) {
    if (!used[i]) orphans.push_back(static_cast<VertexIndex>(i));
  }
  if (!orphans.empty()) {
    std::string msg = "vertex_normals: vertices without incident faces:";
    for (std::size_t k = 0; k < orphans.size() && k < 32; ++k) msg += " " + std::to_string(orphans[k]);
    if (orphans.size() > 32) msg += " ... (" + std::to_string(orphans.size()) + " total)";
    throw ValidationError(msg);
  }
  auto acc = accumulate_face_normals(mesh);
  for (std::size_t i = 0; i < acc.size(); ++i) {
    const double len = norm(acc[i]);
    if (!(len > 0.0)) {
      throw ValidationError("vertex_normals: vertex " + std::to_string(i) + " has only zero-area faces");
    }
    acc[i] = acc[i] / len;
  }
  return acc;
}

inline Vec3 centroid(const Mesh& mesh) {
  Vec3 c;
  for (const Vec3& p : mesh.vertices) c += p;
  return mesh.vertices.empty() ? c : c / static_cast<double>(mesh.vertex_count());
}

// Radius of the sphere centred on the vertex centroid that encloses every vertex.
inline double bounding_radius(const Mesh& mesh, Vec3 center) {
  double r = 0.0;
  for (const Vec3& p : mesh.vertices) r = std::max(r, distance(p, center));
  return r;
}

// Undirected edge graph with Euclidean weights; neighbours sorted by index.
struct EdgeGraph {
  std::vector<std::vector<std::pair<VertexIndex, double>>> adjacency;

  std::size_t vertex_count() const { return adjacency.size(); }
};

inline EdgeGraph build_edge_graph(const Mesh& mesh) {
  EdgeGraph g;
  g.adjacency.resize(mesh.vertex_count());
  for (const Face& f : mesh.faces) {
    for (int k = 0; k < 3; ++k) {
      const VertexIndex a = f[k];
      const VertexIndex b = f[(k + 1) % 3];
      const double w = distance(mesh.vertices[a], mesh.vertices[b]);
      g.adjacency[a].emplace_back(b, w);
      g.adjacency[b].emplace_back(a, w);
    }
  }
  for (auto& nbrs : g.adjacency) {
    std::sort(nbrs.begin(), nbrs.end());
    nbrs.erase(std::unique(nbrs.begin(), nbrs.end(),
                           [](const auto& p, const auto& q) { return p.first == q.first; }),
               nbrs.end());
  }
  return g;
}

inline double max_edge_length(const Mesh& mesh) {
  double m = 0.0;
  for (const Face& f : mesh.faces) {
    for (int k = 0; k < 3; ++k) m = std::max(m, distance(mesh.vertices[f[k]], mesh.vertices[f[(k + 1) % 3]]));
  }
  return m;
}

inline double mean_edge_length(const Mesh& mesh) {
  const EdgeGraph g = build_edge_graph(mesh);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t a = 0; a < g.vertex_count(); ++a) {
    for (const auto& [b, w] : g.adjacency[a]) {
      if (b > a) {
        sum += w;
        ++count;
      }
    }
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

struct GeodesicField {
  VertexIndex source = 0;
  std::vector<double> distances;  // +inf where unreachable or beyond the cutoff
};

// Dijkstra over the edge graph. Vertices farther than `cutoff` report +inf.
inline GeodesicField geodesic_distances(const EdgeGraph& graph, VertexIndex source,
                                        std::optional<double> cutoff = std::nullopt) {
  if (source >= graph.vertex_count()) {
    throw ValidationError("geodesic_distances: source " + std::to_string(source) + " out of range");
  }
  GeodesicField field{source, std::vector<double>(graph.vertex_count(), kInf)};
  auto& dist = field.distances;
  using Entry = std::pair<double, VertexIndex>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  dist[source] = 0.0;
  queue.emplace(0.0, source);
  const double limit = cutoff.value_or(kInf);
  while (!queue.empty()) {
    const auto [d, u] = queue.top();
    queue.pop();
    if (d > dist[u]) continue;
    for (const auto& [v, w] : graph.adjacency[u]) {
      const double nd = d + w;
      if (nd < dist[v] && nd <= limit) {
        dist[v] = nd;
        queue.emplace(nd, v);
      }
    }
  }
  return field;
}

inline GeodesicField geodesic_distances(const Mesh& mesh, VertexIndex source,
                                        std::optional<double> cutoff = std::nullopt) {
  return geodesic_distances(build_edge_graph(mesh), source, cutoff);
}

// Symmetric N x N matrix of graph geodesics. Entry (i, j) with i < j comes
// from the search rooted at i and is mirrored, so symmetry is exact. With
// `normalize_by_diameter` every finite distance is divided by the largest
// finite one.
inline Matrix all_pairs_geodesics(const Mesh& mesh, std::optional<double> cutoff = std::nullopt,
                                  bool normalize_by_diameter = false) {
  const EdgeGraph graph = build_edge_graph(mesh);
  const std::size_t n = mesh.vertex_count();
  Matrix d(n, n, kInf);
  for (std::size_t i = 0; i < n; ++i) {
    const auto field = geodesic_distances(graph, static_cast<VertexIndex>(i), cutoff);
    d(i, i) = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      d(i, j) = field.distances[j];
      d(j, i) = field.distances[j];
    }
  }
  if (normalize_by_diameter) {
    double diam = 0.0;
    for (double x : d.data) {
      if (std::isfinite(x)) diam = std::max(diam, x);
    }
    if (diam > 0.0) {
      for (double& x : d.data) {
        if (std::isfinite(x)) x /= diam;
      }
    }
  }
  return d;
}

}  // namespace viewseg
