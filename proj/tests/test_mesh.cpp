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

#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <random>

#include "test_util.hpp"
#include "viewseg/mesh.hpp"

namespace viewseg {
namespace {

using testing::grid_mesh;
using testing::unit_cube;

TEST(Validate, RejectsBadFaces) {
  Mesh m = grid_mesh(2, 2);
  EXPECT_NO_THROW(validate(m));
  m.faces.push_back({0, 1, 7});
  EXPECT_THROW(validate(m), ValidationError);
  m.faces.back() = {0, 1, 1};
  EXPECT_THROW(validate(m), ValidationError);
}

TEST(Validate, ChecksNormalsAndLabels) {
  Mesh m = grid_mesh(2, 2);
  m.normals.assign(4, Vec3{0, 0, 1});
  EXPECT_NO_THROW(validate(m));
  m.normals[2] = {0, 0, 1.1};
  EXPECT_THROW(validate(m), ValidationError);
  m.normals[2] = {0, 0, 1};
  m.labels = {1, 2, 3, 4};
  EXPECT_NO_THROW(validate(m, 4));
  EXPECT_THROW(validate(m, 3), ValidationError);
}

TEST(VertexNormals, FlatSquarePointsUp) {
  for (const Vec3& n : vertex_normals(testing::square())) {
    EXPECT_NEAR(n.x, 0.0, 1e-15);
    EXPECT_NEAR(n.y, 0.0, 1e-15);
    EXPECT_NEAR(n.z, 1.0, 1e-15);
  }
}

TEST(VertexNormals, SingleTriangleEqualsFaceNormal) {
  Mesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 0, -1}};
  m.faces = {{0, 1, 2}};
  for (const Vec3& n : vertex_normals(m)) {
    EXPECT_NEAR(n.y, 1.0, 1e-15);
  }
}

TEST(VertexNormals, CubeCornerMatchesHandSum) {
  // Both triangles of the x=0, y=0 and z=0 faces touch the origin, so the
  // area-weighted sum is (-1, -1, -1).
  const auto normals = vertex_normals(unit_cube());
  const double c = -1.0 / std::sqrt(3.0);
  EXPECT_NEAR(normals[0].x, c, 1e-15);
  EXPECT_NEAR(normals[0].y, c, 1e-15);
  EXPECT_NEAR(normals[0].z, c, 1e-15);
}

TEST(VertexNormals, UnevenAreasWeightTheSum) {
  // Corner 1 = (1,0,0) touches one triangle of the z=0 face (area 1/2),
  // one of y=0 (1/2) and both of x=1 (1): sum (1, -1/2, -1/2).
  const auto n = vertex_normals(unit_cube())[1];
  const Vec3 e = normalized(Vec3{1.0, -0.5, -0.5});
  EXPECT_NEAR(norm(n - e), 0.0, 1e-15);
}

TEST(VertexNormals, OrphanVertexIsNamed) {
  Mesh m = grid_mesh(2, 2);
  m.vertices.push_back({5, 5, 5});
  try {
    vertex_normals(m);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("4"), std::string::npos);
  }
}

TEST(VertexNormals, RotationEquivariant) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ang(-3.0, 3.0);
  const Mesh base = testing::uv_sphere(6, 9);
  const auto n0 = vertex_normals(base);
  for (int trial = 0; trial < 20; ++trial) {
    const double ax = ang(rng), ay = ang(rng), az = ang(rng);
    Mesh r = base;
    for (Vec3& p : r.vertices) p = testing::rotate(p, ax, ay, az);
    const auto n1 = vertex_normals(r);
    for (std::size_t i = 0; i < n0.size(); ++i) {
      const Vec3 e = testing::rotate(n0[i], ax, ay, az);
      EXPECT_NEAR(norm(n1[i] - e), 0.0, 1e-9);
    }
  }
}

TEST(VertexNormals, SphereNormalsPointOutward) {
  const Mesh s = testing::uv_sphere(8, 12);
  const auto n = vertex_normals(s);
  for (std::size_t i = 0; i < n.size(); ++i) {
    EXPECT_NEAR(norm(n[i]), 1.0, 1e-12);
    EXPECT_GT(dot(n[i], s.vertices[i]), 0.9);
  }
}

TEST(Geodesic, SingleEdgeAndSelf) {
  Mesh m;
  m.vertices = {{0, 0, 0}, {0.5, 0, 0}, {0, 2, 0}};
  m.faces = {{0, 1, 2}};
  const auto g = geodesic_distances(m, 0);
  EXPECT_EQ(g.distances[0], 0.0);
  EXPECT_DOUBLE_EQ(g.distances[1], 0.5);
  EXPECT_THROW(geodesic_distances(m, 3), ValidationError);
}

TEST(Geodesic, DisconnectedIsInfinite) {
  const Mesh m = testing::merge(testing::square(), testing::square(1.0, {5, 0, 0}));
  const auto g = geodesic_distances(m, 0);
  EXPECT_EQ(g.distances[5], kInf);
}

TEST(Geodesic, CutoffReportsInfinity) {
  const Mesh m = grid_mesh(1 + 1, 5);
  const auto g = geodesic_distances(m, 0, 2.5);
  EXPECT_DOUBLE_EQ(g.distances[2], 2.0);
  EXPECT_EQ(g.distances[3], kInf);
}

// Shortest simple path by exhaustive enumeration.
double brute_force_path(const Mesh& m, VertexIndex s, VertexIndex t) {
  const EdgeGraph g = build_edge_graph(m);
  std::vector<char> used(m.vertex_count(), 0);
  double best = kInf;
  std::function<void(VertexIndex, double)> dfs = [&](VertexIndex u, double d) {
    if (u == t) {
      best = std::min(best, d);
      return;
    }
    used[u] = 1;
    for (const auto& [v, w] : g.adjacency[u]) {
      if (!used[v]) dfs(v, d + w);
    }
    used[u] = 0;
  };
  dfs(s, 0.0);
  return best;
}

TEST(Geodesic, GridCornerToCornerMatchesEnumeration) {
  const Mesh m = grid_mesh(3, 3);
  const double expect = brute_force_path(m, 0, 8);
  EXPECT_DOUBLE_EQ(expect, 2.0 * std::sqrt(2.0));
  EXPECT_NEAR(geodesic_distances(m, 0).distances[8], expect, 1e-12);
}

TEST(Geodesic, MatchesEnumerationOnRandomSmallMeshes) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> jitter(-0.3, 0.3);
  for (int trial = 0; trial < 30; ++trial) {
    const int rows = 2 + trial % 3, cols = 12 / rows;
    Mesh m = grid_mesh(rows, cols);
    for (Vec3& p : m.vertices) p = p + Vec3{jitter(rng), jitter(rng), jitter(rng)};
    const auto s = static_cast<VertexIndex>(rng() % m.vertex_count());
    const auto field = geodesic_distances(m, s);
    for (VertexIndex t = 0; t < m.vertex_count(); ++t) {
      EXPECT_NEAR(field.distances[t], brute_force_path(m, s, t), 1e-12);
    }
  }
}

TEST(Geodesic, TriangleInequalityAlongEdges) {
  const Mesh m = testing::uv_sphere(7, 11);
  const EdgeGraph g = build_edge_graph(m);
  for (VertexIndex s : {0u, 10u, 40u}) {
    const auto d = geodesic_distances(g, s).distances;
    EXPECT_EQ(d[s], 0.0);
    for (std::size_t a = 0; a < g.adjacency.size(); ++a) {
      for (const auto& [b, w] : g.adjacency[a]) EXPECT_LE(std::abs(d[a] - d[b]), w + 1e-9);
    }
  }
}

TEST(AllPairs, SymmetricAndNormalizable) {
  const Mesh m = testing::uv_sphere(5, 7);
  const Matrix d = all_pairs_geodesics(m);
  const Matrix dn = all_pairs_geodesics(m, std::nullopt, true);
  double diam = 0.0;
  for (std::size_t i = 0; i < d.rows; ++i) {
    for (std::size_t j = 0; j < d.cols; ++j) {
      EXPECT_EQ(d(i, j), d(j, i));
      diam = std::max(diam, d(i, j));
    }
  }
  EXPECT_NEAR(*std::max_element(dn.data.begin(), dn.data.end()), 1.0, 1e-15);
  EXPECT_NEAR(dn(0, 3), d(0, 3) / diam, 1e-15);
}

TEST(EdgeGraph, DeduplicatesSharedEdges) {
  const EdgeGraph g = build_edge_graph(grid_mesh(2, 2));
  EXPECT_EQ(g.adjacency[0].size(), 3u);
  EXPECT_EQ(g.adjacency[1].size(), 2u);
}

}  // namespace
}  // namespace viewseg
