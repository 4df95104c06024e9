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

// Mesh builders and reference implementations shared by the tests.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include "viewseg/aggregate.hpp"
#include "viewseg/common.hpp"
#include "viewseg/decompose.hpp"
#include "viewseg/mesh.hpp"
#include "viewseg/viewnet.hpp"

namespace viewseg::testing {

// rows x cols lattice in the z = 0 plane with the given spacing, each cell
// split along its (r, c)-(r+1, c+1) diagonal, counter-clockwise from +z.
inline Mesh grid_mesh(int rows, int cols, double spacing = 1.0, double z = 0.0) {
  Mesh m;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m.vertices.push_back({c * spacing, r * spacing, z});
  }
  auto id = [cols](int r, int c) { return static_cast<VertexIndex>(r * cols + c); };
  for (int r = 0; r + 1 < rows; ++r) {
    for (int c = 0; c + 1 < cols; ++c) {
      m.faces.push_back({id(r, c), id(r, c + 1), id(r + 1, c + 1)});
      m.faces.push_back({id(r, c), id(r + 1, c + 1), id(r + 1, c)});
    }
  }
  return m;
}

// Axis-aligned unit cube [0,1]^3, outward winding, two triangles per face.
inline Mesh unit_cube() {
  Mesh m;
  for (int i = 0; i < 8; ++i) m.vertices.push_back({double(i & 1), double((i >> 1) & 1), double((i >> 2) & 1)});
  const VertexIndex quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4}, {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (const auto& q : quads) {
    m.faces.push_back({q[0], q[1], q[2]});
    m.faces.push_back({q[0], q[2], q[3]});
  }
  return m;
}

// Latitude/longitude sphere, outward winding.
inline Mesh uv_sphere(int stacks, int slices, double radius = 1.0, Vec3 center = {}) {
  Mesh m;
  m.vertices.push_back(center + Vec3{0, radius, 0});
  for (int i = 1; i < stacks; ++i) {
    const double phi = std::numbers::pi * i / stacks;
    for (int j = 0; j < slices; ++j) {
      const double theta = 2.0 * std::numbers::pi * j / slices;
      m.vertices.push_back(center + radius * Vec3{std::sin(phi) * std::cos(theta), std::cos(phi),
                                                  -std::sin(phi) * std::sin(theta)});
    }
  }
  m.vertices.push_back(center + Vec3{0, -radius, 0});
  const auto bottom = static_cast<VertexIndex>(m.vertices.size() - 1);
  auto ring = [slices](int i, int j) { return static_cast<VertexIndex>(1 + (i - 1) * slices + (j % slices)); };
  for (int j = 0; j < slices; ++j) m.faces.push_back({0, ring(1, j), ring(1, j + 1)});
  for (int i = 1; i + 1 < stacks; ++i) {
    for (int j = 0; j < slices; ++j) {
      m.faces.push_back({ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)});
      m.faces.push_back({ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)});
    }
  }
  for (int j = 0; j < slices; ++j) m.faces.push_back({bottom, ring(stacks - 1, j + 1), ring(stacks - 1, j)});
  return m;
}

// Axis-aligned square of side `size` centered at `center`, normal +z.
inline Mesh square(double size = 1.0, Vec3 center = {}) {
  const double h = size / 2;
  Mesh m;
  m.vertices = {center + Vec3{-h, -h, 0}, center + Vec3{h, -h, 0}, center + Vec3{h, h, 0}, center + Vec3{-h, h, 0}};
  m.faces = {{0, 1, 2}, {0, 2, 3}};
  return m;
}

inline Mesh merge(const Mesh& a, const Mesh& b) {
  Mesh m = a;
  const auto off = static_cast<VertexIndex>(a.vertices.size());
  m.vertices.insert(m.vertices.end(), b.vertices.begin(), b.vertices.end());
  for (Face f : b.faces) m.faces.push_back({f[0] + off, f[1] + off, f[2] + off});
  return m;
}

// Random triangle soup: `faces` triangles with vertices in [-1, 1]^3.
inline Mesh random_soup(std::mt19937_64& rng, int faces) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Mesh m;
  for (int f = 0; f < faces; ++f) {
    const auto base = static_cast<VertexIndex>(m.vertices.size());
    for (int k = 0; k < 3; ++k) m.vertices.push_back({u(rng), u(rng), u(rng)});
    m.faces.push_back({base, base + 1, base + 2});
  }
  return m;
}

inline Vec3 rotate(Vec3 p, double ax, double ay, double az) {
  auto rx = [](Vec3 v, double a) { return Vec3{v.x, std::cos(a) * v.y - std::sin(a) * v.z, std::sin(a) * v.y + std::cos(a) * v.z}; };
  auto ry = [](Vec3 v, double a) { return Vec3{std::cos(a) * v.x + std::sin(a) * v.z, v.y, -std::sin(a) * v.x + std::cos(a) * v.z}; };
  auto rz = [](Vec3 v, double a) { return Vec3{std::cos(a) * v.x - std::sin(a) * v.y, std::sin(a) * v.x + std::cos(a) * v.y, v.z}; };
  return rz(ry(rx(p, ax), ay), az);
}

// Moller-Trumbore; returns the ray parameter of a hit with t >= 0.
inline std::optional<double> ray_triangle(Vec3 origin, Vec3 dir, Vec3 a, Vec3 b, Vec3 c) {
  const Vec3 e1 = b - a, e2 = c - a;
  const Vec3 p = cross(dir, e2);
  const double det = dot(e1, p);
  if (std::abs(det) < 1e-14) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 s = origin - a;
  const double u = dot(s, p) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 q = cross(s, e1);
  const double v = dot(dir, q) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = dot(e2, q) * inv;
  if (t < 0.0) return std::nullopt;
  return t;
}

// Central finite difference of f at x[i].
template <class F>
double central_difference(std::vector<double>& x, std::size_t i, double h, F&& f) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double fp = f();
  x[i] = x0 - h;
  const double fm = f();
  x[i] = x0;
  return (fp - fm) / (2.0 * h);
}

// |a - n| <= tol * max(|a|, |n|), with an absolute floor for values near 0.
inline bool gradient_close(double analytic, double numeric, double tol = 1e-4, double floor = 1e-8) {
  const double diff = std::abs(analytic - numeric);
  return diff <= floor || diff <= tol * std::max(std::abs(analytic), std::abs(numeric));
}

struct OracleHit {
  double depth = std::numeric_limits<double>::infinity();
  VertexIndex vertex = kNoVertex;
};

// Per-pixel ray cast against every triangle.
inline std::vector<OracleHit> oracle_scan(const Mesh& mesh, const OrthoCamera& cam) {
  std::vector<OracleHit> out(static_cast<std::size_t>(cam.width) * cam.height);
  for (int r = 0; r < cam.height; ++r) {
    for (int c = 0; c < cam.width; ++c) {
      const Vec3 origin = cam.origin + cam.pixel_x(c) * cam.right + cam.pixel_y(r) * cam.up;
      OracleHit& best = out[static_cast<std::size_t>(r) * cam.width + c];
      for (const Face& f : mesh.faces) {
        const Vec3 a = mesh.vertices[f[0]], b = mesh.vertices[f[1]], cc = mesh.vertices[f[2]];
        const auto t = ray_triangle(origin, cam.forward, a, b, cc);
        if (!t || !(*t < best.depth)) continue;
        // Barycentrics of the hit point.
        const Vec3 p = origin + *t * cam.forward;
        const Vec3 n = cross(b - a, cc - a);
        const double area = dot(n, n);
        const std::array<double, 3> w{dot(cross(b - p, cc - p), n) / area, dot(cross(cc - p, a - p), n) / area,
                                      dot(cross(a - p, b - p), n) / area};
        int k = 0;
        for (int j = 1; j < 3; ++j) {
          if (w[j] > w[k] || (w[j] == w[k] && f[j] < f[k])) k = j;
        }
        best = {*t, f[k]};
      }
    }
  }
  return out;
}

// n vertices scattered over a small grid block with random signals.
inline ViewInput toy_input(std::mt19937_64& rng, std::size_t n, int radius, int channels = 6) {
  std::vector<GridPos> cells;
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 6; ++c) cells.push_back({r, c});
  }
  std::shuffle(cells.begin(), cells.end(), rng);
  cells.resize(n);
  std::normal_distribution<double> g;
  ViewInput in{Matrix(n, channels), build_pseudo_coords(cells, radius)};
  for (double& x : in.signal.data) x = g(rng);
  return in;
}

inline ProbabilityField random_pdf(std::mt19937_64& rng, std::size_t n, std::size_t L) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ProbabilityField p(n, L);
  for (std::size_t v = 0; v < n; ++v) {
    double s = 0.0;
    for (double& x : p.row(v)) s += (x = u(rng));
    for (double& x : p.row(v)) x /= s;
  }
  return p;
}

// Bins every (m, v) pair per source vertex, then divides.
inline AggregateResult aggregate_oracle(const std::vector<ProbabilityField>& pdfs, const std::vector<std::vector<VertexIndex>>& t,
                       std::size_t n, std::size_t L) {
  std::vector<std::vector<std::vector<double>>> bins(n);
  for (std::size_t m = 0; m < pdfs.size(); ++m) {
    for (std::size_t v = 0; v < t[m].size(); ++v) {
      const auto r = pdfs[m].row(v);
      bins[t[m][v]].emplace_back(r.begin(), r.end());
    }
  }
  AggregateResult out{ProbabilityField(n, L), std::vector<std::uint32_t>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    out.coverage[i] = static_cast<std::uint32_t>(bins[i].size());
    for (std::size_t l = 0; l < L; ++l) {
      if (bins[i].empty()) {
        out.pdf(i, l) = 1.0 / L;
        continue;
      }
      double s = 0.0;
      for (const auto& b : bins[i]) s += b[l];
      out.pdf(i, l) = s / bins[i].size();
    }
  }
  return out;
}

}  // namespace viewseg::testing
