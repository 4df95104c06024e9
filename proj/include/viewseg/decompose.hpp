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

// Shape decomposition: orthographic range scans taken from a ring of
// viewpoints, lifted to grid-connected sub-meshes ("views") that remember
// which source vertex every sample came from.

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "viewseg/common.hpp"
#include "viewseg/mesh.hpp"

namespace viewseg {

struct Viewpoint {
  Vec3 position;
  Vec3 look_at;
  Vec3 up;
  int index = 1;  // 1..M
};

// Orthographic camera: pixel (row, col) looks along `forward` from
// origin + x * right + y * up, with x, y spanning [-half_extent, half_extent].
struct OrthoCamera {
  Vec3 origin;
  Vec3 right;
  Vec3 up;
  Vec3 forward;
  double half_extent = 1.0;
  int width = 0;   // U, columns
  int height = 0;  // V, rows

  double pixel_width() const { return 2.0 * half_extent / width; }
  double pixel_height() const { return 2.0 * half_extent / height; }
  double pixel_x(int col) const { return -half_extent + (col + 0.5) * pixel_width(); }
  double pixel_y(int row) const { return half_extent - (row + 0.5) * pixel_height(); }

  Vec3 to_camera(Vec3 p) const {
    const Vec3 d = p - origin;
    return {dot(d, right), dot(d, up), dot(d, forward)};
  }
  Vec3 back_project(int row, int col, double depth) const {
    return origin + pixel_x(col) * right + pixel_y(row) * up + depth * forward;
  }
};

struct RangeScan {
  int width = 0;
  int height = 0;
  std::vector<double> depth;             // row-major, +inf for background
  std::vector<VertexIndex> hit_vertex;   // kNoVertex for background
  std::vector<std::uint32_t> hit_face;   // kNoVertex for background
  OrthoCamera camera;

  std::size_t at(int row, int col) const { return static_cast<std::size_t>(row) * width + col; }
  bool foreground(int row, int col) const { return hit_vertex[at(row, col)] != kNoVertex; }
  std::size_t foreground_count() const {
    return static_cast<std::size_t>(std::count_if(hit_vertex.begin(), hit_vertex.end(),
                                                  [](VertexIndex v) { return v != kNoVertex; }));
  }
};

struct GridPos {
  int row = 0;
  int col = 0;
  friend bool operator==(GridPos, GridPos) = default;
};

using Signal = std::array<double, 6>;

struct View {
  Mesh mesh;
  std::vector<Signal> signal;              // (position, normal)
  std::vector<VertexIndex> correspondence;  // source-mesh vertex of every view vertex
  std::vector<GridPos> grid_pos;
  Viewpoint viewpoint;
  int width = 0;
  int height = 0;

  std::size_t vertex_count() const { return mesh.vertex_count(); }
  bool empty() const { return mesh.vertices.empty(); }

  friend bool operator==(const View& a, const View& b) {
    return a.mesh == b.mesh && a.signal == b.signal && a.correspondence == b.correspondence &&
           a.grid_pos == b.grid_pos && a.width == b.width && a.height == b.height;
  }
};

struct DecomposeOptions {
  int num_views = 10;  // M
  int width = 128;     // U
  int height = 128;    // V
  Vec3 ring_axis{0.0, 1.0, 0.0};
  double ring_radius_factor = 1.5;
  double frustum_margin = 1.05;
  // Explicit depth-discontinuity threshold for view faces; the default is
  // 5 x max(median foreground depth gradient, pixel size).
  std::optional<double> discontinuity_threshold;
};

// M cameras on a circle around the centroid, in the plane normal to
// `ring_axis`, 360/M degrees apart and starting on the first in-plane axis.
inline std::vector<Viewpoint> generate_viewpoints(const Mesh& mesh, int num_views, Vec3 ring_axis = {0.0, 1.0, 0.0},
                                                  double radius_factor = 1.5) {
  if (num_views < 1) throw ValidationError("generate_viewpoints: M must be >= 1");
  if (mesh.vertices.empty()) throw ValidationError("generate_viewpoints: empty mesh");
  const Vec3 axis = normalized(ring_axis);
  if (norm(axis) == 0.0) throw ValidationError("generate_viewpoints: zero ring axis");
  const Vec3 c = centroid(mesh);
  const double r = bounding_radius(mesh, c);
  if (!(r > 0.0)) throw ValidationError("generate_viewpoints: mesh has zero extent");
  const Vec3 ref = std::abs(axis.z) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
  const Vec3 e1 = normalized(cross(axis, ref));
  const Vec3 e2 = cross(e1, axis);
  std::vector<Viewpoint> out;
  out.reserve(num_views);
  for (int m = 0; m < num_views; ++m) {
    const double theta = 2.0 * std::numbers::pi * m / num_views;
    const Vec3 dir = std::cos(theta) * e1 + std::sin(theta) * e2;
    out.push_back({c + radius_factor * r * dir, c, axis, m + 1});
  }
  return out;
}

inline OrthoCamera make_camera(const Mesh& mesh, const Viewpoint& vp, int width, int height, double margin = 1.05) {
  const Vec3 f = normalized(vp.look_at - vp.position);
  if (norm(f) == 0.0) throw ValidationError("viewpoint position equals look_at");
  const Vec3 r = cross(f, normalized(vp.up));
  if (norm(r) < 1e-12) throw ValidationError("viewpoint up vector is parallel to the viewing direction");
  OrthoCamera cam;
  cam.origin = vp.position;
  cam.forward = f;
  cam.right = normalized(r);
  cam.up = cross(cam.right, f);
  const double radius = bounding_radius(mesh, centroid(mesh));
  cam.half_extent = margin * (radius > 0.0 ? radius : 1.0);
  cam.width = width;
  cam.height = height;
  return cam;
}

// Rasterizes every face with a z-buffer; the strictly smallest camera depth
// wins and ties keep the earlier face. The hit vertex is the corner with the
// largest barycentric weight, ties toward the lower vertex index.
inline RangeScan render_range_scan(const Mesh& mesh, const Viewpoint& vp, int width, int height,
                                   double margin = 1.05) {
  if (width < 2 || height < 2) throw ValidationError("render_range_scan: U and V must be >= 2");
  RangeScan scan;
  scan.width = width;
  scan.height = height;
  scan.camera = make_camera(mesh, vp, width, height, margin);
  const std::size_t pixels = static_cast<std::size_t>(width) * height;
  scan.depth.assign(pixels, kInf);
  scan.hit_vertex.assign(pixels, kNoVertex);
  scan.hit_face.assign(pixels, kNoVertex);
  const OrthoCamera& cam = scan.camera;
  const double pw = cam.pixel_width();
  const double ph = cam.pixel_height();
  const double h = cam.half_extent;

  std::vector<Vec3> cv(mesh.vertex_count());
  for (std::size_t i = 0; i < cv.size(); ++i) cv[i] = cam.to_camera(mesh.vertices[i]);

  for (std::size_t fi = 0; fi < mesh.faces.size(); ++fi) {
    const Face& f = mesh.faces[fi];
    const Vec3 a = cv[f[0]], b = cv[f[1]], c = cv[f[2]];
    const double area = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    if (area == 0.0) continue;
    const double xmin = std::min({a.x, b.x, c.x}), xmax = std::max({a.x, b.x, c.x});
    const double ymin = std::min({a.y, b.y, c.y}), ymax = std::max({a.y, b.y, c.y});
    const int c0 = std::max(0, static_cast<int>(std::floor((xmin + h) / pw - 0.5)));
    const int c1 = std::min(width - 1, static_cast<int>(std::ceil((xmax + h) / pw - 0.5)));
    const int r0 = std::max(0, static_cast<int>(std::floor((h - ymax) / ph - 0.5)));
    const int r1 = std::min(height - 1, static_cast<int>(std::ceil((h - ymin) / ph - 0.5)));
    for (int row = r0; row <= r1; ++row) {
      const double py = cam.pixel_y(row);
      for (int col = c0; col <= c1; ++col) {
        const double px = cam.pixel_x(col);
        const double w0 = ((b.x - px) * (c.y - py) - (c.x - px) * (b.y - py)) / area;
        const double w1 = ((c.x - px) * (a.y - py) - (a.x - px) * (c.y - py)) / area;
        const double w2 = ((a.x - px) * (b.y - py) - (b.x - px) * (a.y - py)) / area;
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
        const double z = w0 * a.z + w1 * b.z + w2 * c.z;
        if (z < 0.0) continue;
        const std::size_t idx = scan.at(row, col);
        if (!(z < scan.depth[idx])) continue;
        const std::array<double, 3> w{w0, w1, w2};
        int best = 0;
        for (int k = 1; k < 3; ++k) {
          if (w[k] > w[best] || (w[k] == w[best] && f[k] < f[best])) best = k;
        }
        scan.depth[idx] = z;
        scan.hit_vertex[idx] = f[best];
        scan.hit_face[idx] = static_cast<std::uint32_t>(fi);
      }
    }
  }
  return scan;
}

// 5 x max(median depth step between 4-adjacent foreground pixels, pixel size).
inline double default_discontinuity_threshold(const RangeScan& scan) {
  std::vector<double> steps;
  for (int r = 0; r < scan.height; ++r) {
    for (int c = 0; c < scan.width; ++c) {
      if (!scan.foreground(r, c)) continue;
      const double d = scan.depth[scan.at(r, c)];
      if (c + 1 < scan.width && scan.foreground(r, c + 1)) steps.push_back(std::abs(scan.depth[scan.at(r, c + 1)] - d));
      if (r + 1 < scan.height && scan.foreground(r + 1, c)) steps.push_back(std::abs(scan.depth[scan.at(r + 1, c)] - d));
    }
  }
  double median = 0.0;
  if (!steps.empty()) {
    auto mid = steps.begin() + static_cast<std::ptrdiff_t>(steps.size() / 2);
    std::nth_element(steps.begin(), mid, steps.end());
    median = *mid;
  }
  const double pixel = std::max(scan.camera.pixel_width(), scan.camera.pixel_height());
  return 5.0 * std::max(median, pixel);
}

// One vertex per foreground pixel in row-major order, placed at the
// back-projected hit point. Each 2x2 all-foreground block whose depth range
// is below the threshold contributes two triangles facing the camera.
inline View build_view(const RangeScan& scan, const Mesh& mesh, const Viewpoint& vp,
                       std::optional<double> discontinuity_threshold = std::nullopt) {
  View view;
  view.viewpoint = vp;
  view.width = scan.width;
  view.height = scan.height;
  const OrthoCamera& cam = scan.camera;
  std::vector<VertexIndex> index_of(scan.depth.size(), kNoVertex);
  for (int r = 0; r < scan.height; ++r) {
    for (int c = 0; c < scan.width; ++c) {
      const std::size_t p = scan.at(r, c);
      const VertexIndex hit = scan.hit_vertex[p];
      if (hit == kNoVertex) continue;
      if (hit >= mesh.vertex_count()) {
        throw ValidationError("build_view: scan hit vertex " + std::to_string(hit) + " but the mesh has " +
                              std::to_string(mesh.vertex_count()) + " vertices");
      }
      if (!std::isfinite(scan.depth[p])) throw ValidationError("build_view: foreground pixel without finite depth");
      index_of[p] = static_cast<VertexIndex>(view.mesh.vertices.size());
      view.mesh.vertices.push_back(cam.back_project(r, c, scan.depth[p]));
      view.correspondence.push_back(hit);
      view.grid_pos.push_back({r, c});
    }
  }
  if (view.empty()) return view;

  const double threshold = discontinuity_threshold.value_or(default_discontinuity_threshold(scan));
  for (int r = 0; r + 1 < scan.height; ++r) {
    for (int c = 0; c + 1 < scan.width; ++c) {
      const std::array<std::size_t, 4> q{scan.at(r, c), scan.at(r + 1, c), scan.at(r, c + 1), scan.at(r + 1, c + 1)};
      if (std::any_of(q.begin(), q.end(), [&](std::size_t p) { return index_of[p] == kNoVertex; })) continue;
      double lo = kInf, hi = -kInf;
      for (std::size_t p : q) {
        lo = std::min(lo, scan.depth[p]);
        hi = std::max(hi, scan.depth[p]);
      }
      if (!(hi - lo < threshold)) continue;
      view.mesh.faces.push_back({index_of[q[0]], index_of[q[1]], index_of[q[2]]});
      view.mesh.faces.push_back({index_of[q[1]], index_of[q[3]], index_of[q[2]]});
    }
  }

  // Vertices without faces (isolated samples, torn silhouettes) face the camera.
  auto acc = accumulate_face_normals(view.mesh);
  view.mesh.normals.resize(acc.size());
  view.signal.resize(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) {
    const double len = norm(acc[i]);
    const Vec3 n = len > 0.0 ? acc[i] / len : -cam.forward;
    view.mesh.normals[i] = n;
    const Vec3 p = view.mesh.vertices[i];
    view.signal[i] = {p.x, p.y, p.z, n.x, n.y, n.z};
  }
  return view;
}

inline std::vector<View> decompose_shape(const Mesh& mesh, const DecomposeOptions& opts = {}) {
  const auto viewpoints = generate_viewpoints(mesh, opts.num_views, opts.ring_axis, opts.ring_radius_factor);
  std::vector<View> views;
  views.reserve(viewpoints.size());
  for (const Viewpoint& vp : viewpoints) {
    const RangeScan scan = render_range_scan(mesh, vp, opts.width, opts.height, opts.frustum_margin);
    views.push_back(build_view(scan, mesh, vp, opts.discontinuity_threshold));
  }
  return views;
}

// Fraction of source vertices that at least one view maps to.
inline double correspondence_coverage(const std::vector<View>& views, std::size_t source_vertex_count) {
  std::vector<char> hit(source_vertex_count, 0);
  for (const View& v : views) {
    for (VertexIndex t : v.correspondence) hit[t] = 1;
  }
  const auto covered = std::count(hit.begin(), hit.end(), 1);
  return source_vertex_count ? static_cast<double>(covered) / static_cast<double>(source_vertex_count) : 0.0;
}

}  // namespace viewseg
