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

// Labeled toy shapes built from primitive unions.
//
// The union of the parts' signed distance functions is polygonized with
// marching tetrahedra on a lattice of spacing `cell_size`, so touching parts
// share one connected surface. Each vertex takes the label of the part whose
// surface is closest; ties go to the later part.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "viewseg/common.hpp"
#include "viewseg/mesh.hpp"

namespace viewseg {

enum class Primitive { kSphere, kCapsule, kBox };

struct Pose {
  Vec3 translation;
  Vec3 rotation_deg;  // applied as Rz * Ry * Rx
};

struct Part {
  Primitive primitive = Primitive::kSphere;
  Label label = 1;
  Pose pose;
  double radius = 0.5;       // sphere, capsule
  double half_length = 0.5;  // capsule segment along local y
  Vec3 half_extents{0.5, 0.5, 0.5};  // box
};

struct ShapeSpec {
  std::uint64_t seed = 0;
  std::vector<Part> parts;
  double cell_size = 0.05;

  void validate() const {
    if (parts.size() < 2) throw ValidationError("ShapeSpec: needs at least 2 parts");
    std::vector<Label> labels;
    for (const Part& p : parts) {
      if (p.label < 1) throw ValidationError("ShapeSpec: part labels must be >= 1");
      if (p.primitive != Primitive::kBox && !(p.radius > 0.0)) throw ValidationError("ShapeSpec: radius must be positive");
      if (p.primitive == Primitive::kCapsule && !(p.half_length >= 0.0)) throw ValidationError("ShapeSpec: negative capsule length");
      if (p.primitive == Primitive::kBox && !(p.half_extents.x > 0 && p.half_extents.y > 0 && p.half_extents.z > 0)) {
        throw ValidationError("ShapeSpec: box half extents must be positive");
      }
      labels.push_back(p.label);
    }
    std::sort(labels.begin(), labels.end());
    if (std::unique(labels.begin(), labels.end()) - labels.begin() < 2) {
      throw ValidationError("ShapeSpec: parts must cover at least 2 labels");
    }
    if (!(cell_size > 0.0)) throw ValidationError("ShapeSpec: cell_size must be positive");
  }
};

namespace detail {

struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};
  Vec3 apply(Vec3 v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Vec3 apply_transposed(Vec3 v) const {
    return {m[0] * v.x + m[3] * v.y + m[6] * v.z, m[1] * v.x + m[4] * v.y + m[7] * v.z,
            m[2] * v.x + m[5] * v.y + m[8] * v.z};
  }
  friend Mat3 operator*(const Mat3& a, const Mat3& b) {
    Mat3 c;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += a.m[i * 3 + k] * b.m[k * 3 + j];
        c.m[i * 3 + j] = s;
      }
    }
    return c;
  }
};

inline Mat3 rotation(Vec3 deg) {
  const double k = std::numbers::pi / 180.0;
  const double cx = std::cos(deg.x * k), sx = std::sin(deg.x * k);
  const double cy = std::cos(deg.y * k), sy = std::sin(deg.y * k);
  const double cz = std::cos(deg.z * k), sz = std::sin(deg.z * k);
  const Mat3 rx{{1, 0, 0, 0, cx, -sx, 0, sx, cx}};
  const Mat3 ry{{cy, 0, sy, 0, 1, 0, -sy, 0, cy}};
  const Mat3 rz{{cz, -sz, 0, sz, cz, 0, 0, 0, 1}};
  return rz * ry * rx;
}

struct PlacedPart {
  Part part;
  Mat3 rot;

  double sdf(Vec3 p) const {
    const Vec3 q = rot.apply_transposed(p - part.pose.translation);
    switch (part.primitive) {
      case Primitive::kSphere: return norm(q) - part.radius;
      case Primitive::kCapsule: {
        const double y = std::clamp(q.y, -part.half_length, part.half_length);
        return norm(q - Vec3{0.0, y, 0.0}) - part.radius;
      }
      case Primitive::kBox: {
        const Vec3 d{std::abs(q.x) - part.half_extents.x, std::abs(q.y) - part.half_extents.y,
                     std::abs(q.z) - part.half_extents.z};
        const Vec3 outside{std::max(d.x, 0.0), std::max(d.y, 0.0), std::max(d.z, 0.0)};
        return norm(outside) + std::min(std::max({d.x, d.y, d.z}), 0.0);
      }
    }
    return kInf;
  }

  double bounding_radius() const {
    switch (part.primitive) {
      case Primitive::kSphere: return part.radius;
      case Primitive::kCapsule: return part.half_length + part.radius;
      case Primitive::kBox: return norm(part.half_extents);
    }
    return 0.0;
  }
};

}  // namespace detail

inline Mesh generate(const ShapeSpec& spec) {
  spec.validate();
  std::vector<detail::PlacedPart> parts;
  for (const Part& p : spec.parts) parts.push_back({p, detail::rotation(p.pose.rotation_deg)});

  const double h = spec.cell_size;
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Vec3 shift{unit(rng), unit(rng), unit(rng)};

  Vec3 lo{kInf, kInf, kInf}, hi{-kInf, -kInf, -kInf};
  for (const auto& p : parts) {
    const double r = p.bounding_radius();
    for (int k = 0; k < 3; ++k) {
      lo[k] = std::min(lo[k], p.part.pose.translation[k] - r);
      hi[k] = std::max(hi[k], p.part.pose.translation[k] + r);
    }
  }
  std::array<long, 3> imin{}, count{};
  for (int k = 0; k < 3; ++k) {
    imin[k] = static_cast<long>(std::floor(lo[k] / h - shift[k])) - 1;
    count[k] = static_cast<long>(std::ceil(hi[k] / h - shift[k])) + 1 - imin[k] + 1;
  }
  auto point = [&](long i, long j, long k) {
    return Vec3{(imin[0] + i + shift.x) * h, (imin[1] + j + shift.y) * h, (imin[2] + k + shift.z) * h};
  };
  auto gid = [&](long i, long j, long k) { return static_cast<std::uint64_t>((k * count[1] + j) * count[0] + i); };
  auto union_sdf = [&](Vec3 p) {
    double d = kInf;
    for (const auto& part : parts) d = std::min(d, part.sdf(p));
    return d;
  };

  // Values within a hair of zero are pushed outside so no vertex lands on a lattice point.
  const double nudge = 1e-4 * h;
  std::vector<double> field(static_cast<std::size_t>(count[0] * count[1] * count[2]));
  std::vector<Vec3> grid_points(field.size());
  for (long k = 0; k < count[2]; ++k) {
    for (long j = 0; j < count[1]; ++j) {
      for (long i = 0; i < count[0]; ++i) {
        const Vec3 p = point(i, j, k);
        double v = union_sdf(p);
        if (std::abs(v) < nudge) v = nudge;
        field[gid(i, j, k)] = v;
        grid_points[gid(i, j, k)] = p;
      }
    }
  }

  Mesh mesh;
  std::unordered_map<std::uint64_t, VertexIndex> edge_vertex;
  const std::uint64_t total = field.size();
  auto vertex_on_edge = [&](std::uint64_t a, std::uint64_t b) {
    if (a > b) std::swap(a, b);
    const std::uint64_t key = a * total + b;
    auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    const double fa = field[a], fb = field[b];
    const double t = fa / (fa - fb);
    const auto idx = static_cast<VertexIndex>(mesh.vertices.size());
    mesh.vertices.push_back(grid_points[a] + t * (grid_points[b] - grid_points[a]));
    edge_vertex.emplace(key, idx);
    return idx;
  };
  auto emit = [&](VertexIndex a, VertexIndex b, VertexIndex c, Vec3 outward) {
    const Vec3 n = cross(mesh.vertices[b] - mesh.vertices[a], mesh.vertices[c] - mesh.vertices[a]);
    if (dot(n, outward) < 0.0) std::swap(b, c);
    mesh.faces.push_back({a, b, c});
  };

  // Kuhn subdivision: six tetrahedra sharing the cube diagonal 0-7 (corner bit 1 = x, 2 = y, 4 = z).
  static constexpr std::array<std::array<int, 4>, 6> kTets{
      {{0, 1, 3, 7}, {0, 1, 5, 7}, {0, 2, 3, 7}, {0, 2, 6, 7}, {0, 4, 5, 7}, {0, 4, 6, 7}}};
  for (long k = 0; k + 1 < count[2]; ++k) {
    for (long j = 0; j + 1 < count[1]; ++j) {
      for (long i = 0; i + 1 < count[0]; ++i) {
        std::array<std::uint64_t, 8> corner{};
        bool any_in = false, any_out = false;
        for (int c = 0; c < 8; ++c) {
          corner[c] = gid(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
          (field[corner[c]] < 0.0 ? any_in : any_out) = true;
        }
        if (!any_in || !any_out) continue;
        for (const auto& tet : kTets) {
          std::array<std::uint64_t, 4> in{}, out{};
          int nin = 0, nout = 0;
          for (int c : tet) {
            if (field[corner[c]] < 0.0) {
              in[nin++] = corner[c];
            } else {
              out[nout++] = corner[c];
            }
          }
          if (nin == 0 || nout == 0) continue;
          Vec3 cin, cout;
          for (int a = 0; a < nin; ++a) cin += grid_points[in[a]];
          for (int a = 0; a < nout; ++a) cout += grid_points[out[a]];
          const Vec3 outward = cout / nout - cin / nin;
          if (nin == 1 || nout == 1) {
            const std::uint64_t apex = nin == 1 ? in[0] : out[0];
            const auto& others = nin == 1 ? out : in;
            emit(vertex_on_edge(apex, others[0]), vertex_on_edge(apex, others[1]), vertex_on_edge(apex, others[2]),
                 outward);
          } else {
            const VertexIndex ac = vertex_on_edge(in[0], out[0]);
            const VertexIndex ad = vertex_on_edge(in[0], out[1]);
            const VertexIndex bd = vertex_on_edge(in[1], out[1]);
            const VertexIndex bc = vertex_on_edge(in[1], out[0]);
            emit(ac, ad, bd, outward);
            emit(ac, bd, bc, outward);
          }
        }
      }
    }
  }

  mesh.labels.resize(mesh.vertex_count());
  for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
    double best = kInf;
    for (const auto& part : parts) {
      const double d = std::abs(part.sdf(mesh.vertices[v]));
      if (d <= best) {
        best = d;
        mesh.labels[v] = part.part.label;
      }
    }
  }
  mesh.normals = vertex_normals(mesh);
  return mesh;
}

// Jitters every vertex along its normal by at most noise_scale x mean edge
// length. Labels and connectivity are preserved; normals are recomputed when
// the input carries them.
inline Mesh perturb(const Mesh& mesh, std::uint64_t seed, double noise_scale) {
  if (!(noise_scale >= 0.0)) throw ValidationError("perturb: noise_scale must be >= 0");
  if (noise_scale == 0.0) return mesh;
  const double bound = noise_scale * mean_edge_length(mesh);
  const auto normals = vertex_normals(mesh);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Mesh out = mesh;
  for (std::size_t v = 0; v < out.vertex_count(); ++v) out.vertices[v] += (bound * unit(rng)) * normals[v];
  if (mesh.has_normals()) out.normals = vertex_normals(out);
  return out;
}

inline const std::vector<std::string>& humanoid_label_names() {
  static const std::vector<std::string> names{"head",      "torso",     "right arm", "right hand", "right leg",
                                              "right foot", "left arm", "left hand", "left leg",   "left foot"};
  return names;
}

// Standing figure facing +z with y up, ten parts labeled in the order of
// humanoid_label_names(). Its right side is at negative x.
inline ShapeSpec humanoid_preset(std::uint64_t seed = 0, double cell_size = 0.1) {
  ShapeSpec s;
  s.seed = seed;
  s.cell_size = cell_size;
  auto sphere = [](Label l, Vec3 c, double r) {
    Part p;
    p.primitive = Primitive::kSphere;
    p.label = l;
    p.pose.translation = c;
    p.radius = r;
    return p;
  };
  auto capsule = [](Label l, Vec3 a, Vec3 b, double r) {
    Part p;
    p.primitive = Primitive::kCapsule;
    p.label = l;
    p.pose.translation = 0.5 * (a + b);
    const Vec3 d = b - a;
    p.half_length = 0.5 * norm(d);
    // Rotate local +y onto d: about z by -atan2(dx, dy) after tilting about x.
    const double k = 180.0 / std::numbers::pi;
    p.pose.rotation_deg = {std::atan2(d.z, std::hypot(d.x, d.y)) * k, 0.0, -std::atan2(d.x, d.y) * k};
    p.radius = r;
    return p;
  };
  auto box = [](Label l, Vec3 c, Vec3 e) {
    Part p;
    p.primitive = Primitive::kBox;
    p.label = l;
    p.pose.translation = c;
    p.half_extents = e;
    return p;
  };
  const double arm = 50.0 * std::numbers::pi / 180.0;
  const Vec3 rdir{-std::sin(arm), -std::cos(arm), 0.0};
  const Vec3 ldir{std::sin(arm), -std::cos(arm), 0.0};
  const Vec3 rshoulder{-0.17, 1.44, 0.0}, lshoulder{0.17, 1.44, 0.0};
  s.parts = {
      capsule(2, {0.0, 0.90, 0.0}, {0.0, 1.38, 0.0}, 0.20),
      sphere(1, {0.0, 1.70, 0.0}, 0.16),
      capsule(3, rshoulder, rshoulder + 0.46 * rdir, 0.085),
      sphere(4, rshoulder + 0.58 * rdir, 0.095),
      capsule(5, {-0.12, 0.86, 0.0}, {-0.13, 0.16, 0.0}, 0.10),
      box(6, {-0.13, 0.06, 0.07}, {0.08, 0.06, 0.15}),
      capsule(7, lshoulder, lshoulder + 0.46 * ldir, 0.085),
      sphere(8, lshoulder + 0.58 * ldir, 0.095),
      capsule(9, {0.12, 0.86, 0.0}, {0.13, 0.16, 0.0}, 0.10),
      box(10, {0.13, 0.06, 0.07}, {0.08, 0.06, 0.15}),
  };
  return s;
}

// Two equal spheres, labels 1 and 2, `gap` apart along x.
inline ShapeSpec two_spheres_preset(std::uint64_t seed = 0, double radius = 0.5, double gap = 0.5,
                                    double cell_size = 0.1) {
  ShapeSpec s;
  s.seed = seed;
  s.cell_size = cell_size;
  Part a;
  a.primitive = Primitive::kSphere;
  a.label = 1;
  a.radius = radius;
  Part b = a;
  b.label = 2;
  b.pose.translation = {2.0 * radius + gap, 0.0, 0.0};
  s.parts = {a, b};
  return s;
}

inline const char* primitive_name(Primitive p) {
  switch (p) {
    case Primitive::kSphere: return "sphere";
    case Primitive::kCapsule: return "capsule";
    case Primitive::kBox: return "box";
  }
  return "?";
}

inline nlohmann::json to_json(const ShapeSpec& s) {
  auto v3 = [](Vec3 v) { return nlohmann::json::array({v.x, v.y, v.z}); };
  nlohmann::json parts = nlohmann::json::array();
  for (const Part& p : s.parts) {
    parts.push_back({{"primitive", primitive_name(p.primitive)},
                     {"label", p.label},
                     {"translation", v3(p.pose.translation)},
                     {"rotation_deg", v3(p.pose.rotation_deg)},
                     {"radius", p.radius},
                     {"half_length", p.half_length},
                     {"half_extents", v3(p.half_extents)}});
  }
  return {{"seed", s.seed}, {"cell_size", s.cell_size}, {"parts", parts}};
}

inline ShapeSpec shape_spec_from_json(const nlohmann::json& j) {
  try {
    auto v3 = [](const nlohmann::json& a) {
      if (!a.is_array() || a.size() != 3) throw ValidationError("ShapeSpec: expected a 3-vector");
      return Vec3{a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
    };
    ShapeSpec s;
    s.seed = j.value("seed", std::uint64_t{0});
    s.cell_size = j.value("cell_size", 0.05);
    for (const auto& jp : j.at("parts")) {
      Part p;
      const auto prim = jp.at("primitive").get<std::string>();
      if (prim == "sphere") {
        p.primitive = Primitive::kSphere;
      } else if (prim == "capsule") {
        p.primitive = Primitive::kCapsule;
      } else if (prim == "box") {
        p.primitive = Primitive::kBox;
      } else {
        throw ValidationError("ShapeSpec: unknown primitive '" + prim + "'");
      }
      p.label = jp.at("label").get<Label>();
      if (jp.contains("translation")) p.pose.translation = v3(jp["translation"]);
      if (jp.contains("rotation_deg")) p.pose.rotation_deg = v3(jp["rotation_deg"]);
      p.radius = jp.value("radius", p.radius);
      p.half_length = jp.value("half_length", p.half_length);
      if (jp.contains("half_extents")) p.half_extents = v3(jp["half_extents"]);
      s.parts.push_back(p);
    }
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("ShapeSpec: ") + e.what());
  }
}

}  // namespace viewseg
