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

// PLY (ASCII and binary little-endian) and OBJ reading and writing.
//
// PLY: vertex properties x, y, z (any scalar type) and an optional integer
// "label"; faces as a list property. Polygons are fan-triangulated.
// OBJ: only v and f records; labels come from a JSON sidecar
// {"labels": [...]} named <stem>.labels.json next to the mesh.

#pragma once

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "viewseg/common.hpp"
#include "viewseg/mesh.hpp"

namespace viewseg {

enum class MeshFormat { kPly, kObj };

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(Rgb, Rgb) = default;
};

struct PlyWriteOptions {
  bool binary = false;
  bool write_labels = true;
  std::vector<Rgb> colors;  // per-vertex; empty means no color properties
};

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

enum class PlyType { kI8, kU8, kI16, kU16, kI32, kU32, kF32, kF64 };

inline std::optional<PlyType> parse_ply_type(std::string_view s) {
  if (s == "char" || s == "int8") return PlyType::kI8;
  if (s == "uchar" || s == "uint8") return PlyType::kU8;
  if (s == "short" || s == "int16") return PlyType::kI16;
  if (s == "ushort" || s == "uint16") return PlyType::kU16;
  if (s == "int" || s == "int32") return PlyType::kI32;
  if (s == "uint" || s == "uint32") return PlyType::kU32;
  if (s == "float" || s == "float32") return PlyType::kF32;
  if (s == "double" || s == "float64") return PlyType::kF64;
  return std::nullopt;
}

inline std::size_t ply_type_size(PlyType t) {
  switch (t) {
    case PlyType::kI8:
    case PlyType::kU8: return 1;
    case PlyType::kI16:
    case PlyType::kU16: return 2;
    case PlyType::kI32:
    case PlyType::kU32:
    case PlyType::kF32: return 4;
    case PlyType::kF64: return 8;
  }
  return 0;
}

inline bool ply_type_is_integer(PlyType t) { return t != PlyType::kF32 && t != PlyType::kF64; }

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::kF32;
  bool is_list = false;
  PlyType count_type = PlyType::kU8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

// Sequential reader over either ASCII tokens or little-endian binary values.
class PlyCursor {
 public:
  PlyCursor(const std::string& data, std::size_t pos, bool binary, std::size_t line)
      : data_(data), pos_(pos), binary_(binary), line_(line) {}

  double read(PlyType t) { return binary_ ? read_binary(t) : read_ascii(t); }

  std::string where() const {
    return binary_ ? "byte offset " + std::to_string(pos_) : "line " + std::to_string(line_);
  }

 private:
  template <class T>
  T load() {
    if (pos_ + sizeof(T) > data_.size()) throw ParseError("PLY: unexpected end of data at " + where());
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  double read_binary(PlyType t) {
    static_assert(std::endian::native == std::endian::little, "binary PLY reader assumes a little-endian host");
    switch (t) {
      case PlyType::kI8: return load<std::int8_t>();
      case PlyType::kU8: return load<std::uint8_t>();
      case PlyType::kI16: return load<std::int16_t>();
      case PlyType::kU16: return load<std::uint16_t>();
      case PlyType::kI32: return load<std::int32_t>();
      case PlyType::kU32: return load<std::uint32_t>();
      case PlyType::kF32: return load<float>();
      case PlyType::kF64: return load<double>();
    }
    return 0.0;
  }

  double read_ascii(PlyType t) {
    while (pos_ < data_.size() && std::isspace(static_cast<unsigned char>(data_[pos_]))) {
      if (data_[pos_] == '\n') ++line_;
      ++pos_;
    }
    if (pos_ >= data_.size()) throw ParseError("PLY: unexpected end of data at " + where());
    std::size_t end = pos_;
    while (end < data_.size() && !std::isspace(static_cast<unsigned char>(data_[end]))) ++end;
    const char* first = data_.data() + pos_;
    const char* last = data_.data() + end;
    double value = 0.0;
    if (ply_type_is_integer(t)) {
      long long iv = 0;
      auto [p, ec] = std::from_chars(first, last, iv);
      if (ec != std::errc() || p != last) {
        throw ParseError("PLY: expected integer, got '" + std::string(first, last) + "' at " + where());
      }
      value = static_cast<double>(iv);
    } else {
      auto [p, ec] = std::from_chars(first, last, value);
      if (ec != std::errc() || p != last) {
        throw ParseError("PLY: expected number, got '" + std::string(first, last) + "' at " + where());
      }
    }
    pos_ = end;
    return value;
  }

  const std::string& data_;
  std::size_t pos_;
  bool binary_;
  std::size_t line_;
};

inline std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream ss{std::string(line)};
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

inline void fan_triangulate(const std::vector<long long>& poly, std::size_t vertex_count, std::vector<Face>& faces,
                            const std::string& where) {
  if (poly.size() < 3) throw ParseError("face with fewer than 3 vertices at " + where);
  for (long long idx : poly) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= vertex_count) {
      throw ValidationError("face references vertex " + std::to_string(idx) + " but the mesh has " +
                            std::to_string(vertex_count) + " vertices (" + where + ")");
    }
  }
  for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
    faces.push_back({static_cast<VertexIndex>(poly[0]), static_cast<VertexIndex>(poly[k]),
                     static_cast<VertexIndex>(poly[k + 1])});
  }
}

inline std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

}  // namespace detail

inline Mesh parse_ply(const std::string& data) {
  using namespace detail;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&]() -> std::string {
    if (pos >= data.size()) throw ParseError("PLY: header ends before end_header (line " + std::to_string(line_no) + ")");
    std::size_t end = data.find('\n', pos);
    if (end == std::string::npos) end = data.size();
    std::string line = data.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = end + 1;
    ++line_no;
    return line;
  };

  if (next_line() != "ply") throw ParseError("PLY: missing 'ply' magic on line 1");
  bool binary = false;
  bool have_format = false;
  std::vector<PlyElement> elements;
  for (;;) {
    const std::string line = next_line();
    const auto tok = split_ws(line);
    if (tok.empty() || tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "end_header") break;
    const std::string where = "line " + std::to_string(line_no);
    if (tok[0] == "format") {
      if (tok.size() < 2) throw ParseError("PLY: malformed format on " + where);
      if (tok[1] == "ascii") {
        binary = false;
      } else if (tok[1] == "binary_little_endian") {
        binary = true;
      } else {
        throw ParseError("PLY: unsupported format '" + tok[1] + "' on " + where);
      }
      have_format = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) throw ParseError("PLY: malformed element on " + where);
      PlyElement e;
      e.name = tok[1];
      std::size_t count = 0;
      auto [p, ec] = std::from_chars(tok[2].data(), tok[2].data() + tok[2].size(), count);
      if (ec != std::errc() || p != tok[2].data() + tok[2].size()) throw ParseError("PLY: bad element count on " + where);
      e.count = count;
      elements.push_back(std::move(e));
    } else if (tok[0] == "property") {
      if (elements.empty()) throw ParseError("PLY: property before any element on " + where);
      PlyProperty prop;
      if (tok.size() == 5 && tok[1] == "list") {
        auto ct = parse_ply_type(tok[2]);
        auto it = parse_ply_type(tok[3]);
        if (!ct || !it) throw ParseError("PLY: unknown list type on " + where);
        prop.is_list = true;
        prop.count_type = *ct;
        prop.type = *it;
        prop.name = tok[4];
      } else if (tok.size() == 3) {
        auto t = parse_ply_type(tok[1]);
        if (!t) throw ParseError("PLY: unknown property type '" + tok[1] + "' on " + where);
        prop.type = *t;
        prop.name = tok[2];
      } else {
        throw ParseError("PLY: malformed property on " + where);
      }
      elements.back().properties.push_back(std::move(prop));
    } else {
      throw ParseError("PLY: unexpected header keyword '" + tok[0] + "' on " + where);
    }
  }
  if (!have_format) throw ParseError("PLY: missing format line");

  Mesh mesh;
  bool have_vertices = false;
  PlyCursor cur(data, pos, binary, line_no + 1);
  for (const PlyElement& e : elements) {
    if (e.name == "vertex") {
      int ix = -1, iy = -1, iz = -1, il = -1;
      for (std::size_t k = 0; k < e.properties.size(); ++k) {
        const auto& p = e.properties[k];
        if (p.is_list) continue;
        if (p.name == "x") ix = static_cast<int>(k);
        if (p.name == "y") iy = static_cast<int>(k);
        if (p.name == "z") iz = static_cast<int>(k);
        if (p.name == "label") {
          if (!ply_type_is_integer(p.type)) throw ParseError("PLY: vertex property 'label' must be an integer type");
          il = static_cast<int>(k);
        }
      }
      if (ix < 0 || iy < 0 || iz < 0) throw ParseError("PLY: vertex element lacks x/y/z properties");
      mesh.vertices.resize(e.count);
      if (il >= 0) mesh.labels.resize(e.count);
      std::vector<double> vals(e.properties.size());
      for (std::size_t i = 0; i < e.count; ++i) {
        for (std::size_t k = 0; k < e.properties.size(); ++k) {
          const auto& p = e.properties[k];
          if (p.is_list) {
            const auto n = static_cast<std::size_t>(cur.read(p.count_type));
            for (std::size_t j = 0; j < n; ++j) cur.read(p.type);
          } else {
            vals[k] = cur.read(p.type);
          }
        }
        mesh.vertices[i] = {vals[ix], vals[iy], vals[iz]};
        if (il >= 0) mesh.labels[i] = static_cast<Label>(vals[il]);
      }
      have_vertices = true;
    } else if (e.name == "face") {
      if (!have_vertices) throw ParseError("PLY: face element precedes vertex element");
      int il = -1;
      for (std::size_t k = 0; k < e.properties.size(); ++k) {
        const auto& p = e.properties[k];
        if (p.is_list && (p.name == "vertex_indices" || p.name == "vertex_index")) il = static_cast<int>(k);
      }
      if (il < 0) throw ParseError("PLY: face element lacks a vertex_indices list");
      mesh.faces.reserve(e.count);
      std::vector<long long> poly;
      for (std::size_t i = 0; i < e.count; ++i) {
        const std::string where = cur.where();
        for (std::size_t k = 0; k < e.properties.size(); ++k) {
          const auto& p = e.properties[k];
          if (p.is_list) {
            const auto n = static_cast<std::size_t>(cur.read(p.count_type));
            if (static_cast<int>(k) == il) poly.assign(n, 0);
            for (std::size_t j = 0; j < n; ++j) {
              const double v = cur.read(p.type);
              if (static_cast<int>(k) == il) poly[j] = static_cast<long long>(v);
            }
          } else {
            cur.read(p.type);
          }
        }
        fan_triangulate(poly, mesh.vertex_count(), mesh.faces, "face " + std::to_string(i) + ", " + where);
      }
    } else {
      for (std::size_t i = 0; i < e.count; ++i) {
        for (const auto& p : e.properties) {
          if (p.is_list) {
            const auto n = static_cast<std::size_t>(cur.read(p.count_type));
            for (std::size_t j = 0; j < n; ++j) cur.read(p.type);
          } else {
            cur.read(p.type);
          }
        }
      }
    }
  }
  if (!have_vertices) throw ParseError("PLY: no vertex element");
  validate(mesh);
  return mesh;
}

inline std::vector<Label> read_label_sidecar(const std::filesystem::path& path, std::size_t expected) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("label sidecar '" + path.string() + "': " + e.what());
  }
  if (!j.contains("labels") || !j["labels"].is_array()) {
    throw ParseError("label sidecar '" + path.string() + "' lacks a \"labels\" array");
  }
  auto labels = j["labels"].get<std::vector<Label>>();
  if (labels.size() != expected) {
    throw ValidationError("label sidecar '" + path.string() + "' has " + std::to_string(labels.size()) +
                          " entries, mesh has " + std::to_string(expected) + " vertices");
  }
  return labels;
}

inline std::filesystem::path label_sidecar_path(const std::filesystem::path& mesh_path) {
  auto p = mesh_path;
  p.replace_extension(".labels.json");
  return p;
}

inline Mesh parse_obj(const std::string& data) {
  Mesh mesh;
  std::vector<std::vector<long long>> polys;
  std::vector<std::size_t> poly_lines;
  std::istringstream in(data);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tok = detail::split_ws(line);
    if (tok.empty() || tok[0][0] == '#') continue;
    const std::string where = "line " + std::to_string(line_no);
    if (tok[0] == "v") {
      if (tok.size() < 4) throw ParseError("OBJ: vertex needs 3 coordinates on " + where);
      Vec3 p;
      for (int k = 0; k < 3; ++k) {
        const auto& s = tok[k + 1];
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), p[k]);
        if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError("OBJ: bad coordinate '" + s + "' on " + where);
      }
      mesh.vertices.push_back(p);
    } else if (tok[0] == "f") {
      std::vector<long long> poly;
      for (std::size_t k = 1; k < tok.size(); ++k) {
        const std::string s = tok[k].substr(0, tok[k].find('/'));
        long long idx = 0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), idx);
        if (ec != std::errc() || ptr != s.data() + s.size() || idx == 0) {
          throw ParseError("OBJ: bad face index '" + tok[k] + "' on " + where);
        }
        // Negative indices are relative to the vertices read so far.
        poly.push_back(idx > 0 ? idx - 1 : static_cast<long long>(mesh.vertices.size()) + idx);
      }
      polys.push_back(std::move(poly));
      poly_lines.push_back(line_no);
    }
  }
  for (std::size_t i = 0; i < polys.size(); ++i) {
    detail::fan_triangulate(polys[i], mesh.vertex_count(), mesh.faces, "line " + std::to_string(poly_lines[i]));
  }
  validate(mesh);
  return mesh;
}

inline Mesh load_mesh(const std::filesystem::path& path, MeshFormat format) {
  const std::string data = detail::read_file(path);
  try {
    if (format == MeshFormat::kPly) return parse_ply(data);
    Mesh mesh = parse_obj(data);
    const auto sidecar = label_sidecar_path(path);
    if (std::filesystem::exists(sidecar)) {
      mesh.labels = read_label_sidecar(sidecar, mesh.vertex_count());
      validate(mesh);
    }
    return mesh;
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

// Format chosen from the extension (.ply or .obj).
inline Mesh load_mesh(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".ply" || ext == ".PLY") return load_mesh(path, MeshFormat::kPly);
  if (ext == ".obj" || ext == ".OBJ") return load_mesh(path, MeshFormat::kObj);
  throw ValidationError("unknown mesh extension '" + ext + "' for '" + path.string() + "'");
}

inline std::string format_ply(const Mesh& mesh, const PlyWriteOptions& opts = {}) {
  const bool labels = opts.write_labels && mesh.has_labels();
  const bool colors = !opts.colors.empty();
  if (colors && opts.colors.size() != mesh.vertex_count()) throw ValidationError("color count does not match vertex count");
  std::string out = "ply\n";
  out += opts.binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n";
  out += "element vertex " + std::to_string(mesh.vertex_count()) + "\n";
  out += "property double x\nproperty double y\nproperty double z\n";
  if (labels) out += "property int label\n";
  if (colors) out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out += "element face " + std::to_string(mesh.faces.size()) + "\n";
  out += "property list uchar int vertex_indices\nend_header\n";
  auto put = [&out](const auto& v) {
    char buf[sizeof(v)];
    std::memcpy(buf, &v, sizeof(v));
    out.append(buf, sizeof(v));
  };
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
    const Vec3 p = mesh.vertices[i];
    if (opts.binary) {
      put(p.x);
      put(p.y);
      put(p.z);
      if (labels) put(static_cast<std::int32_t>(mesh.labels[i]));
      if (colors) {
        put(opts.colors[i].r);
        put(opts.colors[i].g);
        put(opts.colors[i].b);
      }
    } else {
      out += detail::format_double(p.x) + " " + detail::format_double(p.y) + " " + detail::format_double(p.z);
      if (labels) out += " " + std::to_string(mesh.labels[i]);
      if (colors) {
        out += " " + std::to_string(opts.colors[i].r) + " " + std::to_string(opts.colors[i].g) + " " +
               std::to_string(opts.colors[i].b);
      }
      out += "\n";
    }
  }
  for (const Face& f : mesh.faces) {
    if (opts.binary) {
      put(static_cast<std::uint8_t>(3));
      for (VertexIndex i : f) put(static_cast<std::int32_t>(i));
    } else {
      out += "3 " + std::to_string(f[0]) + " " + std::to_string(f[1]) + " " + std::to_string(f[2]) + "\n";
    }
  }
  return out;
}

inline void save_ply(const Mesh& mesh, const std::filesystem::path& path, const PlyWriteOptions& opts = {}) {
  detail::write_file(path, format_ply(mesh, opts));
}

// Writes v/f records and, when the mesh is labeled, the label sidecar.
inline void save_obj(const Mesh& mesh, const std::filesystem::path& path) {
  std::string out;
  for (const Vec3& p : mesh.vertices) {
    out += "v " + detail::format_double(p.x) + " " + detail::format_double(p.y) + " " + detail::format_double(p.z) + "\n";
  }
  for (const Face& f : mesh.faces) {
    out += "f " + std::to_string(f[0] + 1) + " " + std::to_string(f[1] + 1) + " " + std::to_string(f[2] + 1) + "\n";
  }
  detail::write_file(path, out);
  if (mesh.has_labels()) {
    detail::write_file(label_sidecar_path(path), nlohmann::json{{"labels", mesh.labels}}.dump() + "\n");
  }
}

inline void save_mesh(const Mesh& mesh, const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".obj" || ext == ".OBJ") {
    save_obj(mesh, path);
  } else {
    save_ply(mesh, path);
  }
}

}  // namespace viewseg
