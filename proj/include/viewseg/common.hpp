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

// Small value types shared by every module: 3-vectors, dense row-major
// matrices, per-vertex probability fields and the error hierarchy.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace viewseg {

// Labels are 1-based everywhere in the public API: {1..L}.
using Label = int;
using VertexIndex = std::uint32_t;

inline constexpr VertexIndex kNoVertex = std::numeric_limits<VertexIndex>::max();
inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kProbFloor = 1e-12;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input violates a documented invariant or precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// File content does not parse under its declared format.
class ParseError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Architecture, checkpoint or run configuration disagree with each other.
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A NaN or infinity showed up where only finite values are legal.
class NumericError : public Error {
 public:
  using Error::Error;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr double& operator[](std::size_t i) { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr double operator[](std::size_t i) const { return i == 0 ? x : (i == 1 ? y : z); }

  friend constexpr Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend constexpr Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend constexpr Vec3 operator-(Vec3 a) { return {-a.x, -a.y, -a.z}; }
  friend constexpr Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend constexpr Vec3 operator*(Vec3 a, double s) { return s * a; }
  friend constexpr Vec3 operator/(Vec3 a, double s) { return {a.x / s, a.y / s, a.z / s}; }
  constexpr Vec3& operator+=(Vec3 b) {
    x += b.x;
    y += b.y;
    z += b.z;
    return *this;
  }
  friend constexpr bool operator==(Vec3 a, Vec3 b) = default;
};

constexpr double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }
inline double distance(Vec3 a, Vec3 b) { return norm(a - b); }
inline Vec3 normalized(Vec3 a) {
  const double n = norm(a);
  return n > 0.0 ? a / n : Vec3{};
}

// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

// Per-vertex distribution over L classes. Column l holds label l + 1.
struct ProbabilityField {
  Matrix values;

  ProbabilityField() = default;
  ProbabilityField(std::size_t vertex_count, std::size_t num_labels, double fill = 0.0)
      : values(vertex_count, num_labels, fill) {}
  explicit ProbabilityField(Matrix m) : values(std::move(m)) {}

  std::size_t vertex_count() const { return values.rows; }
  std::size_t num_labels() const { return values.cols; }
  std::span<double> row(std::size_t v) { return values.row(v); }
  std::span<const double> row(std::size_t v) const { return values.row(v); }
  double operator()(std::size_t v, std::size_t l) const { return values(v, l); }
  double& operator()(std::size_t v, std::size_t l) { return values(v, l); }

  friend bool operator==(const ProbabilityField&, const ProbabilityField&) = default;
};

// Largest deviation of any row sum from 1; negative entries count as a deviation too.
inline double max_row_sum_error(const ProbabilityField& p) {
  double worst = 0.0;
  for (std::size_t v = 0; v < p.vertex_count(); ++v) {
    double s = 0.0;
    for (double x : p.row(v)) {
      if (x < 0.0 || !std::isfinite(x)) return kInf;
      s += x;
    }
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

// Stable softmax of one row in place.
inline void softmax_inplace(std::span<double> z) {
  if (z.empty()) return;
  const double zmax = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double& x : z) {
    x = std::exp(x - zmax);
    s += x;
  }
  for (double& x : z) x /= s;
}

// Per-row argmax, ties toward the lowest label. Returns 1-based labels.
inline std::vector<Label> map_labeling(const ProbabilityField& p) {
  std::vector<Label> out(p.vertex_count());
  for (std::size_t v = 0; v < p.vertex_count(); ++v) {
    auto r = p.row(v);
    std::size_t best = 0;
    for (std::size_t l = 1; l < r.size(); ++l) {
      if (r[l] > r[best]) best = l;
    }
    out[v] = static_cast<Label>(best + 1);
  }
  return out;
}

inline void check_labels(std::span<const Label> labels, int num_labels, const char* what) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 1 || labels[i] > num_labels) {
      throw ValidationError(std::string(what) + ": label " + std::to_string(labels[i]) +
                            " at index " + std::to_string(i) + " outside 1.." +
                            std::to_string(num_labels));
    }
  }
}

}  // namespace viewseg
