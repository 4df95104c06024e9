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

// Run configuration shared by the CLI, training and inference.

#pragma once

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "viewseg/common.hpp"
#include "viewseg/decompose.hpp"
#include "viewseg/synth.hpp"
#include "viewseg/viewnet.hpp"

#ifndef VIEWSEG_VERSION
#define VIEWSEG_VERSION "0.1.0"
#endif

namespace viewseg {

inline constexpr std::string_view kCodeVersion = VIEWSEG_VERSION;

struct CrfConfig {
  int iterations = 5;
  std::optional<double> sigma_near;  // absolute; per-mesh default when unset
  std::optional<double> sigma_far;
  std::optional<double> sigma_feat;
  int far_sign = -1;
  std::optional<double> cutoff;
  bool normalize_kernels = true;
  int train_steps = 150;
  double lr = 5e-2;
  int max_train_shapes = 4;  // dense kernels are N x N each

  friend bool operator==(const CrfConfig&, const CrfConfig&) = default;
};

struct RunConfig {
  int num_views = 10;  // M
  int width = 128;     // U
  int height = 128;    // V
  Vec3 ring_axis{0.0, 1.0, 0.0};
  int radius = 2;
  std::optional<int> gaussians;              // J for every IC layer, overriding the architecture
  std::optional<Architecture> architecture;  // default_architecture(L) when unset
  double lr = 1e-3;
  int epochs = 30;
  int joint_epochs = 0;  // end-to-end fine-tuning through aggregation after both stages
  CrfConfig crf;
  std::uint64_t seed = 0;
  int num_labels = 10;  // L
  std::vector<std::string> label_names = humanoid_label_names();
  int jobs = 1;

  Architecture resolved_architecture() const {
    Architecture a = architecture.value_or(default_architecture(num_labels));
    if (!architecture) a.radius = radius;
    if (gaussians) {
      for (IcSpec& s : a.ic) s.gaussians = *gaussians;
    }
    return a;
  }

  DecomposeOptions decompose_options() const {
    DecomposeOptions o;
    o.num_views = num_views;
    o.width = width;
    o.height = height;
    o.ring_axis = ring_axis;
    return o;
  }

  void validate() const {
    auto positive = [](int v, const char* name) {
      if (v < 1) throw ConfigError(std::string("config: ") + name + " must be >= 1");
    };
    positive(num_views, "M");
    positive(width, "U");
    positive(height, "V");
    if (width < 2 || height < 2) throw ConfigError("config: U and V must be >= 2");
    positive(radius, "radius");
    positive(num_labels, "L");
    positive(jobs, "jobs");
    positive(crf.iterations, "crf.iterations");
    positive(crf.max_train_shapes, "crf.max_train_shapes");
    if (gaussians) positive(*gaussians, "gaussians");
    if (epochs < 0 || joint_epochs < 0 || crf.train_steps < 0) throw ConfigError("config: epoch/step counts must be >= 0");
    if (!(lr > 0.0) || !(crf.lr > 0.0)) throw ConfigError("config: learning rates must be > 0");
    if (crf.far_sign != -1 && crf.far_sign != 1) throw ConfigError("config: crf.far_sign must be -1 or +1");
    if (!label_names.empty() && static_cast<int>(label_names.size()) != num_labels) {
      throw ConfigError("config: " + std::to_string(label_names.size()) + " label names for L = " + std::to_string(num_labels));
    }
    const Architecture a = resolved_architecture();
    a.validate();
    if (a.num_labels() != num_labels) {
      throw ConfigError("config: architecture outputs " + std::to_string(a.num_labels()) + " classes but L = " +
                        std::to_string(num_labels));
    }
  }
};

inline nlohmann::json to_json(const Architecture& a) {
  nlohmann::json ic = nlohmann::json::array(), fc = nlohmann::json::array();
  for (const IcSpec& s : a.ic) ic.push_back({{"in", s.in}, {"out", s.out}, {"gaussians", s.gaussians}, {"relu", s.relu}});
  for (const FcSpec& s : a.fc) fc.push_back({{"in", s.in}, {"out", s.out}, {"relu", s.relu}});
  return {{"radius", a.radius}, {"ic", ic}, {"fc", fc}};
}

inline Architecture architecture_from_json(const nlohmann::json& j) {
  Architecture a;
  a.radius = j.at("radius").get<int>();
  for (const auto& s : j.at("ic")) {
    a.ic.push_back({s.at("in").get<int>(), s.at("out").get<int>(), s.at("gaussians").get<int>(), s.value("relu", true)});
  }
  for (const auto& s : j.at("fc")) a.fc.push_back({s.at("in").get<int>(), s.at("out").get<int>(), s.value("relu", true)});
  return a;
}

namespace detail {
inline nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }
inline std::optional<double> optional_double(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}
}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json crf{{"iterations", c.crf.iterations},
                     {"sigma_near", detail::optional_json(c.crf.sigma_near)},
                     {"sigma_far", detail::optional_json(c.crf.sigma_far)},
                     {"sigma_feat", detail::optional_json(c.crf.sigma_feat)},
                     {"far_sign", c.crf.far_sign},
                     {"cutoff", detail::optional_json(c.crf.cutoff)},
                     {"normalize_kernels", c.crf.normalize_kernels},
                     {"train_steps", c.crf.train_steps},
                     {"lr", c.crf.lr},
                     {"max_train_shapes", c.crf.max_train_shapes}};
  return {{"M", c.num_views},
          {"U", c.width},
          {"V", c.height},
          {"ring_axis", {c.ring_axis.x, c.ring_axis.y, c.ring_axis.z}},
          {"radius", c.radius},
          {"gaussians", c.gaussians ? nlohmann::json(*c.gaussians) : nlohmann::json()},
          {"architecture", c.architecture ? to_json(*c.architecture) : nlohmann::json()},
          {"lr", c.lr},
          {"epochs", c.epochs},
          {"joint_epochs", c.joint_epochs},
          {"crf", crf},
          {"seed", c.seed},
          {"L", c.num_labels},
          {"label_names", c.label_names}};
}

// Missing keys keep their defaults. `jobs` is a runtime setting and is not
// part of the serialized configuration.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  try {
    RunConfig c;
    c.num_views = j.value("M", c.num_views);
    c.width = j.value("U", c.width);
    c.height = j.value("V", c.height);
    if (j.contains("ring_axis")) {
      const auto& a = j["ring_axis"];
      c.ring_axis = {a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()};
    }
    c.radius = j.value("radius", c.radius);
    if (j.contains("gaussians") && !j["gaussians"].is_null()) c.gaussians = j["gaussians"].get<int>();
    if (j.contains("architecture") && !j["architecture"].is_null()) c.architecture = architecture_from_json(j["architecture"]);
    c.lr = j.value("lr", c.lr);
    c.epochs = j.value("epochs", c.epochs);
    c.joint_epochs = j.value("joint_epochs", c.joint_epochs);
    if (j.contains("crf")) {
      const auto& k = j["crf"];
      c.crf.iterations = k.value("iterations", c.crf.iterations);
      c.crf.sigma_near = detail::optional_double(k, "sigma_near");
      c.crf.sigma_far = detail::optional_double(k, "sigma_far");
      c.crf.sigma_feat = detail::optional_double(k, "sigma_feat");
      c.crf.far_sign = k.value("far_sign", c.crf.far_sign);
      c.crf.cutoff = detail::optional_double(k, "cutoff");
      c.crf.normalize_kernels = k.value("normalize_kernels", c.crf.normalize_kernels);
      c.crf.train_steps = k.value("train_steps", c.crf.train_steps);
      c.crf.lr = k.value("lr", c.crf.lr);
      c.crf.max_train_shapes = k.value("max_train_shapes", c.crf.max_train_shapes);
    }
    c.seed = j.value("seed", c.seed);
    c.num_labels = j.value("L", c.num_labels);
    if (j.contains("label_names")) {
      c.label_names = j["label_names"].get<std::vector<std::string>>();
    } else if (c.num_labels != static_cast<int>(c.label_names.size())) {
      c.label_names.clear();
      for (int l = 1; l <= c.num_labels; ++l) c.label_names.push_back("class " + std::to_string(l));
    }
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

// True when two configurations describe the same model and data pipeline,
// ignoring how long each training stage runs.
inline bool resume_compatible(RunConfig a, RunConfig b) {
  b.epochs = a.epochs;
  b.joint_epochs = a.joint_epochs;
  b.crf.train_steps = a.crf.train_steps;
  b.jobs = a.jobs;
  return to_json(a) == to_json(b);
}

// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Hash of the canonical configuration JSON together with the code version.
inline std::string config_hash(const RunConfig& c) {
  return hex64(fnv1a(to_json(c).dump() + "|" + std::string(kCodeVersion)));
}

}  // namespace viewseg
