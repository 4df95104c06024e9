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

// Checkpoint files: JSON with every double stored as the hex string of its
// IEEE-754 bits, so a save/load round trip is exact.

#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "viewseg/common.hpp"
#include "viewseg/config.hpp"
#include "viewseg/crf.hpp"
#include "viewseg/mesh_io.hpp"
#include "viewseg/optim.hpp"
#include "viewseg/pipeline.hpp"
#include "viewseg/viewnet.hpp"

namespace viewseg {

inline constexpr int kCheckpointVersion = 1;
inline constexpr int kCrfSectionVersion = 1;

struct Checkpoint {
  RunConfig config;
  TrainState state;
};

inline std::string encode_double(double x) { return hex64(std::bit_cast<std::uint64_t>(x)); }

inline double decode_double(const std::string& s) {
  std::uint64_t bits = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), bits, 16);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.size() != 16) {
    throw ParseError("checkpoint: bad encoded double '" + s + "'");
  }
  return std::bit_cast<double>(bits);
}

namespace detail {

inline nlohmann::json encode_span(std::span<const double> xs) {
  auto a = nlohmann::json::array();
  for (double x : xs) a.push_back(encode_double(x));
  return a;
}

inline void decode_into(const nlohmann::json& a, std::span<double> out, const std::string& what) {
  if (!a.is_array() || a.size() != out.size()) {
    throw ValidationError("checkpoint: block '" + what + "' has " + std::to_string(a.is_array() ? a.size() : 0) +
                          " values, expected " + std::to_string(out.size()));
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = decode_double(a[i].get<std::string>());
}

template <class Params>
nlohmann::json encode_params(const Params& p) {
  nlohmann::json j = nlohmann::json::object();
  for_each_block(p, [&](std::string_view name, std::span<const double> block) { j[std::string(name)] = encode_span(block); });
  return j;
}

template <class Params>
void decode_params(const nlohmann::json& j, Params& p) {
  for_each_block(p, [&](std::string_view name, std::span<double> block) {
    const std::string key(name);
    if (!j.contains(key)) throw ValidationError("checkpoint: missing parameter block '" + key + "'");
    decode_into(j[key], block, key);
  });
}

inline nlohmann::json encode_adam(const AdamState& s) {
  auto m = nlohmann::json::array(), v = nlohmann::json::array();
  for (const auto& b : s.m) m.push_back(encode_span(b));
  for (const auto& b : s.v) v.push_back(encode_span(b));
  return {{"step", s.step}, {"m", m}, {"v", v}};
}

inline AdamState decode_adam(const nlohmann::json& j) {
  AdamState s;
  s.step = j.at("step").get<std::int64_t>();
  auto blocks = [](const nlohmann::json& a, std::vector<std::vector<double>>& out) {
    for (const auto& b : a) {
      out.emplace_back(b.size());
      decode_into(b, out.back(), "optimizer");
    }
  };
  blocks(j.at("m"), s.m);
  blocks(j.at("v"), s.v);
  if (s.m.size() != s.v.size()) throw ValidationError("checkpoint: optimizer moment block counts differ");
  return s;
}

inline nlohmann::json encode_optional(const std::optional<double>& x) {
  return x ? nlohmann::json(encode_double(*x)) : nlohmann::json();
}

inline std::optional<double> decode_optional(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return decode_double(j.get<std::string>());
}

}  // namespace detail

inline nlohmann::json to_json(const Checkpoint& c) {
  const CrfParams& crf = c.state.crf;
  nlohmann::json crf_json{{"version", kCrfSectionVersion},
                          {"trained", c.state.crf_trained},
                          {"L", crf.num_labels},
                          {"params", detail::encode_params(crf)},
                          {"iterations", crf.iterations},
                          {"far_sign", crf.far_sign},
                          {"cutoff", detail::encode_optional(crf.cutoff)},
                          {"normalize_kernels", crf.normalize_kernels},
                          {"optimizer", detail::encode_adam(c.state.crf_adam)}};
  return {{"format", "viewseg-checkpoint"},
          {"version", kCheckpointVersion},
          {"code_version", std::string(kCodeVersion)},
          {"config", to_json(c.config)},
          {"config_hash", config_hash(c.config)},
          {"architecture", to_json(c.state.params.arch)},
          {"params", detail::encode_params(c.state.params)},
          {"optimizer", detail::encode_adam(c.state.adam)},
          {"step", c.state.step},
          {"epoch", c.state.epoch},
          {"joint_epoch", c.state.joint_epoch},
          {"crf", crf_json}};
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", std::string()) != "viewseg-checkpoint") throw ValidationError("checkpoint: not a checkpoint file");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw ValidationError("checkpoint: unsupported version " + std::to_string(version));
    }
    Checkpoint c;
    c.config = run_config_from_json(j.at("config"));
    const Architecture arch = architecture_from_json(j.at("architecture"));
    arch.validate();
    if (arch != c.config.resolved_architecture()) {
      throw ValidationError("checkpoint: stored architecture does not match its configuration");
    }
    c.state.params = zeros_like(arch);
    detail::decode_params(j.at("params"), c.state.params);
    c.state.adam = detail::decode_adam(j.at("optimizer"));
    c.state.step = j.at("step").get<std::int64_t>();
    c.state.epoch = j.at("epoch").get<int>();
    c.state.joint_epoch = j.value("joint_epoch", 0);

    const auto& crf = j.at("crf");
    const int crf_version = crf.at("version").get<int>();
    if (crf_version != kCrfSectionVersion) {
      throw ValidationError("checkpoint: unsupported CRF section version " + std::to_string(crf_version));
    }
    const int L = crf.at("L").get<int>();
    if (L != c.config.num_labels) throw ValidationError("checkpoint: CRF label count does not match L");
    c.state.crf = make_crf_params(L, Bandwidths{});
    detail::decode_params(crf.at("params"), c.state.crf);
    c.state.crf.iterations = crf.at("iterations").get<int>();
    c.state.crf.far_sign = crf.at("far_sign").get<int>();
    c.state.crf.cutoff = detail::decode_optional(crf.at("cutoff"));
    c.state.crf.normalize_kernels = crf.at("normalize_kernels").get<bool>();
    c.state.crf.validate();
    c.state.crf_adam = detail::decode_adam(crf.at("optimizer"));
    c.state.crf_trained = crf.at("trained").get<bool>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  detail::write_file(path, to_json(c).dump(1) + "\n");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string text = detail::read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace viewseg
