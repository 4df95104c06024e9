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

// viewseg command-line tool.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI/CLI.hpp>
#include <nlohmann/json.hpp>

#include "viewseg/checkpoint.hpp"
#include "viewseg/config.hpp"
#include "viewseg/decompose.hpp"
#include "viewseg/mesh_io.hpp"
#include "viewseg/metrics.hpp"
#include "viewseg/pipeline.hpp"
#include "viewseg/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace viewseg;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string out = ".";
};

json read_json(const fs::path& path) {
  const std::string text = detail::read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { detail::write_file(path, j.dump(1) + "\n"); }

RunConfig load_config(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : run_config_from_json(read_json(c.config_path));
  if (c.seed) cfg.seed = *c.seed;
  cfg.jobs = c.jobs;
  cfg.validate();
  return cfg;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

json manifest(const std::string& command, const RunConfig& cfg) {
  return {{"command", command},
          {"code_version", std::string(kCodeVersion)},
          {"config", to_json(cfg)},
          {"config_hash", config_hash(cfg)}};
}

std::string view_stem(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "view_%02d", index);
  return buf;
}

int cmd_decompose(const Common& c, const std::string& mesh_path) {
  const RunConfig cfg = load_config(c);
  const Mesh mesh = load_mesh(mesh_path);
  const fs::path out = c.out;
  ensure_dir(out);
  const auto views = decompose_shape(mesh, cfg.decompose_options());
  json files = json::array();
  for (const View& v : views) {
    const std::string stem = view_stem(v.viewpoint.index);
    Mesh m = v.mesh;
    if (mesh.has_labels()) m.labels = view_labels(v, mesh.labels);
    save_ply(m, out / (stem + ".ply"));
    json grid = json::array();
    for (const GridPos& g : v.grid_pos) grid.push_back({g.row, g.col});
    write_json(out / (stem + ".json"), {{"t", v.correspondence}, {"grid", grid}});
    files.push_back({{"mesh", stem + ".ply"}, {"correspondence", stem + ".json"}, {"vertex_count", v.vertex_count()}});
  }
  json man = manifest("decompose", cfg);
  man["input"] = fs::path(mesh_path).filename().string();
  man["source_vertex_count"] = mesh.vertex_count();
  man["views"] = files;
  man["coverage"] = correspondence_coverage(views, mesh.vertex_count());
  write_json(out / "manifest.json", man);
  return 0;
}

std::vector<fs::path> dataset_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".ply" || ext == ".obj")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ValidationError("no .ply or .obj meshes in " + dir.string());
  return files;
}

int cmd_train(const Common& c, const std::string& dataset, const std::string& resume) {
  RunConfig cfg = load_config(c);
  std::vector<PreparedShape> shapes;
  for (const fs::path& f : dataset_files(dataset)) {
    Mesh m = load_mesh(f);
    if (!m.has_labels()) throw ValidationError(f.string() + ": training meshes need per-vertex labels");
    shapes.push_back(prepare_shape(std::move(m), cfg));
  }
  TrainState state;
  if (!resume.empty()) {
    const Checkpoint ck = load_checkpoint(resume);
    if (!resume_compatible(ck.config, cfg)) {
      throw ConfigError("checkpoint " + resume + " was trained with a different configuration (hash " +
                        config_hash(ck.config) + ", current " + config_hash(cfg) + ")");
    }
    state = ck.state;
    reset_stale_stages(state, cfg);
  } else {
    state = init_train_state(cfg);
  }
  const fs::path out = c.out;
  ensure_dir(out);
  std::ofstream log(out / "train_log.jsonl", resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw IoError("cannot write " + (out / "train_log.jsonl").string());

  // One line per epoch with the mean step loss.
  int epoch = -1;
  std::int64_t last_step = 0;
  double sum = 0.0;
  std::size_t count = 0;
  auto flush = [&](const char* stage) {
    if (count == 0) return;
    log << json{{"stage", stage}, {"epoch", epoch}, {"step", last_step}, {"loss", sum / count}}.dump() << "\n";
    sum = 0.0;
    count = 0;
  };
  auto collector = [&](const char* stage) {
    return [&, stage](const TrainLogEntry& e) {
      if (e.epoch != epoch) flush(stage);
      epoch = e.epoch;
      last_step = e.step;
      sum += e.loss;
      ++count;
    };
  };
  train_viewnet(shapes, state, cfg, collector("viewnet"));
  flush("viewnet");
  train_crf_stage(shapes, state, cfg, collector("crf"));
  flush("crf");
  train_joint_stage(shapes, state, cfg, collector("joint"));
  flush("joint");
  if (!log) throw IoError("failed writing training log");

  save_checkpoint(out / "checkpoint.json", {cfg, state});
  json man = manifest("train", cfg);
  man["dataset"] = json::array();
  for (const fs::path& f : dataset_files(dataset)) man["dataset"].push_back(f.filename().string());
  man["parameter_count"] = parameter_count(state.params);
  man["step"] = state.step;
  write_json(out / "manifest.json", man);
  return 0;
}

RunConfig infer_config(const Common& c, const Checkpoint& ck) {
  if (c.config_path.empty()) {
    RunConfig cfg = ck.config;
    cfg.jobs = c.jobs;
    return cfg;
  }
  const RunConfig cfg = load_config(c);
  if (cfg.num_labels != ck.config.num_labels) {
    throw ConfigError("config has L = " + std::to_string(cfg.num_labels) + " but the checkpoint was trained with L = " +
                      std::to_string(ck.config.num_labels));
  }
  if (!resume_compatible(ck.config, cfg)) throw ConfigError("config does not match the checkpoint's configuration");
  return cfg;
}

int cmd_infer(const Common& c, const std::string& mesh_path, const std::string& checkpoint, bool no_crf) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const RunConfig cfg = infer_config(c, ck);
  Mesh mesh = load_mesh(mesh_path);
  mesh.labels.clear();
  const PreparedShape shape = prepare_shape(std::move(mesh), cfg);
  const Inference inf = infer(shape, ck.state, cfg, !no_crf);
  const ProbabilityField& pdf = inf.pdf();
  const auto entropy = entropy_map(pdf);

  const fs::path out = c.out;
  ensure_dir(out);
  write_json(out / "labels.json", {{"labels", inf.labels}, {"L", cfg.num_labels}});
  json rows = json::array();
  for (std::size_t v = 0; v < pdf.vertex_count(); ++v) {
    const auto r = pdf.row(v);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  write_json(out / "pdf.json", {{"pdf", rows}, {"L", cfg.num_labels}});

  Mesh colored = shape.mesh;
  colored.labels = inf.labels;
  PlyWriteOptions opts;
  for (Label l : inf.labels) opts.colors.push_back(label_color(l));
  save_ply(colored, out / "labels.ply", opts);
  PlyWriteOptions eopts;
  eopts.write_labels = false;
  for (double h : entropy) eopts.colors.push_back(entropy_color(h));
  Mesh plain = shape.mesh;
  plain.labels.clear();
  save_ply(plain, out / "entropy.ply", eopts);

  json man = manifest("infer", cfg);
  man["input"] = fs::path(mesh_path).filename().string();
  man["checkpoint_hash"] = config_hash(ck.config);
  man["crf"] = !no_crf;
  json palette = json::array();
  for (int l = 1; l <= cfg.num_labels; ++l) {
    const Rgb rgb = label_color(l);
    palette.push_back({{"label", l},
                       {"name", cfg.label_names.empty() ? std::to_string(l) : cfg.label_names[l - 1]},
                       {"rgb", {rgb.r, rgb.g, rgb.b}}});
  }
  man["palette"] = palette;
  write_json(out / "manifest.json", man);
  return 0;
}

int cmd_eval(const Common& c, const std::string& pred_path, const std::string& gt_path, const std::string& checkpoint) {
  const json pred_json = read_json(pred_path);
  std::vector<Label> pred;
  int L = 0;
  try {
    pred = pred_json.at("labels").get<std::vector<Label>>();
    L = pred_json.at("L").get<int>();
  } catch (const json::exception& e) {
    throw ParseError(pred_path + ": " + e.what());
  }
  const Mesh gt = load_mesh(gt_path);
  if (!gt.has_labels()) throw ValidationError(gt_path + ": ground-truth mesh has no labels");
  if (pred.size() != gt.vertex_count()) {
    throw ValidationError("prediction has " + std::to_string(pred.size()) + " labels but " + gt_path + " has " +
                          std::to_string(gt.vertex_count()) + " vertices");
  }
  std::optional<Checkpoint> ck;
  if (!checkpoint.empty()) {
    ck = load_checkpoint(checkpoint);
    if (ck->config.num_labels != L) throw ConfigError("prediction L does not match the checkpoint");
    // Refuse predictions produced under a different configuration.
    const fs::path man_path = fs::path(pred_path).parent_path() / "manifest.json";
    if (fs::exists(man_path)) {
      const json man = read_json(man_path);
      const std::string h = man.value("checkpoint_hash", man.value("config_hash", std::string()));
      if (!h.empty() && h != config_hash(ck->config)) {
        throw ConfigError("predictions in " + pred_path + " come from configuration " + h + ", checkpoint has " +
                          config_hash(ck->config));
      }
    }
  }
  const EvalReport r = evaluate(pred, gt.labels, L, &gt);
  json iou = json::array();
  for (const auto& x : r.per_class_iou) iou.push_back(x ? json(*x) : json());
  json report{{"accuracy", r.accuracy},
              {"area_weighted_accuracy", r.area_weighted_accuracy ? json(*r.area_weighted_accuracy) : json()},
              {"mean_iou", r.mean_iou},
              {"per_class_iou", iou},
              {"gt_counts", r.gt_counts},
              {"pred_counts", r.pred_counts},
              {"vertex_count", pred.size()},
              {"L", L}};
  if (ck) {
    report["parameter_count"] = parameter_count(ck->state.params);
    report["config_hash"] = config_hash(ck->config);
  }
  if (!c.config_path.empty() || c.out != ".") {
    ensure_dir(c.out);
    write_json(fs::path(c.out) / "eval.json", report);
  }
  std::cout << report.dump(1) << "\n";
  return 0;
}

int cmd_synth(const Common& c, const std::string& preset, const std::string& spec_path, int count, double noise) {
  const std::uint64_t seed = c.seed.value_or(0);
  if (count < 1) throw ValidationError("--count must be >= 1");
  const fs::path out = c.out;
  ensure_dir(out);
  json shapes = json::array();
  for (int i = 0; i < count; ++i) {
    ShapeSpec spec;
    if (!spec_path.empty()) {
      spec = shape_spec_from_json(read_json(spec_path));
      spec.seed = seed + i;
    } else if (preset == "humanoid") {
      spec = humanoid_preset(seed + i);
    } else if (preset == "two-spheres") {
      spec = two_spheres_preset(seed + i);
    } else {
      throw ValidationError("unknown preset '" + preset + "' (humanoid, two-spheres)");
    }
    const Mesh mesh = perturb(generate(spec), seed + i, noise);
    char name[32];
    std::snprintf(name, sizeof(name), "shape_%03d.ply", i);
    save_ply(mesh, out / name);
    shapes.push_back({{"file", name}, {"seed", seed + i}, {"vertex_count", mesh.vertex_count()}, {"spec", to_json(spec)}});
  }
  write_json(out / "manifest.json", {{"command", "synth"},
                                     {"code_version", std::string(kCodeVersion)},
                                     {"noise", noise},
                                     {"shapes", shapes}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"View-based 3D mesh segmentation"};
  app.set_version_flag("--version", std::string(kCodeVersion));
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "Run configuration (JSON)");
    sub->add_option("--seed", common.seed, "Seed, overriding the configuration");
    sub->add_option("--jobs", common.jobs, "Worker thread cap")->check(CLI::PositiveNumber);
    sub->add_option("--out", common.out, "Output directory");
  };

  std::string mesh_path, dataset, resume, checkpoint, pred_path, gt_path, preset = "humanoid", spec_path;
  bool no_crf = false;
  int count = 1;
  double noise = 0.0;

  auto* decompose = app.add_subcommand("decompose", "Render a mesh into augmented views");
  decompose->add_option("mesh", mesh_path, "Input mesh (.ply or .obj)")->required();
  add_common(decompose);

  auto* train = app.add_subcommand("train", "Train ViewNet and the CRF on a directory of labeled meshes");
  train->add_option("dataset", dataset, "Directory of labeled meshes")->required();
  train->add_option("--resume", resume, "Continue from a checkpoint");
  add_common(train);

  auto* inf = app.add_subcommand("infer", "Label a mesh with a trained checkpoint");
  inf->add_option("mesh", mesh_path, "Input mesh")->required();
  inf->add_option("--checkpoint", checkpoint, "Checkpoint JSON")->required();
  inf->add_flag("--no-crf", no_crf, "Skip CRF refinement");
  add_common(inf);

  auto* eval = app.add_subcommand("eval", "Score predicted labels against a labeled mesh");
  eval->add_option("pred", pred_path, "Label file from infer")->required();
  eval->add_option("gt", gt_path, "Labeled ground-truth mesh")->required();
  eval->add_option("--checkpoint", checkpoint, "Checkpoint used for the predictions");
  add_common(eval);

  auto* synth = app.add_subcommand("synth", "Generate labeled toy shapes");
  synth->add_option("--preset", preset, "humanoid or two-spheres");
  synth->add_option("--spec", spec_path, "Shape spec JSON");
  synth->add_option("--count", count, "Number of shapes");
  synth->add_option("--noise", noise, "Normal jitter, as a fraction of the mean edge length");
  add_common(synth);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*decompose) return cmd_decompose(common, mesh_path);
    if (*train) return cmd_train(common, dataset, resume);
    if (*inf) return cmd_infer(common, mesh_path, checkpoint, no_crf);
    if (*eval) return cmd_eval(common, pred_path, gt_path, checkpoint);
    if (*synth) return cmd_synth(common, preset, spec_path, count, noise);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
