#pragma once

#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "toder/core/kvfile.hpp"
#include "toder/evaluation/metrics.hpp"
#include "toder/reconstruction/fusion.hpp"
#include "toder/reconstruction/sequence.hpp"
#include "toder/synthcolon/dataset.hpp"
#include "toder/training/config.hpp"

namespace toder::pipeline {

/// Scene and camera settings shared by both generated styles.
struct DataConfig {
  int height = 96;
  int width = 96;
  double fov_deg = 100;
  int n_train = 200;
  int n_test_sets = 4;
  int n_test = 50;
  double length = 20;
  double radius = 0.5;
  double fold_amplitude = 0.12;
  double fold_frequency = 0.5;
  double light_intensity = 1.2;
  synthcolon::TrajectoryOptions trajectory;
  synthcolon::Augmentations augment;
};

enum class Device { cpu, accelerator };

struct RunConfig {
  std::string preset = "toy";
  uint64_t seed = 1;
  Device device = Device::cpu;
  std::filesystem::path data_dir;
  std::filesystem::path source;  // style A dataset
  std::filesystem::path target;  // style B dataset
  std::filesystem::path run_dir;
  DataConfig data;
  train::TrainConfig train;
  eval::MetricOptions metrics;
  recon::FuseMode fuse = recon::FuseMode::average;
  recon::ReconOptions recon;
  /// Dataset split reconstructed by `reconstruct` (0 is the training split).
  int recon_split = 1;
  std::vector<uint64_t> ablation_seeds{1, 2, 3};
  std::vector<train::Variant> ablation_variants{train::Variant::full, train::Variant::no_tnet,
                                                train::Variant::no_bidirect};
  int plot_frames = 4;
};

namespace detail {

inline const char* const kWeightKeys[] = {"lambda_i", "lambda_s", "w_photo", "w_cons", "w_gan",
                                          "w_cycle",  "w_sup",    "w_self",  "w_pose"};

inline double& weight_ref(geometry::LossWeights& w, const std::string& name) {
  if (name == "lambda_i") return w.lambda_i;
  if (name == "lambda_s") return w.lambda_s;
  if (name == "w_photo") return w.w_photo;
  if (name == "w_cons") return w.w_cons;
  if (name == "w_gan") return w.w_gan;
  if (name == "w_cycle") return w.w_cycle;
  if (name == "w_sup") return w.w_sup;
  if (name == "w_self") return w.w_self;
  return w.w_pose;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

constexpr const char* kToy = R"(# Desk-scale run: two 96x96 styles, 5 epochs per stage.
preset = toy
seed = 1
device = cpu
paths.data_dir = data/toy
paths.source =
paths.target =
paths.run_dir = runs/toy
data.height = 96
data.width = 96
data.fov_deg = 100
data.n_train = 200
data.n_test_sets = 4
data.n_test = 50
data.length = 20
data.radius = 0.5
data.fold_amplitude = 0.12
data.fold_frequency = 0.5
data.light_intensity = 1.2
data.max_offset = 0.3
data.max_jitter_deg = 10
data.max_roll_deg = 15
data.fps = 30
data.vignetting = false
data.motion_blur_taps = 1
data.distortion = false
train.variant = full
train.consistency = warped_z
train.refine_translators = false
train.pair_stride = 1
net.depth_width = 16
net.translator_width = 16
net.residual_blocks = 4
net.tnet_width = 16
net.min_depth = 0.01
net.max_depth = 20
net.initial_depth = 1
stage1.epochs = 5
stage1.lr = 2e-4
stage1.batch_size = 4
stage2.epochs = 5
stage2.lr = 5e-4
stage2.batch_size = 4
stage3.epochs = 5
stage3.lr = 2e-4
stage3.batch_size = 4
eval.align = median
eval.clamp_to_gt = false
eval.fuse = average
recon.split = 1
recon.depth_source = model
recon.pose_source = gt
recon.pose_file =
recon.voxel_size = 0
recon.truncation_voxels = 4
recon.max_depth = 0
recon.frame_stride = 1
recon.register = true
ablation.seeds = 1,2,3
ablation.variants = full,no_tnet,no_bidirect
plot.frames = 4
)";

// Full-scale schedule; everything else as in toy.
constexpr const char* kPaperChanges = R"(preset = paper
paths.data_dir = data/paper
paths.run_dir = runs/paper
data.height = 480
data.width = 640
data.n_train = 3000
data.n_test = 200
stage1.epochs = 200
stage1.lr = 5e-5
stage2.epochs = 110
stage2.lr = 1e-4
stage3.epochs = 110
stage3.lr = 1e-4
)";

inline void overlay(KeyValueFile& base, const KeyValueFile& top) {
  for (const auto& k : top.keys()) base.set(k, *top.raw(k));
}

}  // namespace detail

inline std::vector<std::string> preset_names() { return {"toy", "paper"}; }

/// Every key the default values define; per-stage weights are optional and listed too.
inline std::vector<std::string> known_keys();

/// The full key/value set of a named preset.
inline KeyValueFile preset_values(const std::string& name) {
  std::istringstream toy(detail::kToy);
  KeyValueFile kv = KeyValueFile::parse(toy, "preset:" + name);
  if (name == "toy") return kv;
  if (name == "paper") {
    std::istringstream paper(detail::kPaperChanges);
    detail::overlay(kv, KeyValueFile::parse(paper, "preset:paper"));
    return kv;
  }
  throw ValidationError("unknown preset '" + name + "' (expected toy or paper)");
}

inline std::vector<std::string> known_keys() {
  std::vector<std::string> keys = preset_values("toy").keys();
  for (int s = 1; s <= 3; ++s)
    for (const char* w : detail::kWeightKeys) keys.push_back("stage" + std::to_string(s) + "." + w);
  return keys;
}

/// Where a configuration comes from; later sources win: preset, file, environment, flags.
struct ConfigSources {
  std::optional<std::string> preset;
  std::optional<std::filesystem::path> file;
  std::optional<uint64_t> seed;
  std::optional<std::filesystem::path> run_dir;
  std::optional<std::string> device;
};

/// Merged key/value set. Unknown keys in the file are rejected by name.
inline KeyValueFile resolve_values(const ConfigSources& src) {
  std::optional<KeyValueFile> file;
  if (src.file) {
    if (!std::filesystem::exists(*src.file)) throw ValidationError("config file not found: " + src.file->string());
    file = KeyValueFile::load(*src.file);
    for (const auto& row : file->rows())
      throw ParseError(file->source() + ":" + std::to_string(row.line) + ": expected 'key = value'");
    const auto keys = known_keys();
    const std::set<std::string> known(keys.begin(), keys.end());
    for (const auto& k : file->keys())
      if (!known.contains(k)) throw ValidationError(file->source() + ": unknown config key '" + k + "'");
  }
  std::string preset = src.preset.value_or(file ? file->get_string("preset", "toy") : "toy");
  if (const char* env = std::getenv(env_name_for_key("preset").c_str()); env && !src.preset) preset = env;
  KeyValueFile kv = preset_values(preset);
  if (file) detail::overlay(kv, *file);
  kv.set("preset", preset);
  kv.apply_env_overrides(known_keys());
  if (src.seed) kv.set("seed", std::to_string(*src.seed));
  if (src.run_dir) kv.set("paths.run_dir", src.run_dir->string());
  if (src.device) kv.set("device", *src.device);
  return kv;
}

/// Typed configuration; every validation message names the offending key.
inline RunConfig parse_run_config(const KeyValueFile& kv) {
  RunConfig c;
  auto num = [&]<typename T>(const std::string& key, T& out) { out = kv.require<T>(key); };
  auto check = [&](bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ValidationError("config key '" + key + "' " + what + " (got '" + kv.get_string(key, "") + "')");
  };
  auto parse_enum = [&](const std::string& key, auto&& from_string) {
    try {
      return from_string(kv.require_string(key));
    } catch (const ValidationError& e) {
      throw ValidationError("config key '" + key + "': " + e.what());
    }
  };

  c.preset = kv.require_string("preset");
  num("seed", c.seed);
  c.device = parse_enum("device", [](const std::string& s) {
    if (s == "cpu") return Device::cpu;
    if (s == "accelerator") return Device::accelerator;
    throw ValidationError("unknown device '" + s + "' (expected cpu or accelerator)");
  });

  c.data_dir = kv.require_string("paths.data_dir");
  c.source = kv.get_string("paths.source", "");
  c.target = kv.get_string("paths.target", "");
  if (c.source.empty()) c.source = c.data_dir / "A";
  if (c.target.empty()) c.target = c.data_dir / "B";
  c.run_dir = kv.require_string("paths.run_dir");
  check(!c.run_dir.empty(), "paths.run_dir", "must not be empty");

  auto& d = c.data;
  num("data.height", d.height);
  num("data.width", d.width);
  num("data.fov_deg", d.fov_deg);
  num("data.n_train", d.n_train);
  num("data.n_test_sets", d.n_test_sets);
  num("data.n_test", d.n_test);
  num("data.length", d.length);
  num("data.radius", d.radius);
  num("data.fold_amplitude", d.fold_amplitude);
  num("data.fold_frequency", d.fold_frequency);
  num("data.light_intensity", d.light_intensity);
  num("data.max_offset", d.trajectory.max_offset);
  num("data.max_jitter_deg", d.trajectory.max_jitter_deg);
  num("data.max_roll_deg", d.trajectory.max_roll_deg);
  num("data.fps", d.trajectory.fps);
  num("data.vignetting", d.augment.vignetting);
  num("data.motion_blur_taps", d.augment.motion_blur_taps);
  num("data.distortion", d.augment.distortion);
  check(d.height > 0, "data.height", "must be positive");
  check(d.width > 0, "data.width", "must be positive");
  check(d.fov_deg > 0 && d.fov_deg < 180, "data.fov_deg", "must lie in (0, 180)");
  check(d.n_train >= 2, "data.n_train", "must be >= 2");
  check(d.n_test_sets >= 0, "data.n_test_sets", "must be >= 0");
  check(d.n_test >= 2, "data.n_test", "must be >= 2");
  check(d.length > 0, "data.length", "must be positive");
  check(d.radius > 0, "data.radius", "must be positive");
  check(d.fold_amplitude >= 0 && d.fold_amplitude < 1, "data.fold_amplitude", "must lie in [0, 1)");
  check(d.trajectory.fps > 0, "data.fps", "must be positive");
  check(d.augment.motion_blur_taps >= 1, "data.motion_blur_taps", "must be >= 1");

  auto& t = c.train;
  t.seed = c.seed;
  t.height = d.height;
  t.width = d.width;
  t.variant = parse_enum("train.variant", train::variant_from_string);
  t.cons_mode = parse_enum("train.consistency", geometry::consistency_mode_from_string);
  num("train.refine_translators", t.refine_translators);
  num("train.pair_stride", t.pair_stride);
  check(t.pair_stride >= 1, "train.pair_stride", "must be >= 1");
  num("net.depth_width", t.widths.depth);
  num("net.translator_width", t.widths.translator);
  num("net.residual_blocks", t.widths.residual_blocks);
  num("net.tnet_width", t.widths.tnet);
  num("net.min_depth", t.widths.min_depth);
  num("net.max_depth", t.widths.max_depth);
  num("net.initial_depth", t.widths.initial_depth);
  check(t.widths.depth >= 1, "net.depth_width", "must be >= 1");
  check(t.widths.translator >= 1, "net.translator_width", "must be >= 1");
  check(t.widths.residual_blocks >= 0, "net.residual_blocks", "must be >= 0");
  check(t.widths.tnet >= 1, "net.tnet_width", "must be >= 1");
  check(t.widths.min_depth > 0, "net.min_depth", "must be positive");
  check(t.widths.max_depth > t.widths.min_depth, "net.max_depth", "must exceed net.min_depth");
  check(t.widths.initial_depth > t.widths.min_depth && t.widths.initial_depth < t.widths.max_depth,
        "net.initial_depth", "must lie between net.min_depth and net.max_depth");
  for (int s = 1; s <= 3; ++s) {
    auto& sc = t.stages[static_cast<size_t>(s - 1)];
    const std::string p = "stage" + std::to_string(s) + ".";
    num(p + "epochs", sc.epochs);
    num(p + "lr", sc.lr);
    num(p + "batch_size", sc.batch_size);
    check(sc.epochs >= 1, p + "epochs", "must be >= 1");
    check(sc.lr > 0, p + "lr", "must be positive");
    check(sc.batch_size >= 1, p + "batch_size", "must be >= 1");
    for (const char* w : detail::kWeightKeys) {
      double& v = detail::weight_ref(sc.weights, w);
      v = kv.get<double>(p + w, v);
      check(v >= 0 && std::isfinite(v), p + w, "must be finite and non-negative");
    }
  }
  t.sync();

  c.metrics.align = parse_enum("eval.align", eval::align_from_string);
  num("eval.clamp_to_gt", c.metrics.clamp_to_gt);
  c.fuse = parse_enum("eval.fuse", recon::fuse_mode_from_string);

  auto& r = c.recon;
  num("recon.split", c.recon_split);
  check(c.recon_split >= 0 && c.recon_split <= d.n_test_sets, "recon.split", "must name an existing split");
  r.depth_source = parse_enum("recon.depth_source", recon::depth_source_from_string);
  r.pose_source = parse_enum("recon.pose_source", recon::pose_source_from_string);
  r.pose_file = kv.get_string("recon.pose_file", "");
  num("recon.voxel_size", r.voxel_size);
  num("recon.truncation_voxels", r.truncation_voxels);
  num("recon.max_depth", r.max_depth);
  num("recon.frame_stride", r.frame_stride);
  num("recon.register", r.register_to_gt);
  r.seed = c.seed;
  check(r.voxel_size >= 0, "recon.voxel_size", "must be >= 0");
  check(r.truncation_voxels >= 1, "recon.truncation_voxels", "must be >= 1");
  check(r.max_depth >= 0, "recon.max_depth", "must be >= 0");
  check(r.frame_stride >= 1, "recon.frame_stride", "must be >= 1");
  check(r.pose_source != recon::PoseSource::file || !r.pose_file.empty(), "recon.pose_file",
        "is required when recon.pose_source = file");

  c.ablation_seeds.clear();
  for (const auto& s : detail::split_list(kv.require_string("ablation.seeds"))) {
    try {
      size_t used = 0;
      c.ablation_seeds.push_back(std::stoull(s, &used));
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::logic_error&) {
      check(false, "ablation.seeds", "must be a comma-separated list of integers");
    }
  }
  check(!c.ablation_seeds.empty(), "ablation.seeds", "must not be empty");
  c.ablation_variants.clear();
  for (const auto& v : detail::split_list(kv.require_string("ablation.variants")))
    c.ablation_variants.push_back(parse_enum("ablation.variants", [&](const std::string&) {
      return train::variant_from_string(v);
    }));
  check(!c.ablation_variants.empty(), "ablation.variants", "must not be empty");
  num("plot.frames", c.plot_frames);
  check(c.plot_frames >= 1, "plot.frames", "must be >= 1");
  return c;
}

/// Generation request for one style; style A uses the run seed, style B the next one.
inline synthcolon::DatasetRequest dataset_request(const RunConfig& c, StyleTag tag) {
  synthcolon::DatasetRequest req;
  const uint64_t seed = c.seed + (tag == StyleTag::A ? 0 : 1);
  const auto& d = c.data;
  req.colon = synthcolon::ColonSpec::procedural(d.length, d.radius, d.fold_amplitude, d.fold_frequency, seed);
  req.style = tag == StyleTag::A ? synthcolon::TextureStyle::style_a() : synthcolon::TextureStyle::style_b();
  req.tag = tag;
  req.render.intrinsics = CameraIntrinsics::from_fov(d.width, d.height, d.fov_deg * std::numbers::pi / 180.0);
  req.render.light_intensity = d.light_intensity;
  req.render.augment = d.augment;
  req.trajectory = d.trajectory;
  req.n_train = d.n_train;
  req.n_test_sets = d.n_test_sets;
  req.n_test = d.n_test;
  req.out_dir = tag == StyleTag::A ? c.source : c.target;
  req.seed = seed;
  return req;
}

}  // namespace toder::pipeline
