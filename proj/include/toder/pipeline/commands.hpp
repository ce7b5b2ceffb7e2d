#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "toder/pipeline/config.hpp"
#include "toder/pipeline/plots.hpp"
#include "toder/reconstruction/sequence.hpp"
#include "toder/synthcolon/dataset.hpp"
#include "toder/training/trainer.hpp"

namespace toder::pipeline {

namespace fs = std::filesystem;

inline constexpr const char* kSnapshotFile = "config.snapshot";
inline constexpr const char* kReportFile = "report.json";
inline constexpr const char* kReconDir = "recon";
inline constexpr const char* kAblationFile = "ablation.json";

/// Resolved configuration plus how to behave. In a dry run nothing is written.
struct Context {
  RunConfig cfg;
  KeyValueFile values;
  bool dry_run = false;
  std::function<void(const std::string&)> log;

  void say(const std::string& s) const {
    if (log) log(s);
  }
};

inline Context make_context(const ConfigSources& src, bool dry_run = false,
                            std::function<void(const std::string&)> log = {}) {
  Context ctx;
  ctx.values = resolve_values(src);
  ctx.cfg = parse_run_config(ctx.values);
  ctx.dry_run = dry_run;
  ctx.log = std::move(log);
  if (ctx.cfg.device == Device::accelerator)
    ctx.say("warning: this build has no accelerator backend; running on the CPU");
  return ctx;
}

namespace detail {

inline void require_dataset(const fs::path& dir, const std::string& key) {
  if (!fs::exists(dir / synthcolon::kIndexFileName))
    throw ValidationError("no dataset at '" + dir.string() + "' (config key '" + key + "'); run generate-data first");
}

inline fs::path require_model(const fs::path& run_dir) {
  const fs::path dir = train::stage_dir(run_dir, 3);
  if (!fs::exists(dir / train::kCheckpointFile))
    throw ValidationError("no trained model in '" + dir.string() + "' (config key 'paths.run_dir'); run train first");
  return dir;
}

inline nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline void write_json(const nlohmann::json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline void write_snapshot(const Context& ctx, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream out(dir / kSnapshotFile);
  if (!out) throw Error("cannot write " + (dir / kSnapshotFile).string());
  ctx.values.write(out);
}

inline std::vector<DatasetManifest> test_splits(const fs::path& dataset) {
  auto splits = synthcolon::load_dataset_splits(dataset);
  if (splits.size() < 2) throw ValidationError("dataset '" + dataset.string() + "' has no test splits");
  return {splits.begin() + 1, splits.end()};
}

inline double median(std::vector<double> v) { return eval::detail::median_of(std::move(v)); }

}  // namespace detail

/// Renders the requested styles into `paths.source` (A) and `paths.target` (B).
inline nlohmann::json generate_data(const Context& ctx, const std::vector<StyleTag>& styles) {
  nlohmann::json out = nlohmann::json::array();
  for (StyleTag tag : styles) {
    const auto req = dataset_request(ctx.cfg, tag);
    req.colon.validate();
    req.style.validate();
    req.render.validate(req.colon.radius);
    nlohmann::json row{{"style", to_string(tag)},
                       {"dir", req.out_dir.string()},
                       {"seed", req.seed},
                       {"frames", req.n_train + req.n_test_sets * req.n_test}};
    if (ctx.dry_run) {
      ctx.say("would generate style " + to_string(tag) + " into " + req.out_dir.string());
    } else {
      const auto t0 = std::chrono::steady_clock::now();
      synthcolon::generate_dataset(req);
      row["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      ctx.say("generated style " + to_string(tag) + " into " + req.out_dir.string());
    }
    out.push_back(row);
  }
  return out;
}

/// Stages 1 to 3 plus the held-out evaluation; returns the run report.
inline nlohmann::json train_run(const Context& ctx, int resume_stage = 0, const fs::path& resume_dir = {}) {
  const RunConfig& c = ctx.cfg;
  c.train.validate();
  detail::require_dataset(c.source, "paths.source");
  detail::require_dataset(c.target, "paths.target");
  if (resume_stage > 0) {
    const fs::path from = train::stage_dir(resume_dir.empty() ? c.run_dir : resume_dir, resume_stage);
    if (!fs::exists(from / train::kCheckpointFile))
      throw ValidationError("no checkpoint to resume from in '" + from.string() + "'");
  }
  if (ctx.dry_run) {
    ctx.say("would train " + to_string(c.train.variant) + " into " + c.run_dir.string());
    return {{"run_dir", c.run_dir.string()}, {"config", train::config_json(c.train)}};
  }
  detail::write_snapshot(ctx, c.run_dir);
  train::RunOptions opt;
  opt.resume_stage = resume_stage;
  opt.resume_dir = resume_dir;
  opt.metrics = c.metrics;
  opt.fuse = c.fuse;
  opt.log = ctx.log;
  return train::run_all(c.train, {c.source, c.target, c.run_dir}, opt).report;
}

/// Scores the trained model on the target test splits and merges the result into report.json.
inline nlohmann::json eval_depth(const Context& ctx) {
  const RunConfig& c = ctx.cfg;
  const fs::path model_dir = detail::require_model(c.run_dir);
  detail::require_dataset(c.target, "paths.target");
  const auto tests = detail::test_splits(c.target);
  if (ctx.dry_run) {
    ctx.say("would evaluate " + model_dir.string() + " on " + std::to_string(tests.size()) + " test splits");
    return {};
  }
  const train::TrainState st = train::load_state(c.train, model_dir);
  const auto r = eval::evaluate_testsets(train::depth_predictor(st.nets, c.train.variant, c.fuse), tests, c.metrics);
  const fs::path report_path = c.run_dir / kReportFile;
  nlohmann::json report = fs::exists(report_path) ? detail::read_json(report_path) : nlohmann::json::object();
  report["evaluation"] = eval::to_json(r);
  detail::write_json(report, report_path);
  std::ofstream(c.run_dir / "frame_metrics.csv") << eval::frames_csv(r);
  ctx.say("held-out abs_rel " + std::to_string(r.mean.abs_rel));
  return report["evaluation"];
}

namespace detail {

inline DatasetManifest recon_split(const RunConfig& c) {
  require_dataset(c.target, "paths.target");
  const auto splits = synthcolon::load_dataset_splits(c.target);
  if (c.recon_split >= static_cast<int>(splits.size()))
    throw ValidationError("config key 'recon.split' names split " + std::to_string(c.recon_split) + " but '" +
                          c.target.string() + "' has " + std::to_string(splits.size()));
  return splits[static_cast<size_t>(c.recon_split)];
}

inline recon::ReconResult run_recon(const Context& ctx, const DatasetManifest& m, recon::DepthSource source,
                                    const fs::path& mesh_path) {
  recon::ReconOptions opt = ctx.cfg.recon;
  opt.depth_source = source;
  std::optional<train::TrainState> st;
  recon::FrameDepthFn model;
  if (source == recon::DepthSource::model) {
    st.emplace(train::load_state(ctx.cfg.train, require_model(ctx.cfg.run_dir)));
    model = train::depth_predictor(st->nets, ctx.cfg.train.variant, ctx.cfg.fuse);
  }
  auto r = recon::reconstruct_sequence(m, opt, model);
  write_ply(r.mesh, mesh_path);
  std::string line = "reconstructed " + std::to_string(r.n_frames) + " frames (" + to_string(source) + " depth)";
  if (r.metrics) line += ", mean distance " + std::to_string(r.metrics->mean);
  ctx.say(line);
  return r;
}

}  // namespace detail

/// Fuses one target split into a mesh (PLY) and writes recon_report.json.
inline nlohmann::json reconstruct(const Context& ctx) {
  const RunConfig& c = ctx.cfg;
  c.recon.validate();
  const DatasetManifest m = detail::recon_split(c);
  if (c.recon.depth_source == recon::DepthSource::model) detail::require_model(c.run_dir);
  if (c.recon.pose_source == recon::PoseSource::file && !fs::exists(c.recon.pose_file))
    throw ValidationError("config key 'recon.pose_file': file not found '" + c.recon.pose_file.string() + "'");
  const fs::path dir = c.run_dir / kReconDir;
  if (ctx.dry_run) {
    ctx.say("would reconstruct " + m.root.string() + " into " + (dir / "mesh.ply").string());
    return {};
  }
  fs::create_directories(dir);
  const auto r = detail::run_recon(ctx, m, c.recon.depth_source, dir / "mesh.ply");
  nlohmann::json j = recon::to_json(r);
  j["split"] = m.name;
  j["mesh"] = (dir / "mesh.ply").string();
  detail::write_json(j, dir / "recon_report.json");
  return j;
}

/// Model-depth reconstruction next to the ground-truth-depth baseline, in the same units.
inline nlohmann::json eval_recon(const Context& ctx) {
  const RunConfig& c = ctx.cfg;
  c.recon.validate();
  const DatasetManifest m = detail::recon_split(c);
  detail::require_model(c.run_dir);
  if (m.mesh.empty() || !fs::exists(m.path_of(m.mesh)))
    throw ValidationError("split '" + m.root.string() + "' has no ground-truth surface to evaluate against");
  const fs::path dir = c.run_dir / kReconDir;
  if (ctx.dry_run) {
    ctx.say("would evaluate reconstructions of " + m.root.string());
    return {};
  }
  fs::create_directories(dir);
  nlohmann::json j{{"split", m.name}, {"reference_baseline", recon::recon_reference_baseline()}};
  j["model"] = recon::to_json(detail::run_recon(ctx, m, recon::DepthSource::model, dir / "mesh_model.ply"));
  j["gt_depth"] = recon::to_json(detail::run_recon(ctx, m, recon::DepthSource::gt, dir / "mesh_gt_depth.ply"));
  detail::write_json(j, dir / "recon_eval.json");
  return j;
}

/// Loss curves, depth panels and metric tables for a finished run. Returns the written files.
inline std::vector<fs::path> plot(const Context& ctx, const fs::path& run_dir) {
  const fs::path losses = run_dir / train::kLossesFile, report_path = run_dir / kReportFile;
  if (!fs::exists(losses)) throw ValidationError("no loss history at '" + losses.string() + "'; run train first");
  const fs::path out = run_dir / "plots";
  if (ctx.dry_run) {
    ctx.say("would write plots into " + out.string());
    return {};
  }
  std::vector<fs::path> written;
  auto emit = [&](const cv::Mat& img, const std::string& name) {
    write_png(img, out / name);
    written.push_back(out / name);
  };
  emit(loss_curves(train::read_losses_csv(losses)), "loss_curves.png");

  // Depth panels need the model and a target test split.
  const fs::path model_dir = train::stage_dir(run_dir, 3);
  if (fs::exists(model_dir / train::kCheckpointFile) && fs::exists(ctx.cfg.target / synthcolon::kIndexFileName)) {
    const train::TrainState st = train::load_state(ctx.cfg.train, model_dir);
    const auto predict = train::depth_predictor(st.nets, ctx.cfg.train.variant, ctx.cfg.fuse);
    const DatasetManifest m = detail::test_splits(ctx.cfg.target).front();
    const int n = std::min<int>(ctx.cfg.plot_frames, static_cast<int>(m.frames.size()));
    std::vector<cv::Mat> rows;
    for (int i = 0; i < n; ++i) {
      const size_t k = static_cast<size_t>(i) * m.frames.size() / static_cast<size_t>(n);
      const Frame f = load_frame(m, k);
      rows.push_back(depth_panel(f.rgb, predict(f), load_depth(m, k), ctx.cfg.metrics.align == eval::Align::median));
    }
    cv::Mat stacked;
    cv::vconcat(rows, stacked);
    emit(stacked, "depth_panels.png");
  } else {
    ctx.say("skipping depth panels: no trained model or target dataset");
  }

  std::vector<std::string> header{"set"};
  header.insert(header.end(), metric_columns().begin(), metric_columns().end());
  if (fs::exists(report_path)) {
    const auto report = detail::read_json(report_path);
    if (report.contains("evaluation")) {
      const auto& e = report["evaluation"];
      std::vector<std::vector<std::string>> rows;
      for (const auto& s : e["per_set"]) rows.push_back(metric_cells(s.value("name", "?"), s));
      rows.push_back(metric_cells("mean", e["mean"]));
      rows.push_back(metric_cells("reference", eval::reference_baseline()));
      emit(table_image("held-out depth metrics (" + e.value("align", std::string("median")) + " alignment)", header, rows),
           "metrics_table.png");
    }
  }
  if (fs::exists(run_dir / kAblationFile)) {
    const auto ab = detail::read_json(run_dir / kAblationFile);
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : ab["rows"]) rows.push_back(metric_cells(r["variant"].get<std::string>() + " (median)", r["median"]));
    for (const auto& r : ab["reference_rows"]) rows.push_back(metric_cells(r["variant"].get<std::string>() + " (reference)", r));
    header[0] = "variant";
    emit(table_image("ablation over seeds", header, rows), "ablation_table.png");
  }
  const fs::path recon_eval = run_dir / kReconDir / "recon_eval.json";
  if (fs::exists(recon_eval)) {
    const auto j = detail::read_json(recon_eval);
    auto cell = [](const nlohmann::json& v) { return v.is_number() ? detail::fmt(v.get<double>()) : std::string("-"); };
    std::vector<std::vector<std::string>> rows;
    for (const char* k : {"model", "gt_depth"})
      rows.push_back({k, cell(j[k]["mean"]), cell(j[k]["std"]), cell(j[k]["voxel_size"])});
    rows.push_back({"reference", cell(j["reference_baseline"]["mean"]), cell(j["reference_baseline"]["std"]), "-"});
    emit(table_image("cloud-to-mesh distance", {"depth", "mean", "std", "voxel"}, rows), "recon_table.png");
  }
  for (const auto& p : written) ctx.say("wrote " + p.string());
  return written;
}

/// Reference ablation rows, kept for context.
inline nlohmann::json ablation_reference_rows() {
  auto row = [](const char* v, std::array<double, 7> m) {
    nlohmann::json j{{"variant", v}};
    for (size_t i = 0; i < 7; ++i) j[metric_columns()[i]] = m[i];
    return j;
  };
  return nlohmann::json::array({row("full", {0.144, 0.390, 2.190, 0.184, 0.818, 0.964, 0.987}),
                                row("no_tnet", {0.155, 0.434, 2.300, 0.200, 0.786, 0.955, 0.985}),
                                row("no_bidirect", {0.286, 1.379, 3.889, 1.037, 0.554, 0.799, 0.880})});
}

/// Per-seed data lives in data_dir/seed<s>/{A,B}.
inline Context ablation_seed_context(const Context& ctx, uint64_t seed) {
  Context sc = ctx;
  const fs::path data = ctx.cfg.data_dir / ("seed" + std::to_string(seed));
  sc.cfg.seed = seed;
  sc.cfg.train.seed = seed;
  sc.cfg.train.sync();
  sc.cfg.recon.seed = seed;
  sc.cfg.source = data / "A";
  sc.cfg.target = data / "B";
  sc.values.set("seed", std::to_string(seed));
  return sc;
}

/// Runs live in <run_dir>/ablation/seed<s>/<variant>.
inline Context ablation_run_context(const Context& seed_ctx, train::Variant v, const fs::path& run_root) {
  Context vc = seed_ctx;
  vc.cfg.train.variant = v;
  vc.cfg.run_dir = run_root / "ablation" / ("seed" + std::to_string(seed_ctx.cfg.seed)) / to_string(v);
  vc.values.set("train.variant", to_string(v));
  vc.values.set("paths.run_dir", vc.cfg.run_dir.string());
  return vc;
}

/// The three variants over several seeds with shared data and shared early stages: no_tnet
/// resumes from the full run after stage 2, no_bidirect after stage 1 (the stages they share).
inline nlohmann::json ablation(const Context& ctx) {
  const RunConfig& base = ctx.cfg;
  base.train.validate();
  const fs::path root = base.run_dir / "ablation";
  const bool has_full =
      std::find(base.ablation_variants.begin(), base.ablation_variants.end(), train::Variant::full) !=
      base.ablation_variants.end();
  if (ctx.dry_run) {
    ctx.say("would run " + std::to_string(base.ablation_variants.size()) + " variants x " +
            std::to_string(base.ablation_seeds.size()) + " seeds into " + root.string());
    return {};
  }
  detail::write_snapshot(ctx, base.run_dir);

  std::map<train::Variant, std::vector<nlohmann::json>> per_variant;
  for (uint64_t seed : base.ablation_seeds) {
    const Context sc = ablation_seed_context(ctx, seed);
    std::vector<StyleTag> missing;
    if (!fs::exists(sc.cfg.source / synthcolon::kIndexFileName)) missing.push_back(StyleTag::A);
    if (!fs::exists(sc.cfg.target / synthcolon::kIndexFileName)) missing.push_back(StyleTag::B);
    generate_data(sc, missing);

    const fs::path full_dir = ablation_run_context(sc, train::Variant::full, base.run_dir).cfg.run_dir;
    std::vector<train::Variant> order;
    if (has_full) order.push_back(train::Variant::full);
    for (auto v : base.ablation_variants)
      if (v != train::Variant::full) order.push_back(v);
    for (train::Variant v : order) {
      const Context vc = ablation_run_context(sc, v, base.run_dir);
      const fs::path report_path = vc.cfg.run_dir / kReportFile;
      nlohmann::json report;
      if (fs::exists(report_path)) {
        report = detail::read_json(report_path);
        if (report.contains("evaluation") && report.value("config", nlohmann::json()) == train::config_json(vc.cfg.train)) {
          ctx.say("reusing " + vc.cfg.run_dir.string());
        } else {
          report = nullptr;
        }
      }
      if (report.is_null()) {
        int resume = 0;
        if (has_full && v == train::Variant::no_tnet) resume = 2;
        if (has_full && v == train::Variant::no_bidirect) resume = 1;
        ctx.say("seed " + std::to_string(seed) + ": " + to_string(v) +
                (resume ? " (after stage " + std::to_string(resume) + " of full)" : ""));
        report = train_run(vc, resume, resume ? full_dir : fs::path());
      }
      nlohmann::json row = report["evaluation"]["mean"];
      row["seed"] = seed;
      per_variant[v].push_back(row);
    }
  }

  nlohmann::json rows = nlohmann::json::array();
  std::map<train::Variant, double> median_abs_rel;
  for (auto v : base.ablation_variants) {
    nlohmann::json med;
    for (const auto& k : metric_columns()) {
      std::vector<double> xs;
      for (const auto& r : per_variant[v]) xs.push_back(r[k].get<double>());
      med[k] = detail::median(xs);
    }
    median_abs_rel[v] = med["abs_rel"].get<double>();
    rows.push_back({{"variant", to_string(v)}, {"median", med}, {"per_seed", per_variant[v]}});
  }
  nlohmann::json out{{"seeds", base.ablation_seeds}, {"rows", rows}, {"reference_rows", ablation_reference_rows()}};
  using train::Variant;
  if (median_abs_rel.contains(Variant::full) && median_abs_rel.contains(Variant::no_tnet))
    out["full_le_no_tnet"] = median_abs_rel[Variant::full] <= median_abs_rel[Variant::no_tnet];
  if (median_abs_rel.contains(Variant::no_tnet) && median_abs_rel.contains(Variant::no_bidirect))
    out["no_tnet_le_no_bidirect_plus_0.05"] = median_abs_rel[Variant::no_tnet] <= median_abs_rel[Variant::no_bidirect] + 0.05;
  detail::write_json(out, base.run_dir / kAblationFile);

  std::ofstream csv(base.run_dir / "ablation.csv");
  csv << "variant,seed";
  for (const auto& k : metric_columns()) csv << ',' << k;
  csv << '\n';
  for (const auto& r : rows) {
    for (const auto& s : r["per_seed"]) {
      csv << r["variant"].get<std::string>() << ',' << s["seed"].get<uint64_t>();
      for (const auto& k : metric_columns()) csv << ',' << s[k].get<double>();
      csv << '\n';
    }
    csv << r["variant"].get<std::string>() << ",median";
    for (const auto& k : metric_columns()) csv << ',' << r["median"][k].get<double>();
    csv << '\n';
  }
  for (const auto& r : ablation_reference_rows()) {
    csv << r["variant"].get<std::string>() << ",reference";
    for (const auto& k : metric_columns()) csv << ',' << r[k].get<double>();
    csv << '\n';
  }
  return out;
}

}  // namespace toder::pipeline
