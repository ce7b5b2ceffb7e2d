// Command-line front end: data generation, training, evaluation, reconstruction and plots.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "toder/pipeline/commands.hpp"

using namespace toder;
namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"Two-style colonoscopy depth estimation and reconstruction"};
  app.require_subcommand(1);

  std::optional<std::string> config, preset, device;
  std::optional<std::string> run_dir;
  std::optional<uint64_t> seed;
  bool dry_run = false;
  app.add_option("--config", config, "Key/value configuration file")->check(CLI::ExistingFile);
  app.add_option("--preset", preset, "Base preset")->check(CLI::IsMember(pipeline::preset_names()));
  app.add_option("--run-dir", run_dir, "Run directory (paths.run_dir)");
  app.add_option("--seed", seed, "Global seed");
  app.add_option("--device", device, "Compute device")->check(CLI::IsMember({"cpu", "accelerator"}));
  app.add_flag("--dry-run", dry_run, "Validate and report the plan without touching the disk");
  app.fallthrough();

  auto* gen = app.add_subcommand("generate-data", "Render the style A and/or B datasets");
  std::string style = "both";
  gen->add_option("--style", style, "A, B or both")->check(CLI::IsMember({"A", "B", "both"}));

  auto* trn = app.add_subcommand("train", "Run the three training stages and evaluate");
  int resume_stage = 0;
  std::string resume_from;
  trn->add_option("--resume-stage", resume_stage, "Continue after this completed stage")->check(CLI::Range(0, 3));
  trn->add_option("--resume-from", resume_from, "Run directory holding the checkpoint (default: the run dir)");

  auto* evd = app.add_subcommand("eval-depth", "Score the trained model on the target test splits");
  auto* rec = app.add_subcommand("reconstruct", "Fuse a target split into a mesh");
  auto* evr = app.add_subcommand("eval-recon", "Compare model-depth and gt-depth reconstructions");
  auto* plt = app.add_subcommand("plot", "Loss curves, depth panels and metric tables");
  plt->add_option("--run", run_dir, "Run directory to plot");
  auto* abl = app.add_subcommand("ablation", "Train and score every variant over several seeds");
  auto* show = app.add_subcommand("show-config", "Print the resolved configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  auto log = [](const std::string& s) { std::cout << s << std::endl; };
  try {
    pipeline::ConfigSources src;
    if (config) src.file = *config;
    src.preset = preset;
    src.seed = seed;
    if (run_dir) src.run_dir = *run_dir;
    src.device = device;
    const pipeline::Context ctx = pipeline::make_context(src, dry_run, log);

    if (gen->parsed()) {
      std::vector<StyleTag> styles;
      if (style != "B") styles.push_back(StyleTag::A);
      if (style != "A") styles.push_back(StyleTag::B);
      pipeline::generate_data(ctx, styles);
    } else if (trn->parsed()) {
      const auto report = pipeline::train_run(ctx, resume_stage, resume_from);
      if (report.contains("evaluation")) std::cout << report["evaluation"]["mean"].dump(2) << '\n';
    } else if (evd->parsed()) {
      const auto e = pipeline::eval_depth(ctx);
      if (!e.is_null()) std::cout << e["mean"].dump(2) << '\n';
    } else if (rec->parsed()) {
      const auto j = pipeline::reconstruct(ctx);
      if (!j.is_null()) std::cout << j.dump(2) << '\n';
    } else if (evr->parsed()) {
      const auto j = pipeline::eval_recon(ctx);
      if (!j.is_null()) std::cout << j.dump(2) << '\n';
    } else if (plt->parsed()) {
      pipeline::plot(ctx, ctx.cfg.run_dir);
    } else if (abl->parsed()) {
      const auto j = pipeline::ablation(ctx);
      if (!j.is_null()) {
        for (const auto& r : j["rows"])
          std::printf("%-12s median abs_rel %.4f\n", r["variant"].get<std::string>().c_str(),
                      r["median"]["abs_rel"].get<double>());
      }
    } else if (show->parsed()) {
      ctx.values.write(std::cout);
    }
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const IncompatibleCheckpoint& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
