// clutterbandit command-line front end.
//
//   cb pipeline <cfg> [--seed N] [--stage NAME] [--out DIR]
//   cb compare <run-dir>...
//   cb inspect <file>
//
// Exit codes: 0 success, 2 config error, 3 stage failure.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "cb/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"clutterbandit: adversarial visuomotor policy transfer on a synthetic tabletop"};
  app.require_subcommand(1);

  std::string cfg_path, force_stage, out_dir;
  std::int64_t seed_override = -1;
  auto* pipeline = app.add_subcommand("pipeline", "run the full training pipeline");
  pipeline->add_option("config", cfg_path, "run config file")->required();
  pipeline->add_option("--seed", seed_override, "override run.seed");
  pipeline->add_option("--stage", force_stage, "force one stage to rerun");
  pipeline->add_option("--out", out_dir, "override the output directory");

  std::vector<std::string> run_dirs;
  auto* compare = app.add_subcommand("compare", "compare completed runs");
  compare->add_option("dirs", run_dirs, "run directories")->required()->expected(-1);

  std::string inspect_path;
  auto* inspect = app.add_subcommand("inspect", "summarize a checkpoint or bundle");
  inspect->add_option("file", inspect_path, "file to inspect")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (pipeline->parsed()) {
      cb::RunConfig cfg = cb::load_config(cfg_path);
      if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      const auto statuses = cb::run_pipeline(cfg, force_stage);
      for (const auto& st : statuses) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(st.content_hash));
        if (st.skipped)
          std::cout << "[skip] " << st.stage << " " << buf << "\n";
        else
          std::cout << "[done] " << st.stage << " " << buf << " (" << st.wall_ms
                    << " ms)\n";
      }
      std::cout << "pipeline complete: " << cfg.out_dir << "\n";
    } else if (compare->parsed()) {
      std::cout << cb::compare_runs(run_dirs);
    } else if (inspect->parsed()) {
      std::cout << cb::inspect_file(inspect_path);
    }
  } catch (const cb::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
