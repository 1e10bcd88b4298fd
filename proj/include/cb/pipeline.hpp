#pragma once

// Pipeline orchestration: declarative run configs, a per-run manifest with
// config-hash based stage skipping, crash-safe resumption and the compare /
// inspect commands. One pipeline process per run directory (flock).

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cb/policy.hpp"
#include "cb/transfer.hpp"
#include "cb/vae.hpp"

namespace cb {

struct RunConfig {
  sim::Task task = sim::Task::Picking;
  MethodVariant variant = MethodVariant::Full;
  std::uint64_t seed = 1;
  std::string out_dir = "run_out";

  int demos_count = 4000;

  int vae_epochs = 240;
  int vae_batch = 64;
  double vae_lr = 1e-3;
  double vae_beta_kl = 1e-3;

  int rl_iterations = 600;
  int rl_batch = 64;
  double rl_lr = 3e-4;
  int rl_eval_n = 200;
  double rl_target = 0.9;

  int source_n = 500;
  int per_object = 70;
  int clutter_only = 1000;

  int transfer_steps = 2000;
  int transfer_batch = 32;
  double lr_p = 1e-4, lr_pi = 1e-4, lr_d = 2e-4, lr_c = 1e-4;
  int d_steps = 1;
  // negative = take the variant's mask
  double lambda_task = -1, lambda_c = -1, lambda_d = -1;

  int eval_trials = 50;
  int eval_feature_n = 120;  // per class, feature projections
  int eval_gap_n = 200;      // per domain, discrepancy probes

  LossWeights effective_weights() const;
};

// Line-oriented "section.key = value" text; '#' starts a comment.
RunConfig parse_config_text(const std::string& text, const std::string& origin);
RunConfig load_config(const std::string& path);

struct ManifestEntry {
  std::string stage;
  std::uint64_t cfg_hash = 0;
  std::uint64_t content_hash = 0;
  long wall_ms = 0;
  std::vector<std::string> outputs;
};

// Append-only; the last entry per stage wins. Partial trailing lines from a
// killed run are ignored.
class Manifest {
 public:
  explicit Manifest(std::string path);
  void load();
  const ManifestEntry* find(const std::string& stage) const;
  void append(const ManifestEntry& e);

 private:
  std::string path_;
  std::map<std::string, ManifestEntry> entries_;
};

extern const std::vector<std::string> kStageOrder;

struct StageStatus {
  std::string stage;
  bool skipped = false;
  std::uint64_t content_hash = 0;
  long wall_ms = 0;
};

// Runs all stages in dependency order; stages whose config hash and outputs
// are unchanged are skipped. `force_stage` reruns one stage unconditionally.
std::vector<StageStatus> run_pipeline(const RunConfig& cfg,
                                      const std::string& force_stage = "");

// Merged cross-run table plus an ordering summary; throws on mismatched
// object sets or tasks.
std::string compare_runs(const std::vector<std::string>& run_dirs);

// Human-readable summary of a checkpoint or dataset bundle.
std::string inspect_file(const std::string& path);

}  // namespace cb
