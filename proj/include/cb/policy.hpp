#pragma once

// Joint training of the perception network P and the low-dimensional policy
// pi on clutter-free template scenes, with single-step (bandit) PPO through
// the frozen trajectory decoder. The policy's state-independent log-sigma is
// the extra "logstd" tensor in its ParamSet.

#include <cstdint>
#include <vector>

#include "cb/net.hpp"
#include "cb/optim.hpp"
#include "cb/sim.hpp"
#include "cb/vae.hpp"

namespace cb {

inline constexpr int kFeatureDim = 64;
inline constexpr int kGplacFeatureDim = 32;  // 16 spatial points x 2 coords

// conv(8,3,2)-conv(16,3,2)-conv(16,3,2)-dense(64) over 3x48x48 input
Net build_perception(Rng& rng);
// conv stack shared with build_perception, spatial-softmax head, 32-dim output
Net build_perception_spatial(Rng& rng);
// feature -> mu_z with two 64-unit hidden layers; includes "logstd"
Net build_policy_net(int feature_dim, float sigma_init, Rng& rng);

enum class ActMode { Sample, Mean };

struct ActResult {
  VecX<float> z;
  sim::Trajectory traj;
  double logp = 0.0;  // at sampling time (Sample mode)
};

// sigma_floor keeps exploration alive during training; Mean mode ignores it.
ActResult act(const Net& perception, const Net& policy, const TrajVae& vae,
              const sim::Image& image, ActMode mode, Rng& rng,
              float sigma_floor = 0.05f);

struct Episode {
  sim::SceneSpec scene;
  sim::Image image;
  VecX<float> z;
  float reward = 0.0f;
  double logp = 0.0;
};
using EpisodeBatch = std::vector<Episode>;

// n independent source_plain scenes, acted on in Sample mode and scored.
EpisodeBatch collect_episodes(const Net& perception, const Net& policy,
                              const TrajVae& vae, sim::Task task, int n, Rng& rng,
                              float sigma_floor = 0.05f);

struct PpoConfig {
  double clip_eps = 0.2;
  int epochs = 4;
  double lr = 3e-4;
  float sigma_floor = 0.05f;
};

// Clipped-surrogate update with the batch-mean reward baseline; updates both
// nets end-to-end. A batch with identical rewards is a no-op.
void ppo_update(Net& perception, Net& policy, Adam& opt_p, Adam& opt_pi,
                const EpisodeBatch& batch, const PpoConfig& cfg);

struct RlConfig {
  sim::Task task = sim::Task::Picking;
  int iterations = 400;
  int batch = 64;
  PpoConfig ppo;
  float sigma_init = 0.5f;
  int eval_every = 5;
  int eval_n = 200;
  double success_target = 0.9;
  std::uint64_t seed = 0;
};

struct CurveRow {
  int iteration = 0;
  double mean_reward = 0.0;
  double mean_mode_eval = 0.0;  // most recent evaluation
};

struct RlResult {
  Net perception;
  Net policy;
  std::vector<CurveRow> curve;
  double final_eval = 0.0;
  bool sigma_collapse_flagged = false;
};

// Thrown when the iteration budget is exhausted below the success target.
struct RlError : Error {
  RlError(const std::string& msg, std::vector<CurveRow> c)
      : Error(msg), curve(std::move(c)) {}
  std::vector<CurveRow> curve;
};

RlResult train_policy(const TrajVae& vae, const RlConfig& cfg);

// Mean-mode success rate over n fresh scenes of the given domain.
double evaluate_policy(const Net& perception, const Net& policy, const TrajVae& vae,
                       sim::Task task, sim::DomainKind domain, int n,
                       std::uint64_t seed);

std::string curve_to_csv(const std::vector<CurveRow>& curve);

}  // namespace cb
