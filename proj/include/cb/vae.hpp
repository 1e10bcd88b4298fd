#pragma once

// Trajectory variational autoencoder. Compresses T x M motor trajectories
// into a 3-dim latent so that policy search becomes a one-shot choice of z.
// The model is trained once, then frozen; the decoder is deterministic.

#include <cstdint>
#include <utility>
#include <vector>

#include "cb/net.hpp"
#include "cb/sim.hpp"

namespace cb {

inline constexpr int kLatentDim = 3;  // < 5 by requirement

struct TrajVae {
  Net encoder;  // {T*M} -> {2d}: mu, log-variance
  Net decoder;  // {d} -> {T*M}
  bool frozen = false;

  int latent_dim() const { return kLatentDim; }
};

struct VaeConfig {
  int epochs = 240;
  int batch = 64;
  double lr = 1e-3;
  double beta_kl = 1e-3;   // linear warm-up over the first 20% of epochs
  double holdout_frac = 0.1;
  double holdout_mse_max = 2e-4;  // raw units, per action element
  std::uint64_t seed = 0;
};

struct VaeTrainStats {
  std::vector<double> epoch_loss;   // scaled units
  double holdout_mse = 0.0;         // raw units, per element, mu-encoding
  int epochs_run = 0;
};

// Trains on >= 500 demos, validates on a held-out 10% and returns the frozen
// model. Throws on divergence (reporting the last finite epoch) and when the
// held-out reconstruction bound is not met.
TrajVae train_vae(const std::vector<sim::Trajectory>& demos, const VaeConfig& cfg,
                  VaeTrainStats* stats = nullptr);

// (mu, sigma), sigma strictly positive.
std::pair<VecX<float>, VecX<float>> encode(const TrajVae& vae, const sim::Trajectory& traj);

// Deterministic; per-step displacement clamped to the simulator bound.
sim::Trajectory decode(const TrajVae& vae, const VecX<float>& z);

std::uint64_t vae_param_hash(const TrajVae& vae);

ParamSet vae_to_params(const TrajVae& vae);
TrajVae vae_from_params(const ParamSet& ps);

// Demo corpus file: u32 count, u32 T, u32 M, then count*T*M little-endian f32.
void save_demos(const std::string& path, const std::vector<sim::Trajectory>& demos);
std::vector<sim::Trajectory> load_demos(const std::string& path);

// Oracle demo corpus to uniformly sampled goals across the workspace.
std::vector<sim::Trajectory> make_demo_corpus(int count, std::uint64_t seed);

}  // namespace cb
