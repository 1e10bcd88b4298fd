#pragma once

// Adversarial domain transfer: joint optimization of perception, policy,
// classifier and discriminator under the combined loss
//   L = lambda_task * L_task(D_S) + lambda_c * L_c(D_T) + lambda_D * L_D,
// with the baselines expressed as loss masks over the same loop. The
// discriminator trains against frozen perception features; the perception
// then takes a non-saturating step against the updated discriminator.

#include <cstdint>
#include <string>
#include <vector>

#include "cb/data.hpp"
#include "cb/net.hpp"
#include "cb/optim.hpp"
#include "cb/vae.hpp"

namespace cb {

enum class MethodVariant { Full, Adda, AddaExtrainfo, Gplac, GplacExtrainfo };

const char* variant_name(MethodVariant v);
MethodVariant parse_variant(const std::string& s);
// Canonical table column order: full, adda, adda_extrainfo, gplac, gplac_extrainfo.
const std::vector<MethodVariant>& all_variants();

struct LossWeights {
  double task = 1.0;
  double c = 1.0;
  double d = 1.0;
};

LossWeights variant_weights(MethodVariant v);       // masks per baseline
bool variant_extrainfo(MethodVariant v);            // uses cluttered source data
bool variant_spatial_head(MethodVariant v);         // GPLAC-style perception

struct AuxNets {
  Net discriminator;  // feature -> 1 logit, source=1 target=0
  Net classifier;     // feature -> 1 logit, label 1 = clutter-only
};

struct TransferConfig {
  int steps = 2000;
  int batch = 32;
  double lr_p = 1e-4;
  double lr_pi = 1e-4;
  double lr_d = 2e-4;
  double lr_c = 1e-4;
  int d_steps_per_p_step = 1;
  LossWeights weights;
  double holdout_frac = 0.1;  // target samples kept out of all training
  bool debug_checks = true;   // per-step gradient-isolation hash asserts
  std::uint64_t seed = 0;
};

struct TransferLogRow {
  int step = 0;
  // NaN marks a component masked off by its zero weight.
  double l_task = 0.0, l_c = 0.0, l_d_disc = 0.0, l_d_gen = 0.0, d_acc = 0.0;
  double total = 0.0;  // weighted sum of the minimized components
};

struct TransferResult {
  Net perception;
  Net policy;
  AuxNets aux;
  std::vector<TransferLogRow> log;
  std::vector<int> holdout_target;  // indices into bundle.target, never trained on
};

// Adapts the RL-trained nets to the variant's architecture. GPLAC heads swap
// the dense feature head for a spatial softmax and reinitialize the policy
// input layer (hidden layers are reused where dimensions permit).
void build_variant_nets(MethodVariant v, const Net& perception_rl, const Net& policy_rl,
                        Net& perception_out, Net& policy_out, Rng& rng);

AuxNets build_aux_nets(int feature_dim, Rng& rng);

TransferResult transfer_train(const DatasetBundle& bundle, const Net& perception0,
                              const Net& policy0, const TrajVae& vae, MethodVariant v,
                              const TransferConfig& cfg);

std::string transfer_log_csv(const std::vector<TransferLogRow>& log);

// Deployment checkpoint: exactly the P.* and pi.* tensors, no auxiliaries.
ParamSet deployment_params(const Net& perception, const Net& policy);

// Classifier accuracy over labeled target samples (for held-out evaluation).
double classifier_accuracy(const Net& perception, const Net& classifier,
                           const std::vector<LabeledImage>& samples);

}  // namespace cb
