#include "cb/policy.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "cb/gradaccum.hpp"

namespace cb {

namespace {
constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5*log(2*pi)

VecX<float> policy_sigma(const Net& policy, float sigma_floor) {
  const Tensor& logstd = policy.params.at("logstd");
  VecX<float> sigma(logstd.size());
  for (long long i = 0; i < logstd.size(); ++i)
    sigma[i] = std::max(std::exp(logstd.data[i]), sigma_floor);
  return sigma;
}

double gaussian_logp(const VecX<float>& z, const Tensor& mu, const VecX<float>& sigma) {
  double lp = 0.0;
  for (int k = 0; k < z.size(); ++k) {
    const double d = (static_cast<double>(z[k]) - mu.data[k]) / sigma[k];
    lp += -0.5 * d * d - std::log(static_cast<double>(sigma[k])) - kHalfLog2Pi;
  }
  return lp;
}
}  // namespace

Net build_perception(Rng& rng) {
  return NetBuilder({sim::kImageC, sim::kImageH, sim::kImageW}, rng)
      .conv(8, 3, 2).relu()
      .conv(16, 3, 2).relu()
      .conv(16, 3, 2).relu()
      .flatten()
      .dense(kFeatureDim)
      .build();
}

Net build_perception_spatial(Rng& rng) {
  // same conv trunk, spatial-softmax head fed by the raw final conv map
  return NetBuilder({sim::kImageC, sim::kImageH, sim::kImageW}, rng)
      .conv(8, 3, 2).relu()
      .conv(16, 3, 2).relu()
      .conv(16, 3, 2)
      .spatial_softmax()
      .flatten()
      .build();
}

Net build_policy_net(int feature_dim, float sigma_init, Rng& rng) {
  Net net = NetBuilder({feature_dim}, rng)
                .dense(64).relu()
                .dense(64).relu()
                .dense(kLatentDim)
                .build();
  net.params.insert("logstd", full<float>({kLatentDim}, std::log(sigma_init)));
  return net;
}

ActResult act(const Net& perception, const Net& policy, const TrajVae& vae,
              const sim::Image& image, ActMode mode, Rng& rng, float sigma_floor) {
  if (!vae.frozen) throw Error("act: trajectory model must be frozen");
  const Tensor feature = forward(perception, image);
  const Tensor mu = forward(policy, feature);
  ActResult out;
  out.z = VecX<float>(kLatentDim);
  if (mode == ActMode::Mean) {
    for (int k = 0; k < kLatentDim; ++k) out.z[k] = mu.data[k];
    out.logp = 0.0;
  } else {
    const VecX<float> sigma = policy_sigma(policy, sigma_floor);
    for (int k = 0; k < kLatentDim; ++k)
      out.z[k] = static_cast<float>(mu.data[k] + sigma[k] * rng.normal());
    out.logp = gaussian_logp(out.z, mu, sigma);
  }
  out.traj = decode(vae, out.z);
  return out;
}

EpisodeBatch collect_episodes(const Net& perception, const Net& policy,
                              const TrajVae& vae, sim::Task task, int n, Rng& rng,
                              float sigma_floor) {
  if (n < 1) throw Error("collect_episodes: n must be >= 1");
  std::vector<std::uint64_t> seeds(n);
  for (int i = 0; i < n; ++i) seeds[i] = rng.next_u64();
  EpisodeBatch batch(n);
  parallel_for(n, [&](std::size_t i) {
    Rng ep_rng = derive_rng(seeds[i], "episode");
    Episode& ep = batch[i];
    ep.scene = sim::sample_scene(task, sim::DomainKind::SourcePlain, std::nullopt,
                                 seeds[i]);
    ep.image = sim::render(ep.scene);
    ActResult a = act(perception, policy, vae, ep.image, ActMode::Sample, ep_rng,
                      sigma_floor);
    ep.z = a.z;
    ep.logp = a.logp;
    ep.reward = sim::score(sim::execute(a.traj, ep.scene), ep.scene);
  });
  return batch;
}

void ppo_update(Net& perception, Net& policy, Adam& opt_p, Adam& opt_pi,
                const EpisodeBatch& batch, const PpoConfig& cfg) {
  if (batch.empty()) throw Error("ppo_update: empty batch");
  const int n = static_cast<int>(batch.size());
  double mean_r = 0.0;
  for (const Episode& ep : batch) mean_r += ep.reward;
  mean_r /= n;
  std::vector<double> adv(n);
  bool any_adv = false;
  for (int i = 0; i < n; ++i) {
    adv[i] = batch[i].reward - mean_r;
    if (adv[i] != 0.0) any_adv = true;
  }
  if (!any_adv) return;  // zero policy gradient; leave parameters untouched

  struct PerEpisode {
    bool active = false;
    Backprop pi_bp, p_bp;
    Tensor logstd_g;
  };

  const Tensor& logstd_t = policy.params.at("logstd");
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const VecX<float> sigma = policy_sigma(policy, cfg.sigma_floor);
    std::vector<PerEpisode> per(n);
    parallel_for(n, [&](std::size_t i) {
      const Episode& ep = batch[i];
      Trace p_trace, pi_trace;
      const Tensor feature = forward(perception, ep.image, &p_trace);
      const Tensor mu = forward(policy, feature, &pi_trace);
      const double logp_new = gaussian_logp(ep.z, mu, sigma);
      const double ratio = std::exp(logp_new - ep.logp);
      const double clipped = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
      // loss = -mean(min(ratio*A, clipped*A)); gradient flows only through the
      // unclipped branch when it is the active minimum
      if (ratio * adv[i] > clipped * adv[i]) return;
      per[i].active = true;
      const double dlogp = -ratio * adv[i] / n;
      Tensor dmu(mu.shape);
      per[i].logstd_g = Tensor({kLatentDim});
      for (int k = 0; k < kLatentDim; ++k) {
        const double d = (static_cast<double>(ep.z[k]) - mu.data[k]) /
                         (static_cast<double>(sigma[k]) * sigma[k]);
        dmu.data[k] = static_cast<float>(dlogp * d);
        // d logp / d logstd = (z-mu)^2/sigma^2 - 1, zero where the floor binds
        if (std::exp(logstd_t.data[k]) > cfg.sigma_floor) {
          const double zs = (static_cast<double>(ep.z[k]) - mu.data[k]) / sigma[k];
          per[i].logstd_g.data[k] = static_cast<float>(dlogp * (zs * zs - 1.0));
        }
      }
      per[i].pi_bp = backward(policy, pi_trace, dmu);
      per[i].p_bp = backward(perception, p_trace, per[i].pi_bp.input_grad);
    });

    GradAccum acc_p, acc_pi;
    Tensor logstd_grad({kLatentDim});
    for (int i = 0; i < n; ++i) {  // reduction in batch-index order
      if (!per[i].active) continue;
      acc_pi.add(per[i].pi_bp.grads);
      acc_p.add(per[i].p_bp.grads);
      logstd_grad.data += per[i].logstd_g.data;
    }
    if (acc_pi.empty()) continue;  // every sample clipped out
    ParamSet pi_grads = acc_pi.mean(1.0);
    pi_grads.insert("logstd", logstd_grad);
    const AdamHp hp{cfg.lr, 0.9, 0.999, 1e-8};
    adam_step(opt_pi, policy.params, pi_grads, hp);
    adam_step(opt_p, perception.params, acc_p.mean(1.0), hp);
  }
}

double evaluate_policy(const Net& perception, const Net& policy, const TrajVae& vae,
                       sim::Task task, sim::DomainKind domain, int n,
                       std::uint64_t seed) {
  std::vector<double> scores(n);
  parallel_for(n, [&](std::size_t i) {
    const std::uint64_t s = derive_seed(seed, "eval." + std::to_string(i));
    sim::SceneSpec scene = sim::sample_scene(task, domain, std::nullopt, s);
    const sim::Image img = sim::render(scene);
    Rng dummy(0);
    ActResult a = act(perception, policy, vae, img, ActMode::Mean, dummy);
    scores[i] = sim::score(sim::execute(a.traj, scene), scene);
  });
  double total = 0.0;
  for (double v : scores) total += v;
  return total / n;
}

RlResult train_policy(const TrajVae& vae, const RlConfig& cfg) {
  if (!vae.frozen) throw Error("train_policy: trajectory model must be frozen");
  Rng init_rng = derive_rng(cfg.seed, "rl.init");
  Rng collect_rng = derive_rng(cfg.seed, "rl.collect");

  RlResult res;
  res.perception = build_perception(init_rng);
  res.policy = build_policy_net(kFeatureDim, cfg.sigma_init, init_rng);
  Adam opt_p, opt_pi;

  double last_eval = 0.0;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    EpisodeBatch batch = collect_episodes(res.perception, res.policy, vae, cfg.task,
                                          cfg.batch, collect_rng, cfg.ppo.sigma_floor);
    ppo_update(res.perception, res.policy, opt_p, opt_pi, batch, cfg.ppo);

    double mean_r = 0.0;
    for (const Episode& ep : batch) mean_r += ep.reward;
    mean_r /= batch.size();

    if (!res.sigma_collapse_flagged) {
      const Tensor& logstd = res.policy.params.at("logstd");
      for (int k = 0; k < kLatentDim; ++k) {
        if (std::exp(logstd.data[k]) < 1e-3f) {
          res.sigma_collapse_flagged = true;
          std::cerr << "train_policy: warning: premature sigma collapse at iteration "
                    << iter << "\n";
          break;
        }
      }
    }

    if ((iter + 1) % cfg.eval_every == 0) {
      last_eval = evaluate_policy(res.perception, res.policy, vae, cfg.task,
                                  sim::DomainKind::SourcePlain, cfg.eval_n,
                                  derive_seed(cfg.seed, "rl.eval." + std::to_string(iter)));
    }
    res.curve.push_back({iter, mean_r, last_eval});

    if (last_eval >= cfg.success_target + 0.02) break;  // early stop, verified below
  }

  res.final_eval = evaluate_policy(res.perception, res.policy, vae, cfg.task,
                                   sim::DomainKind::SourcePlain, 200,
                                   derive_seed(cfg.seed, "rl.final"));
  if (res.final_eval < cfg.success_target)
    throw RlError("train_policy: final mean-mode success " +
                      std::to_string(res.final_eval) + " below target " +
                      std::to_string(cfg.success_target) + " after " +
                      std::to_string(res.curve.size()) + " iterations",
                  res.curve);
  return res;
}

std::string curve_to_csv(const std::vector<CurveRow>& curve) {
  std::ostringstream os;
  os << "iteration,mean_reward,mean_mode_eval\n";
  char line[128];
  for (const CurveRow& r : curve) {
    std::snprintf(line, sizeof(line), "%d,%.9g,%.9g\n", r.iteration, r.mean_reward,
                  r.mean_mode_eval);
    os << line;
  }
  return os.str();
}

}  // namespace cb
