#include "cb/vae.hpp"

#include <cmath>

#include "cb/checkpoint.hpp"
#include "cb/gradaccum.hpp"
#include "cb/io.hpp"
#include "cb/optim.hpp"

namespace cb {

namespace {

// Trajectories live in [-0.08, 0.08] per element; the VAE trains on values
// scaled by 1/kStepBound for better conditioning.
constexpr double kScale = 1.0 / sim::kStepBound;
constexpr int kTrajElems = sim::kTrajLen * sim::kActionDim;

Net build_encoder(Rng& rng) {
  return NetBuilder({kTrajElems}, rng)
      .dense(128).relu()
      .dense(128).relu()
      .dense(2 * kLatentDim)
      .build();
}

Net build_decoder(Rng& rng) {
  return NetBuilder({kLatentDim}, rng)
      .dense(128).relu()
      .dense(128).relu()
      .dense(kTrajElems)
      .build();
}

Tensor scaled_input(const sim::Trajectory& t) {
  Tensor x = sim::traj_to_tensor(t);
  x.data *= static_cast<float>(kScale);
  return x;
}

}  // namespace

TrajVae train_vae(const std::vector<sim::Trajectory>& demos, const VaeConfig& cfg,
                  VaeTrainStats* stats) {
  if (demos.size() < 500)
    throw Error("train_vae: need at least 500 demo trajectories, got " +
                std::to_string(demos.size()));

  Rng init_rng = derive_rng(cfg.seed, "vae.init");
  Rng data_rng = derive_rng(cfg.seed, "vae.data");

  TrajVae vae;
  vae.encoder = build_encoder(init_rng);
  vae.decoder = build_decoder(init_rng);

  // Held-out split: deterministic shuffle, last fraction held out.
  std::vector<int> order(demos.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  for (std::size_t i = order.size() - 1; i > 0; --i)
    std::swap(order[i], order[data_rng.index(i + 1)]);
  const int holdout_n = std::max(1, static_cast<int>(demos.size() * cfg.holdout_frac));
  const int train_n = static_cast<int>(demos.size()) - holdout_n;

  std::vector<Tensor> inputs(demos.size());
  for (std::size_t i = 0; i < demos.size(); ++i) inputs[i] = scaled_input(demos[i]);

  Adam opt_enc, opt_dec;
  const AdamHp hp{cfg.lr, 0.9, 0.999, 1e-8};

  VaeTrainStats local;
  VaeTrainStats& st = stats ? *stats : local;
  double last_finite = 0.0;

  const int warmup_epochs = std::max(1, cfg.epochs / 5);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double beta = cfg.beta_kl * std::min(1.0, static_cast<double>(epoch + 1) / warmup_epochs);
    // fresh pass order each epoch
    std::vector<int> pass(order.begin(), order.begin() + train_n);
    for (int i = train_n - 1; i > 0; --i)
      std::swap(pass[i], pass[data_rng.index(i + 1)]);

    double epoch_loss = 0.0;
    long seen = 0;
    for (int start = 0; start < train_n; start += cfg.batch) {
      const int bsz = std::min(cfg.batch, train_n - start);
      GradAccum acc_enc, acc_dec;
      double batch_loss = 0.0;
      for (int bi = 0; bi < bsz; ++bi) {
        const Tensor& x = inputs[pass[start + bi]];
        Trace enc_trace;
        Tensor enc_out = forward(vae.encoder, x, &enc_trace);
        VecX<float> eps(kLatentDim);
        Tensor z({kLatentDim});
        double kl = 0.0;
        for (int k = 0; k < kLatentDim; ++k) {
          const double mu = enc_out.data[k];
          const double logvar = enc_out.data[kLatentDim + k];
          eps[k] = static_cast<float>(data_rng.normal());
          z.data[k] = static_cast<float>(mu + std::exp(0.5 * logvar) * eps[k]);
          kl += -0.5 * (1.0 + logvar - mu * mu - std::exp(logvar));
        }
        Trace dec_trace;
        Tensor recon = forward(vae.decoder, z, &dec_trace);
        double recon_loss = 0.0;
        Tensor d_recon(recon.shape);
        for (int k = 0; k < kTrajElems; ++k) {
          const double d = static_cast<double>(recon.data[k]) - x.data[k];
          recon_loss += d * d;
          d_recon.data[k] = static_cast<float>(2.0 * d);
        }
        batch_loss += recon_loss + beta * kl;

        Backprop dec_bp = backward(vae.decoder, dec_trace, d_recon);
        acc_dec.add(dec_bp.grads);
        Tensor up_enc({2 * kLatentDim});
        for (int k = 0; k < kLatentDim; ++k) {
          const double mu = enc_out.data[k];
          const double logvar = enc_out.data[kLatentDim + k];
          const double dz = dec_bp.input_grad.data[k];
          up_enc.data[k] = static_cast<float>(dz + beta * mu);
          up_enc.data[kLatentDim + k] = static_cast<float>(
              dz * 0.5 * std::exp(0.5 * logvar) * eps[k] +
              beta * 0.5 * (std::exp(logvar) - 1.0));
        }
        Backprop enc_bp = backward(vae.encoder, enc_trace, up_enc);
        acc_enc.add(enc_bp.grads);
      }
      adam_step(opt_enc, vae.encoder.params, acc_enc.mean(bsz), hp);
      adam_step(opt_dec, vae.decoder.params, acc_dec.mean(bsz), hp);
      epoch_loss += batch_loss;
      seen += bsz;
    }
    epoch_loss /= static_cast<double>(seen);
    if (!std::isfinite(epoch_loss))
      throw NumericError("train_vae diverged at epoch " + std::to_string(epoch) +
                         "; last finite epoch loss " + std::to_string(last_finite));
    last_finite = epoch_loss;
    st.epoch_loss.push_back(epoch_loss);
    st.epochs_run = epoch + 1;
  }

  vae.frozen = true;

  // Held-out reconstruction through the deterministic mu-path, in raw units.
  double hold_mse = 0.0;
  for (int i = train_n; i < static_cast<int>(demos.size()); ++i) {
    const sim::Trajectory& t = demos[order[i]];
    auto [mu, sigma] = encode(vae, t);
    const sim::Trajectory rec = decode(vae, mu);
    for (int r = 0; r < sim::kTrajLen; ++r)
      for (int c = 0; c < sim::kActionDim; ++c) {
        const double d = static_cast<double>(rec.u(r, c)) - t.u(r, c);
        hold_mse += d * d;
      }
  }
  hold_mse /= static_cast<double>(holdout_n) * kTrajElems;
  st.holdout_mse = hold_mse;
  if (hold_mse > cfg.holdout_mse_max)
    throw Error("train_vae: held-out reconstruction MSE " + std::to_string(hold_mse) +
                " exceeds bound " + std::to_string(cfg.holdout_mse_max));
  return vae;
}

std::pair<VecX<float>, VecX<float>> encode(const TrajVae& vae, const sim::Trajectory& traj) {
  if (traj.u.rows() != sim::kTrajLen)
    throw ShapeError("encode: trajectory length " + std::to_string(traj.u.rows()) +
                     " != " + std::to_string(sim::kTrajLen));
  const Tensor out = forward(vae.encoder, scaled_input(traj));
  VecX<float> mu(kLatentDim), sigma(kLatentDim);
  for (int k = 0; k < kLatentDim; ++k) {
    mu[k] = out.data[k];
    sigma[k] = std::exp(0.5f * out.data[kLatentDim + k]);
  }
  return {mu, sigma};
}

sim::Trajectory decode(const TrajVae& vae, const VecX<float>& z) {
  if (!vae.frozen) throw Error("decode: model must be frozen (trained) first");
  if (z.size() != kLatentDim)
    throw ShapeError("decode: latent must have dim " + std::to_string(kLatentDim));
  if (!z.allFinite()) throw NumericError("decode: non-finite latent");
  Tensor zin({kLatentDim});
  for (int k = 0; k < kLatentDim; ++k) zin.data[k] = z[k];
  const Tensor out = forward(vae.decoder, zin);
  sim::Trajectory traj;
  for (int t = 0; t < sim::kTrajLen; ++t) {
    double ux = out.data[t * sim::kActionDim] / kScale;
    double uy = out.data[t * sim::kActionDim + 1] / kScale;
    const double norm = std::sqrt(ux * ux + uy * uy);
    if (norm > sim::kStepBound) {
      ux *= sim::kStepBound / norm;
      uy *= sim::kStepBound / norm;
    }
    traj.u(t, 0) = static_cast<float>(ux);
    traj.u(t, 1) = static_cast<float>(uy);
  }
  return traj;
}

std::uint64_t vae_param_hash(const TrajVae& vae) {
  return hash_combine(param_hash(vae.encoder), param_hash(vae.decoder));
}

ParamSet vae_to_params(const TrajVae& vae) {
  ParamSet ps;
  add_prefixed(ps, "enc", vae.encoder.params);
  add_prefixed(ps, "dec", vae.decoder.params);
  return ps;
}

TrajVae vae_from_params(const ParamSet& ps) {
  Rng dummy(0);
  TrajVae vae;
  vae.encoder = build_encoder(dummy);
  vae.decoder = build_decoder(dummy);
  load_net_params(vae.encoder, take_prefixed(ps, "enc"));
  load_net_params(vae.decoder, take_prefixed(ps, "dec"));
  vae.frozen = true;
  return vae;
}

void save_demos(const std::string& path, const std::vector<sim::Trajectory>& demos) {
  BinWriter w;
  w.u32(static_cast<std::uint32_t>(demos.size()));
  w.u32(sim::kTrajLen);
  w.u32(sim::kActionDim);
  for (const auto& d : demos)
    for (int t = 0; t < sim::kTrajLen; ++t)
      for (int c = 0; c < sim::kActionDim; ++c) w.f32(d.u(t, c));
  write_file_atomic(path, w.buffer());
}

std::vector<sim::Trajectory> load_demos(const std::string& path) {
  const std::string bytes = read_file(path);
  BinReader r(bytes, path);
  const std::uint32_t count = r.u32();
  const std::uint32_t t_len = r.u32();
  const std::uint32_t m_dim = r.u32();
  if (t_len != sim::kTrajLen || m_dim != sim::kActionDim)
    throw IoError(path + ": demo corpus is " + std::to_string(t_len) + "x" +
                  std::to_string(m_dim) + ", expected " + std::to_string(sim::kTrajLen) +
                  "x" + std::to_string(sim::kActionDim));
  std::vector<sim::Trajectory> demos(count);
  for (auto& d : demos)
    for (int t = 0; t < sim::kTrajLen; ++t)
      for (int c = 0; c < sim::kActionDim; ++c) d.u(t, c) = r.f32();
  r.expect_end();
  return demos;
}

std::vector<sim::Trajectory> make_demo_corpus(int count, std::uint64_t seed) {
  Rng rng = derive_rng(seed, "demos");
  std::vector<sim::Trajectory> demos;
  demos.reserve(count);
  for (int i = 0; i < count; ++i) {
    // goal anywhere in the placeable region; a scene is synthesized so the
    // oracle has a goal point to reach
    sim::SceneSpec scene;
    scene.task = sim::Task::Picking;
    scene.domain = sim::DomainKind::SourcePlain;
    scene.seed = seed;
    sim::ObjectSpec obj = sim::template_object(sim::Task::Picking);
    obj.x = static_cast<float>(rng.uniform(0.12, 0.88));
    obj.y = static_cast<float>(rng.uniform(0.12, 0.88));
    scene.objects.push_back(obj);
    demos.push_back(sim::oracle_trajectory(scene, rng));
  }
  return demos;
}

}  // namespace cb
