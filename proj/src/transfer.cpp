#include "cb/transfer.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <sstream>

#include "cb/checkpoint.hpp"
#include "cb/gradaccum.hpp"
#include "cb/loss.hpp"
#include "cb/policy.hpp"

namespace cb {

const char* variant_name(MethodVariant v) {
  switch (v) {
    case MethodVariant::Full: return "full";
    case MethodVariant::Adda: return "adda";
    case MethodVariant::AddaExtrainfo: return "adda_extrainfo";
    case MethodVariant::Gplac: return "gplac";
    case MethodVariant::GplacExtrainfo: return "gplac_extrainfo";
  }
  return "?";
}

MethodVariant parse_variant(const std::string& s) {
  for (MethodVariant v : all_variants())
    if (s == variant_name(v)) return v;
  throw ConfigError("unknown variant '" + s +
                    "' (valid: full, adda, adda_extrainfo, gplac, gplac_extrainfo)");
}

const std::vector<MethodVariant>& all_variants() {
  static const std::vector<MethodVariant> v = {
      MethodVariant::Full, MethodVariant::Adda, MethodVariant::AddaExtrainfo,
      MethodVariant::Gplac, MethodVariant::GplacExtrainfo};
  return v;
}

LossWeights variant_weights(MethodVariant v) {
  switch (v) {
    case MethodVariant::Full: return {1, 1, 1};
    case MethodVariant::Adda:
    case MethodVariant::AddaExtrainfo: return {1, 0, 1};
    case MethodVariant::Gplac:
    case MethodVariant::GplacExtrainfo: return {1, 1, 0};
  }
  return {1, 1, 1};
}

bool variant_extrainfo(MethodVariant v) {
  return v == MethodVariant::AddaExtrainfo || v == MethodVariant::GplacExtrainfo;
}

bool variant_spatial_head(MethodVariant v) {
  return v == MethodVariant::Gplac || v == MethodVariant::GplacExtrainfo;
}

AuxNets build_aux_nets(int feature_dim, Rng& rng) {
  AuxNets aux;
  aux.discriminator = NetBuilder({feature_dim}, rng)
                          .dense(64).relu()
                          .dense(64).relu()
                          .dense(1)
                          .build();
  aux.classifier = NetBuilder({feature_dim}, rng)
                       .dense(64).relu()
                       .dense(64).relu()
                       .dense(1)
                       .build();
  return aux;
}

void build_variant_nets(MethodVariant v, const Net& perception_rl, const Net& policy_rl,
                        Net& perception_out, Net& policy_out, Rng& rng) {
  if (!variant_spatial_head(v)) {
    perception_out = perception_rl;
    policy_out = policy_rl;
    return;
  }
  // GPLAC head: reuse the conv trunk, widen nothing (the final conv already
  // has 16 channels), feed the raw conv map to a spatial softmax.
  perception_out = build_perception_spatial(rng);
  for (const auto& [name, t] : perception_rl.params.tensors) {
    if (perception_out.params.has(name)) {
      if (perception_out.params.at(name).shape != t.shape)
        throw Error("build_variant_nets: checkpoint/architecture mismatch for " + name);
      perception_out.params.at(name) = t;
    }
  }
  const float sigma_init = std::exp(policy_rl.params.at("logstd").data[0]);
  policy_out = build_policy_net(kGplacFeatureDim, sigma_init, rng);
  for (auto& [name, t] : policy_out.params.tensors) {
    if (!policy_rl.params.has(name)) continue;
    const Tensor& src = policy_rl.params.at(name);
    if (src.shape == t.shape) {
      t = src;
    } else {
      std::cerr << "build_variant_nets: reinitializing " << name
                << " (dims changed for spatial head)\n";
    }
  }
}

namespace {

struct Phase {
  double loss = 0.0;
  GradAccum p_grads;   // perception
  GradAccum net_grads; // the phase's own network (pi / C / D)
};

// mean ||mu(P(x)) - z*||^2 over the batch; grads into both nets
Phase task_phase(const Net& perception, const Net& policy,
                 const std::vector<Tensor>& images,
                 const std::vector<const SourceSample*>& batch) {
  Phase ph;
  const int n = static_cast<int>(batch.size());
  if (n == 0) throw Error("task step: empty batch");
  struct Slot { double loss; Backprop pi_bp, p_bp; };
  std::vector<Slot> slots(n);
  parallel_for(n, [&](std::size_t i) {
    Trace p_trace, pi_trace;
    const Tensor feature = forward(perception, images[i], &p_trace);
    const Tensor mu = forward(policy, feature, &pi_trace);
    double loss = 0.0;
    Tensor dmu(mu.shape);
    for (int k = 0; k < kLatentDim; ++k) {
      const double d = static_cast<double>(mu.data[k]) - batch[i]->z_star[k];
      loss += d * d / kLatentDim;
      dmu.data[k] = static_cast<float>(2.0 * d / kLatentDim / n);
    }
    slots[i].loss = loss;
    slots[i].pi_bp = backward(policy, pi_trace, dmu);
    slots[i].p_bp = backward(perception, p_trace, slots[i].pi_bp.input_grad);
  });
  for (const Slot& s : slots) {
    ph.loss += s.loss;
    ph.net_grads.add(s.pi_bp.grads);
    ph.p_grads.add(s.p_bp.grads);
  }
  ph.loss /= n;
  return ph;
}

// mean BCE(C(P(x)), label); grads into C and P
Phase classifier_phase(const Net& perception, const Net& classifier,
                       const std::vector<Tensor>& images,
                       const std::vector<int>& labels) {
  Phase ph;
  const int n = static_cast<int>(images.size());
  if (n == 0) throw Error("classifier step: empty batch");
  struct Slot { double loss; Backprop c_bp, p_bp; };
  std::vector<Slot> slots(n);
  parallel_for(n, [&](std::size_t i) {
    Trace p_trace, c_trace;
    const Tensor feature = forward(perception, images[i], &p_trace);
    const Tensor logit = forward(classifier, feature, &c_trace);
    LossGrad lg = bce_with_logits(logit, labels[i]);
    slots[i].loss = lg.value;
    lg.grad.data[0] /= static_cast<float>(n);
    slots[i].c_bp = backward(classifier, c_trace, lg.grad);
    slots[i].p_bp = backward(perception, p_trace, slots[i].c_bp.input_grad);
  });
  for (const Slot& s : slots) {
    ph.loss += s.loss;
    ph.net_grads.add(s.c_bp.grads);
    ph.p_grads.add(s.p_bp.grads);
  }
  ph.loss /= n;
  return ph;
}

struct DiscStats {
  double loss = 0.0;
  double acc = 0.0;
};

// L_D = mean BCE(D(P(xs)), 1) + mean BCE(D(P(xt)), 0); perception frozen,
// only D gradients are produced. Accuracy is measured before the update.
DiscStats discriminator_phase(const Net& perception, Net& discriminator, Adam& opt_d,
                              double lr_d, const std::vector<Tensor>& src_images,
                              const std::vector<Tensor>& tgt_images) {
  const int ns = static_cast<int>(src_images.size());
  const int nt = static_cast<int>(tgt_images.size());
  if (ns == 0 || nt == 0) throw Error("discriminator step: empty batch");
  struct Slot { double loss; int correct; Backprop d_bp; };
  std::vector<Slot> slots(ns + nt);
  parallel_for(ns + nt, [&](std::size_t i) {
    const bool is_src = i < static_cast<std::size_t>(ns);
    const Tensor& img = is_src ? src_images[i] : tgt_images[i - ns];
    const int label = is_src ? 1 : 0;
    const int n_side = is_src ? ns : nt;
    const Tensor feature = forward(perception, img);  // no trace: P stays frozen
    Trace d_trace;
    const Tensor logit = forward(discriminator, feature, &d_trace);
    LossGrad lg = bce_with_logits(logit, label);
    slots[i].loss = lg.value / n_side;
    slots[i].correct = ((logit.data[0] > 0.0f) == (label == 1)) ? 1 : 0;
    lg.grad.data[0] /= static_cast<float>(n_side);
    slots[i].d_bp = backward(discriminator, d_trace, lg.grad);
  });
  DiscStats st;
  GradAccum acc;
  long correct = 0;
  for (const Slot& s : slots) {
    st.loss += s.loss;
    correct += s.correct;
    acc.add(s.d_bp.grads);
  }
  st.acc = static_cast<double>(correct) / (ns + nt);
  adam_step(opt_d, discriminator.params, acc.mean(1.0), AdamHp{lr_d, 0.9, 0.999, 1e-8});
  return st;
}

// Non-saturating generator-side objective: push target features toward the
// discriminator's source label. Only P gradients are produced.
Phase adversarial_phase(const Net& perception, const Net& discriminator,
                        const std::vector<Tensor>& tgt_images) {
  Phase ph;
  const int n = static_cast<int>(tgt_images.size());
  if (n == 0) throw Error("adversarial step: empty batch");
  struct Slot { double loss; Backprop p_bp; };
  std::vector<Slot> slots(n);
  parallel_for(n, [&](std::size_t i) {
    Trace p_trace;
    const Tensor feature = forward(perception, tgt_images[i], &p_trace);
    Trace d_trace;
    const Tensor logit = forward(discriminator, feature, &d_trace);
    LossGrad lg = bce_with_logits(logit, 1);
    slots[i].loss = lg.value;
    lg.grad.data[0] /= static_cast<float>(n);
    const Backprop d_bp = backward(discriminator, d_trace, lg.grad);  // D grads discarded
    slots[i].p_bp = backward(perception, p_trace, d_bp.input_grad);
  });
  for (const Slot& s : slots) {
    ph.loss += s.loss;
    ph.p_grads.add(s.p_bp.grads);
  }
  ph.loss /= n;
  return ph;
}

}  // namespace

TransferResult transfer_train(const DatasetBundle& bundle, const Net& perception0,
                              const Net& policy0, const TrajVae& vae, MethodVariant v,
                              const TransferConfig& cfg) {
  if (!vae.frozen) throw Error("transfer_train: trajectory model must be frozen");
  if (bundle.source.empty()) throw Error("transfer_train: bundle has no source data");
  const LossWeights w = cfg.weights;
  const std::uint64_t vae_hash_before = vae_param_hash(vae);

  TransferResult res;
  res.perception = perception0;
  res.policy = policy0;
  Rng init_rng = derive_rng(cfg.seed, "transfer.init");
  res.aux = build_aux_nets(res.perception.out_shape[0], init_rng);

  // Pre-rendered images. Target holdout is excluded from every training use.
  std::vector<Tensor> src_images(bundle.source.size());
  parallel_for(bundle.source.size(),
               [&](std::size_t i) { src_images[i] = bundle.source[i].image(); });
  std::vector<Tensor> tgt_images(bundle.target.size());
  parallel_for(bundle.target.size(),
               [&](std::size_t i) { tgt_images[i] = bundle.target[i].image(); });

  std::vector<int> tgt_order(bundle.target.size());
  for (std::size_t i = 0; i < tgt_order.size(); ++i) tgt_order[i] = static_cast<int>(i);
  Rng split_rng = derive_rng(cfg.seed, "transfer.split");
  for (std::size_t i = tgt_order.size(); i > 1; --i)
    std::swap(tgt_order[i - 1], tgt_order[split_rng.index(i)]);
  const std::size_t holdout_n =
      static_cast<std::size_t>(tgt_order.size() * cfg.holdout_frac);
  res.holdout_target.assign(tgt_order.end() - holdout_n, tgt_order.end());
  tgt_order.resize(tgt_order.size() - holdout_n);

  std::vector<int> tgt_label0, tgt_label1;
  for (int idx : tgt_order)
    (bundle.target[idx].label == 0 ? tgt_label0 : tgt_label1).push_back(idx);
  if (w.c > 0 && (tgt_label0.empty() || tgt_label1.empty()))
    throw Error("transfer_train: classifier needs both labels in the target data");

  Rng rng_src = derive_rng(cfg.seed, "transfer.src");
  Rng rng_tgt = derive_rng(cfg.seed, "transfer.tgt");
  Rng rng_disc = derive_rng(cfg.seed, "transfer.disc");

  Adam opt_p, opt_pi, opt_d, opt_c;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const char* component = "";

  try {
    for (int step = 0; step < cfg.steps; ++step) {
      TransferLogRow row;
      row.step = step;
      row.l_task = row.l_c = row.l_d_disc = row.l_d_gen = row.d_acc = nan;

      Phase task, cls, adv;
      if (w.task > 0) {
        component = "task";
        std::vector<const SourceSample*> batch(cfg.batch);
        std::vector<Tensor> imgs(cfg.batch);
        for (int i = 0; i < cfg.batch; ++i) {
          const std::size_t idx = rng_src.index(bundle.source.size());
          batch[i] = &bundle.source[idx];
          imgs[i] = src_images[idx];
        }
        task = task_phase(res.perception, res.policy, imgs, batch);
        row.l_task = task.loss;
      }

      if (w.c > 0) {
        component = "classifier";
        // label-balanced batch by resampling
        std::vector<Tensor> imgs(cfg.batch);
        std::vector<int> labels(cfg.batch);
        for (int i = 0; i < cfg.batch; ++i) {
          const bool clutter_only = i % 2 == 1;
          const auto& pool = clutter_only ? tgt_label1 : tgt_label0;
          const int idx = pool[rng_tgt.index(pool.size())];
          imgs[i] = tgt_images[idx];
          labels[i] = bundle.target[idx].label;
        }
        cls = classifier_phase(res.perception, res.aux.classifier, imgs, labels);
        row.l_c = cls.loss;
      }

      if (w.d > 0) {
        component = "discriminator";
        const std::uint64_t p_hash = param_hash(res.perception.params);
        const std::uint64_t pi_hash = param_hash(res.policy.params);
        DiscStats ds{};
        for (int k = 0; k < cfg.d_steps_per_p_step; ++k) {
          std::vector<Tensor> s_imgs(cfg.batch), t_imgs(cfg.batch);
          for (int i = 0; i < cfg.batch; ++i) {
            s_imgs[i] = src_images[rng_disc.index(src_images.size())];
            t_imgs[i] = tgt_images[tgt_order[rng_disc.index(tgt_order.size())]];
          }
          ds = discriminator_phase(res.perception, res.aux.discriminator, opt_d,
                                   cfg.lr_d, s_imgs, t_imgs);
        }
        row.l_d_disc = ds.loss;
        row.d_acc = ds.acc;
        if (cfg.debug_checks &&
            (param_hash(res.perception.params) != p_hash ||
             param_hash(res.policy.params) != pi_hash))
          throw Error("gradient isolation violated: discriminator step touched P/pi");

        component = "adversarial";
        const std::uint64_t d_hash = param_hash(res.aux.discriminator.params);
        std::vector<Tensor> t_imgs(cfg.batch);
        for (int i = 0; i < cfg.batch; ++i)
          t_imgs[i] = tgt_images[tgt_order[rng_tgt.index(tgt_order.size())]];
        adv = adversarial_phase(res.perception, res.aux.discriminator, t_imgs);
        row.l_d_gen = adv.loss;
        if (cfg.debug_checks && param_hash(res.aux.discriminator.params) != d_hash)
          throw Error("gradient isolation violated: adversarial step touched D");
      }

      component = "commit";
      // single serialized commit: P sees the weighted sum of its components
      {
        GradAccum p_total;
        if (w.task > 0) p_total.add(task.p_grads.mean(1.0), w.task);
        if (w.c > 0) p_total.add(cls.p_grads.mean(1.0), w.c);
        if (w.d > 0) p_total.add(adv.p_grads.mean(1.0), w.d);
        if (!p_total.empty())
          adam_step(opt_p, res.perception.params, p_total.mean(1.0),
                    AdamHp{cfg.lr_p, 0.9, 0.999, 1e-8});
        if (w.task > 0)
          adam_step(opt_pi, res.policy.params, task.net_grads.mean(1.0),
                    AdamHp{cfg.lr_pi, 0.9, 0.999, 1e-8});
        if (w.c > 0) {
          GradAccum c_total;
          c_total.add(cls.net_grads.mean(1.0), w.c);
          adam_step(opt_c, res.aux.classifier.params, c_total.mean(1.0),
                    AdamHp{cfg.lr_c, 0.9, 0.999, 1e-8});
        }
      }

      row.total = (w.task > 0 ? w.task * row.l_task : 0.0) +
                  (w.c > 0 ? w.c * row.l_c : 0.0) +
                  (w.d > 0 ? w.d * row.l_d_gen : 0.0);
      if (!std::isfinite(row.total))
        throw NumericError("non-finite combined loss");
      res.log.push_back(row);
    }
  } catch (const NumericError& e) {
    throw NumericError("transfer_train aborted in " + std::string(component) +
                       " component at step " + std::to_string(res.log.size()) + ": " +
                       e.what());
  }

  if (vae_param_hash(vae) != vae_hash_before)
    throw Error("transfer_train: frozen trajectory model changed");
  return res;
}

std::string transfer_log_csv(const std::vector<TransferLogRow>& log) {
  std::ostringstream os;
  os << "step,l_task,l_c,l_d_disc,l_d_gen,d_acc\n";
  auto field = [](double v) {
    if (std::isnan(v)) return std::string();
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return std::string(buf);
  };
  for (const TransferLogRow& r : log)
    os << r.step << "," << field(r.l_task) << "," << field(r.l_c) << ","
       << field(r.l_d_disc) << "," << field(r.l_d_gen) << "," << field(r.d_acc) << "\n";
  return os.str();
}

ParamSet deployment_params(const Net& perception, const Net& policy) {
  ParamSet ps;
  add_prefixed(ps, "P", perception.params);
  add_prefixed(ps, "pi", policy.params);
  return ps;
}

double classifier_accuracy(const Net& perception, const Net& classifier,
                           const std::vector<LabeledImage>& samples) {
  if (samples.empty()) throw Error("classifier_accuracy: no samples");
  std::vector<char> correct(samples.size(), 0);
  parallel_for(samples.size(), [&](std::size_t i) {
    const Tensor f = forward(perception, samples[i].image());
    const Tensor logit = forward(classifier, f);
    const int pred = logit.data[0] > 0.0f ? 1 : 0;
    correct[i] = pred == samples[i].label ? 1 : 0;
  });
  long ok = 0;
  for (char c : correct) ok += c;
  return static_cast<double>(ok) / samples.size();
}

}  // namespace cb
