#include "cb/pipeline.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cb/checkpoint.hpp"
#include "cb/data.hpp"
#include "cb/eval.hpp"
#include "cb/io.hpp"

namespace fs = std::filesystem;

namespace cb {

LossWeights RunConfig::effective_weights() const {
  LossWeights w = variant_weights(variant);
  if (lambda_task >= 0) w.task = lambda_task;
  if (lambda_c >= 0) w.c = lambda_c;
  if (lambda_d >= 0) w.d = lambda_d;
  return w;
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_num(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": bad numeric value '" + v + "'");
  }
}

int parse_int(const std::string& key, const std::string& v) {
  const double d = parse_num(key, v);
  const int i = static_cast<int>(d);
  if (static_cast<double>(i) != d)
    throw ConfigError("config key " + key + ": expected integer, got '" + v + "'");
  return i;
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": expected 'section.key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key or value");

    if (key == "run.task") cfg.task = sim::parse_task(value);
    else if (key == "run.variant") cfg.variant = parse_variant(value);
    else if (key == "run.seed") cfg.seed = static_cast<std::uint64_t>(parse_num(key, value));
    else if (key == "run.out") cfg.out_dir = value;
    else if (key == "demos.count") cfg.demos_count = parse_int(key, value);
    else if (key == "vae.epochs") cfg.vae_epochs = parse_int(key, value);
    else if (key == "vae.batch") cfg.vae_batch = parse_int(key, value);
    else if (key == "vae.lr") cfg.vae_lr = parse_num(key, value);
    else if (key == "vae.beta_kl") cfg.vae_beta_kl = parse_num(key, value);
    else if (key == "rl.iterations") cfg.rl_iterations = parse_int(key, value);
    else if (key == "rl.batch") cfg.rl_batch = parse_int(key, value);
    else if (key == "rl.lr") cfg.rl_lr = parse_num(key, value);
    else if (key == "rl.eval_n") cfg.rl_eval_n = parse_int(key, value);
    else if (key == "rl.target") cfg.rl_target = parse_num(key, value);
    else if (key == "datasets.source_n") cfg.source_n = parse_int(key, value);
    else if (key == "datasets.per_object") cfg.per_object = parse_int(key, value);
    else if (key == "datasets.clutter_only") cfg.clutter_only = parse_int(key, value);
    else if (key == "transfer.steps") cfg.transfer_steps = parse_int(key, value);
    else if (key == "transfer.batch") cfg.transfer_batch = parse_int(key, value);
    else if (key == "transfer.lr_p") cfg.lr_p = parse_num(key, value);
    else if (key == "transfer.lr_pi") cfg.lr_pi = parse_num(key, value);
    else if (key == "transfer.lr_d") cfg.lr_d = parse_num(key, value);
    else if (key == "transfer.lr_c") cfg.lr_c = parse_num(key, value);
    else if (key == "transfer.d_steps") cfg.d_steps = parse_int(key, value);
    else if (key == "transfer.lambda_task") cfg.lambda_task = parse_num(key, value);
    else if (key == "transfer.lambda_c") cfg.lambda_c = parse_num(key, value);
    else if (key == "transfer.lambda_d") cfg.lambda_d = parse_num(key, value);
    else if (key == "eval.n_trials") cfg.eval_trials = parse_int(key, value);
    else if (key == "eval.feature_n") cfg.eval_feature_n = parse_int(key, value);
    else if (key == "eval.gap_n") cfg.eval_gap_n = parse_int(key, value);
    else throw ConfigError(origin + ":" + std::to_string(lineno) +
                           ": unknown config key '" + key + "'");
  }
  if (cfg.transfer_steps < 1) throw ConfigError("transfer.steps must be >= 1");
  if (cfg.lr_p <= 0 || cfg.lr_pi <= 0 || cfg.lr_d <= 0 || cfg.lr_c <= 0)
    throw ConfigError("transfer learning rates must be positive");
  if (cfg.eval_trials < 1) throw ConfigError("eval.n_trials must be >= 1");
  return cfg;
}

RunConfig load_config(const std::string& path) {
  return parse_config_text(read_file(path), path);
}

// ---------------------------------------------------------------------------
// manifest

Manifest::Manifest(std::string path) : path_(std::move(path)) {}

void Manifest::load() {
  entries_.clear();
  if (!fs::exists(path_)) return;
  std::ifstream in(path_);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    ManifestEntry e;
    std::string cfg_hex, content_hex;
    if (!(ls >> e.stage >> cfg_hex >> content_hex >> e.wall_ms)) continue;  // partial line
    try {
      e.cfg_hash = std::stoull(cfg_hex, nullptr, 16);
      e.content_hash = std::stoull(content_hex, nullptr, 16);
    } catch (const std::exception&) {
      continue;
    }
    std::string out;
    while (ls >> out) e.outputs.push_back(out);
    entries_[e.stage] = e;
  }
}

const ManifestEntry* Manifest::find(const std::string& stage) const {
  const auto it = entries_.find(stage);
  return it == entries_.end() ? nullptr : &it->second;
}

void Manifest::append(const ManifestEntry& e) {
  std::ofstream out(path_, std::ios::app);
  char head[80];
  std::snprintf(head, sizeof(head), "%s %016llx %016llx %ld", e.stage.c_str(),
                static_cast<unsigned long long>(e.cfg_hash),
                static_cast<unsigned long long>(e.content_hash), e.wall_ms);
  out << head;
  for (const std::string& o : e.outputs) out << " " << o;
  out << "\n";
  out.flush();
  entries_[e.stage] = e;
}

// ---------------------------------------------------------------------------
// stages

const std::vector<std::string> kStageOrder = {
    "gen-demos", "train-vae", "train-rl", "record-source",
    "gen-target", "transfer", "eval", "report"};

namespace {

std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Serialized stage-relevant config; the hash chain pulls in upstream hashes.
std::string stage_cfg_string(const RunConfig& c, const std::string& stage) {
  std::ostringstream os;
  os << "task=" << sim::task_name(c.task) << ";seed=" << c.seed << ";";
  if (stage == "gen-demos") {
    os << "count=" << c.demos_count;
  } else if (stage == "train-vae") {
    os << "epochs=" << c.vae_epochs << ";batch=" << c.vae_batch
       << ";lr=" << fmt_num(c.vae_lr) << ";beta=" << fmt_num(c.vae_beta_kl);
  } else if (stage == "train-rl") {
    os << "iters=" << c.rl_iterations << ";batch=" << c.rl_batch
       << ";lr=" << fmt_num(c.rl_lr) << ";eval_n=" << c.rl_eval_n
       << ";target=" << fmt_num(c.rl_target);
  } else if (stage == "record-source") {
    os << "n=" << c.source_n << ";extrainfo=" << variant_extrainfo(c.variant)
       << ";spatial=" << variant_spatial_head(c.variant);
  } else if (stage == "gen-target") {
    os << "per_object=" << c.per_object << ";clutter_only=" << c.clutter_only;
  } else if (stage == "transfer") {
    const LossWeights w = c.effective_weights();
    os << "variant=" << variant_name(c.variant) << ";steps=" << c.transfer_steps
       << ";batch=" << c.transfer_batch << ";lr_p=" << fmt_num(c.lr_p)
       << ";lr_pi=" << fmt_num(c.lr_pi) << ";lr_d=" << fmt_num(c.lr_d)
       << ";lr_c=" << fmt_num(c.lr_c) << ";d_steps=" << c.d_steps
       << ";w=" << fmt_num(w.task) << "," << fmt_num(w.c) << "," << fmt_num(w.d);
  } else if (stage == "eval") {
    os << "trials=" << c.eval_trials << ";feature_n=" << c.eval_feature_n
       << ";gap_n=" << c.eval_gap_n;
  } else if (stage == "report") {
    os << "v=1";
  }
  return os.str();
}

struct StageIo {
  const RunConfig& cfg;
  std::string dir;

  std::string path(const std::string& name) const { return dir + "/" + name; }
};

// Perception + policy checkpoint loaders shared by several stages.
void load_policy_checkpoint(const StageIo& io, const std::string& file, Net& perception,
                            Net& policy, bool spatial_head) {
  const ParamSet ps = load_checkpoint(io.path(file));
  Rng dummy(0);
  perception = spatial_head ? build_perception_spatial(dummy) : build_perception(dummy);
  const int feat = spatial_head ? kGplacFeatureDim : kFeatureDim;
  policy = build_policy_net(feat, 0.5f, dummy);
  load_net_params(perception, take_prefixed(ps, "P"));
  load_net_params(policy, take_prefixed(ps, "pi"));
}

void stage_gen_demos(const StageIo& io) {
  const auto demos =
      make_demo_corpus(io.cfg.demos_count, derive_seed(io.cfg.seed, "stage.demos"));
  save_demos(io.path("demos.bin"), demos);
}

void stage_train_vae(const StageIo& io) {
  const auto demos = load_demos(io.path("demos.bin"));
  VaeConfig vc;
  vc.epochs = io.cfg.vae_epochs;
  vc.batch = io.cfg.vae_batch;
  vc.lr = io.cfg.vae_lr;
  vc.beta_kl = io.cfg.vae_beta_kl;
  vc.seed = derive_seed(io.cfg.seed, "stage.vae");
  const TrajVae vae = train_vae(demos, vc);
  save_checkpoint(io.path("vae.ckpt"), vae_to_params(vae));
}

void stage_train_rl(const StageIo& io) {
  const TrajVae vae = vae_from_params(load_checkpoint(io.path("vae.ckpt")));
  RlConfig rc;
  rc.task = io.cfg.task;
  rc.iterations = io.cfg.rl_iterations;
  rc.batch = io.cfg.rl_batch;
  rc.ppo.lr = io.cfg.rl_lr;
  rc.eval_n = io.cfg.rl_eval_n;
  rc.success_target = io.cfg.rl_target;
  rc.seed = derive_seed(io.cfg.seed, "stage.rl");
  RlResult res;
  try {
    res = train_policy(vae, rc);
  } catch (const RlError& e) {
    write_file_atomic(io.path("rl_curve_failed.csv"), curve_to_csv(e.curve));
    throw;
  }
  save_checkpoint(io.path("rl.ckpt"), deployment_params(res.perception, res.policy));
  write_file_atomic(io.path("rl_curve.csv"), curve_to_csv(res.curve));
}

void stage_record_source(const StageIo& io) {
  const TrajVae vae = vae_from_params(load_checkpoint(io.path("vae.ckpt")));
  Net perception, policy;
  load_policy_checkpoint(io, "rl.ckpt", perception, policy, false);
  DatasetBundle bundle;
  bundle.task = io.cfg.task;
  bundle.seen = sim::seen_ids(io.cfg.task);
  bundle.unseen = sim::unseen_ids(io.cfg.task);
  bundle.source = record_source(perception, policy, vae, io.cfg.task, io.cfg.source_n,
                                variant_extrainfo(io.cfg.variant),
                                derive_seed(io.cfg.seed, "stage.source"));
  save_bundle(io.path("source.cbds"), bundle);
}

void stage_gen_target(const StageIo& io) {
  DatasetBundle bundle = load_bundle(io.path("source.cbds"));
  bundle.target = gen_target(io.cfg.task, io.cfg.per_object, io.cfg.clutter_only,
                             bundle.seen, derive_seed(io.cfg.seed, "stage.target"));
  save_bundle(io.path("bundle.cbds"), bundle);
}

void stage_transfer(const StageIo& io) {
  const TrajVae vae = vae_from_params(load_checkpoint(io.path("vae.ckpt")));
  const DatasetBundle bundle = load_bundle(io.path("bundle.cbds"));
  Net perception_rl, policy_rl;
  load_policy_checkpoint(io, "rl.ckpt", perception_rl, policy_rl, false);

  Rng build_rng = derive_rng(io.cfg.seed, "stage.transfer.build");
  Net perception, policy;
  build_variant_nets(io.cfg.variant, perception_rl, policy_rl, perception, policy,
                     build_rng);

  TransferConfig tc;
  tc.steps = io.cfg.transfer_steps;
  tc.batch = io.cfg.transfer_batch;
  tc.lr_p = io.cfg.lr_p;
  tc.lr_pi = io.cfg.lr_pi;
  tc.lr_d = io.cfg.lr_d;
  tc.lr_c = io.cfg.lr_c;
  tc.d_steps_per_p_step = io.cfg.d_steps;
  tc.weights = io.cfg.effective_weights();
  tc.seed = derive_seed(io.cfg.seed, "stage.transfer");

  const TransferResult res = transfer_train(bundle, perception, policy, vae,
                                            io.cfg.variant, tc);
  save_checkpoint(io.path("deploy.ckpt"), deployment_params(res.perception, res.policy));
  ParamSet aux;
  add_prefixed(aux, "D", res.aux.discriminator.params);
  add_prefixed(aux, "C", res.aux.classifier.params);
  save_checkpoint(io.path("aux.ckpt"), aux);
  write_file_atomic(io.path("transfer_log.csv"), transfer_log_csv(res.log));
  std::ostringstream hold;
  for (int idx : res.holdout_target) hold << idx << "\n";
  write_file_atomic(io.path("holdout.txt"), hold.str());
}

void stage_eval(const StageIo& io) {
  const TrajVae vae = vae_from_params(load_checkpoint(io.path("vae.ckpt")));
  const DatasetBundle bundle = load_bundle(io.path("bundle.cbds"));
  const bool spatial = variant_spatial_head(io.cfg.variant);
  Net perception, policy;
  load_policy_checkpoint(io, "deploy.ckpt", perception, policy, spatial);
  Net perception_rl, policy_rl;
  load_policy_checkpoint(io, "rl.ckpt", perception_rl, policy_rl, false);

  const std::uint64_t eval_seed = derive_seed(io.cfg.seed, "stage.eval");
  const std::string vname = variant_name(io.cfg.variant);
  const auto seen_reports = run_trials(perception, policy, vae, io.cfg.task,
                                       bundle.seen, io.cfg.eval_trials,
                                       derive_seed(eval_seed, "seen"), vname);
  write_file_atomic(io.path("eval_seen.csv"), reports_csv(seen_reports));
  if (!bundle.unseen.empty()) {
    const auto unseen_reports =
        unseen_eval(perception, policy, vae, io.cfg.task, bundle.unseen, bundle.seen,
                    io.cfg.eval_trials, derive_seed(eval_seed, "unseen"), vname);
    write_file_atomic(io.path("eval_unseen.csv"), reports_csv(unseen_reports));
  }

  // feature distribution projection, Fig.-6 style
  const FeatureCloud cloud = collect_feature_cloud(perception, io.cfg.task, bundle.seen,
                                                   io.cfg.eval_feature_n,
                                                   derive_seed(eval_seed, "cloud"));
  const MatX<double> emb = project_features(cloud.features, ProjectionMethod::Tsne,
                                            derive_seed(eval_seed, "tsne"));
  write_file_atomic(io.path("projection.csv"), projection_csv(emb, cloud.tags));
  write_file_atomic(io.path("projection.svg"), projection_svg(emb, cloud.tags));

  // discrepancy probes on fresh template vs task-object features, pre and post
  auto gap_features = [&](const Net& p) {
    const FeatureCloud c = collect_feature_cloud(p, io.cfg.task, bundle.seen,
                                                 io.cfg.eval_gap_n,
                                                 derive_seed(eval_seed, "gap"));
    MatX<float> src(io.cfg.eval_gap_n, c.features.cols());
    MatX<float> tgt(io.cfg.eval_gap_n, c.features.cols());
    int si = 0, ti = 0;
    for (Eigen::Index i = 0; i < c.features.rows(); ++i) {
      if (c.tags[i] == FeatureTag::Template) src.row(si++) = c.features.row(i);
      else if (c.tags[i] == FeatureTag::TaskObject) tgt.row(ti++) = c.features.row(i);
    }
    return std::make_pair(src, tgt);
  };
  const auto [pre_src, pre_tgt] = gap_features(perception_rl);
  const auto [post_src, post_tgt] = gap_features(perception);
  const DomainGap pre = domain_gap(pre_src, pre_tgt, derive_seed(eval_seed, "probe.pre"));
  const DomainGap post =
      domain_gap(post_src, post_tgt, derive_seed(eval_seed, "probe.post"));

  // classifier accuracy on the target samples held out of transfer training
  double cls_acc = -1.0;
  if (io.cfg.effective_weights().c > 0) {
    const std::string hold_text = read_file(io.path("holdout.txt"));
    std::istringstream hs(hold_text);
    std::vector<LabeledImage> holdout;
    int idx;
    while (hs >> idx) holdout.push_back(bundle.target.at(idx));
    const ParamSet aux = load_checkpoint(io.path("aux.ckpt"));
    Rng dummy(0);
    AuxNets nets = build_aux_nets(perception.out_shape[0], dummy);
    load_net_params(nets.classifier, take_prefixed(aux, "C"));
    if (!holdout.empty())
      cls_acc = classifier_accuracy(perception, nets.classifier, holdout);
  }

  std::ostringstream metrics;
  metrics << "metric,value\n";
  char buf[64];
  auto put = [&](const char* name, double v) {
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    metrics << name << "," << buf << "\n";
  };
  put("seen_avg", average_success(seen_reports));
  if (!bundle.unseen.empty()) {
    const auto unseen_reports = reports_from_csv(read_file(io.path("eval_unseen.csv")),
                                                 "eval_unseen.csv");
    put("unseen_avg", average_success(unseen_reports));
  }
  put("mmd2_pre", pre.mmd2);
  put("mmd2_post", post.mmd2);
  put("probe_acc_pre", pre.probe_acc);
  put("probe_acc_post", post.probe_acc);
  if (cls_acc >= 0) put("classifier_holdout_acc", cls_acc);
  write_file_atomic(io.path("metrics.csv"), metrics.str());
}

void stage_report(const StageIo& io) {
  const auto seen = reports_from_csv(read_file(io.path("eval_seen.csv")), "eval_seen.csv");
  const ComparisonTable table = make_tables({seen});
  std::ostringstream report;
  report << "run: task=" << sim::task_name(io.cfg.task)
         << " variant=" << variant_name(io.cfg.variant) << " seed=" << io.cfg.seed
         << "\n\n";
  report << "seen-object success rates\n" << table_text(table) << "\n";
  if (fs::exists(io.path("eval_unseen.csv"))) {
    const auto unseen =
        reports_from_csv(read_file(io.path("eval_unseen.csv")), "eval_unseen.csv");
    report << "unseen-object success rates\n" << table_text(make_tables({unseen})) << "\n";
  }
  report << "metrics\n" << read_file(io.path("metrics.csv")) << "\n";

  Manifest manifest(io.path("manifest.txt"));
  manifest.load();
  report << "stage checkpoints\n";
  for (const std::string& stage : kStageOrder) {
    if (stage == "report") continue;
    if (const ManifestEntry* e = manifest.find(stage)) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%016llx",
                    static_cast<unsigned long long>(e->content_hash));
      report << "  " << stage << " " << buf;
      for (const auto& o : e->outputs) report << " " << o;
      report << "\n";
    }
  }
  write_file_atomic(io.path("report.txt"), report.str());
  write_file_atomic(io.path("report.csv"), table_csv(table));
}

const std::map<std::string, std::vector<std::string>> kStageOutputs = {
    {"gen-demos", {"demos.bin"}},
    {"train-vae", {"vae.ckpt"}},
    {"train-rl", {"rl.ckpt", "rl_curve.csv"}},
    {"record-source", {"source.cbds"}},
    {"gen-target", {"bundle.cbds"}},
    {"transfer", {"deploy.ckpt", "aux.ckpt", "transfer_log.csv", "holdout.txt"}},
    {"eval", {"eval_seen.csv", "projection.csv", "projection.svg", "metrics.csv"}},
    {"report", {"report.txt", "report.csv"}},
};

// flock-based single-writer guard, released on process exit or kill
class RunLock {
 public:
  explicit RunLock(const std::string& dir) {
    const std::string path = dir + "/.lock";
    fd_ = ::open(path.c_str(), O_CREAT | O_RDWR, 0644);
    if (fd_ < 0) throw IoError("cannot open lock file " + path);
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw Error("another pipeline process holds " + path);
    }
  }
  ~RunLock() {
    if (fd_ >= 0) ::close(fd_);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace

std::vector<StageStatus> run_pipeline(const RunConfig& cfg,
                                      const std::string& force_stage) {
  if (!force_stage.empty() &&
      std::find(kStageOrder.begin(), kStageOrder.end(), force_stage) == kStageOrder.end())
    throw ConfigError("unknown stage '" + force_stage + "'");

  fs::create_directories(cfg.out_dir);
  RunLock lock(cfg.out_dir);
  Manifest manifest(cfg.out_dir + "/manifest.txt");
  manifest.load();

  StageIo io{cfg, cfg.out_dir};
  std::vector<StageStatus> statuses;
  std::uint64_t chain = fnv1a64("pipeline.v1");

  for (const std::string& stage : kStageOrder) {
    // eval of non-picking tasks has no unseen CSV; outputs below are the
    // guaranteed ones
    const std::vector<std::string>& outputs = kStageOutputs.at(stage);
    const std::uint64_t cfg_hash =
        hash_combine(chain, fnv1a64(stage_cfg_string(cfg, stage)));

    const ManifestEntry* prev = manifest.find(stage);
    bool can_skip = prev != nullptr && prev->cfg_hash == cfg_hash &&
                    stage != force_stage;
    if (can_skip) {
      for (const std::string& o : outputs)
        if (!fs::exists(io.path(o))) {
          can_skip = false;
          break;
        }
    }
    if (can_skip) {
      std::uint64_t content = fnv1a64("content");
      for (const std::string& o : outputs)
        content = hash_combine(content, file_hash(io.path(o)));
      can_skip = content == prev->content_hash;
    }

    StageStatus st;
    st.stage = stage;
    if (can_skip) {
      st.skipped = true;
      st.content_hash = prev->content_hash;
      chain = hash_combine(cfg_hash, prev->content_hash);
      statuses.push_back(st);
      continue;
    }

    const auto t0 = std::chrono::steady_clock::now();
    if (stage == "gen-demos") stage_gen_demos(io);
    else if (stage == "train-vae") stage_train_vae(io);
    else if (stage == "train-rl") stage_train_rl(io);
    else if (stage == "record-source") stage_record_source(io);
    else if (stage == "gen-target") stage_gen_target(io);
    else if (stage == "transfer") stage_transfer(io);
    else if (stage == "eval") stage_eval(io);
    else stage_report(io);
    const auto t1 = std::chrono::steady_clock::now();

    ManifestEntry e;
    e.stage = stage;
    e.cfg_hash = cfg_hash;
    e.wall_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
    e.outputs = outputs;
    std::uint64_t content = fnv1a64("content");
    for (const std::string& o : outputs)
      content = hash_combine(content, file_hash(io.path(o)));
    e.content_hash = content;
    manifest.append(e);

    st.skipped = false;
    st.content_hash = e.content_hash;
    st.wall_ms = e.wall_ms;
    statuses.push_back(st);
    chain = hash_combine(cfg_hash, e.content_hash);
  }
  return statuses;
}

std::string compare_runs(const std::vector<std::string>& run_dirs) {
  if (run_dirs.size() < 2) throw ConfigError("compare needs at least two run directories");
  std::vector<std::vector<TrialReport>> by_variant;
  for (const std::string& dir : run_dirs) {
    const std::string path = dir + "/eval_seen.csv";
    by_variant.push_back(reports_from_csv(read_file(path), path));
  }
  const ComparisonTable table = make_tables(by_variant);

  std::ostringstream os;
  os << table_csv(table) << "\n" << table_text(table) << "\n";
  // ordering summary
  std::vector<int> wins(table.variants.size(), 0);
  for (Eigen::Index r = 0; r < table.rates.rows(); ++r) {
    Eigen::Index best = 0;
    table.rates.row(r).maxCoeff(&best);
    wins[static_cast<std::size_t>(best)]++;
    os << "object " << table.object_ids[r] << ": best " << table.variants[best] << "\n";
  }
  std::size_t best_avg = 0;
  for (std::size_t i = 1; i < table.averages.size(); ++i)
    if (table.averages[i] > table.averages[best_avg]) best_avg = i;
  os << "per-object wins:";
  for (std::size_t i = 0; i < wins.size(); ++i)
    os << " " << table.variants[i] << "=" << wins[i];
  os << "\nbest average: " << table.variants[best_avg] << "\n";
  return os.str();
}

std::string inspect_file(const std::string& path) {
  const std::string bytes = read_file(path);
  std::ostringstream os;
  if (bytes.size() >= 4 && bytes.compare(0, 4, "CBCK") == 0) {
    const ParamSet ps = decode_checkpoint(bytes, path);
    os << "checkpoint " << path << ": " << ps.tensors.size() << " tensors\n";
    char buf[64];
    for (const auto& [name, t] : ps.tensors) {
      std::snprintf(buf, sizeof(buf), "%016llx",
                    static_cast<unsigned long long>(
                        fnv1a64(t.data.data(), sizeof(float) * t.size())));
      os << "  " << name << " " << shape_str(t.shape) << " hash " << buf << "\n";
    }
    return os.str();
  }
  if (bytes.size() >= 4 && bytes.compare(0, 4, "CBDS") == 0) {
    const DatasetBundle b = decode_bundle(bytes, path);
    long label1 = 0;
    for (const LabeledImage& t : b.target) label1 += t.label;
    os << "bundle " << path << ": task " << sim::task_name(b.task) << "\n"
       << "  source samples: " << b.source.size() << "\n"
       << "  target samples: " << b.target.size() << " (" << label1
       << " clutter-only, " << (b.target.size() - label1) << " with task object)\n";
    os << "  seen ids:";
    for (int id : b.seen) os << " " << id;
    os << "\n  unseen ids:";
    for (int id : b.unseen) os << " " << id;
    os << "\n";
    return os.str();
  }
  throw IoError(path + ": unknown format (expected CBCK or CBDS magic)");
}

}  // namespace cb
