#include "cb/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "cb/gradaccum.hpp"
#include "cb/loss.hpp"
#include "cb/optim.hpp"
#include "cb/policy.hpp"

namespace cb {

std::vector<TrialReport> run_trials(const Net& perception, const Net& policy,
                                    const TrajVae& vae, sim::Task task,
                                    const std::vector<int>& object_ids, int n,
                                    std::uint64_t seed, const std::string& variant) {
  if (n < 1) throw Error("run_trials: n must be >= 1");
  std::vector<TrialReport> reports(object_ids.size());
  for (std::size_t oi = 0; oi < object_ids.size(); ++oi) {
    TrialReport& rep = reports[oi];
    rep.variant = variant;
    rep.task = task;
    rep.object_id = object_ids[oi];
    rep.n_trials = n;
    rep.scores.resize(n);
    parallel_for(n, [&](std::size_t t) {
      const std::uint64_t s = derive_seed(
          seed, "trial." + std::to_string(object_ids[oi]) + "." + std::to_string(t));
      const sim::SceneSpec scene =
          sim::sample_scene(task, sim::DomainKind::Target, object_ids[oi], s);
      Rng dummy(0);
      const ActResult a =
          act(perception, policy, vae, sim::render(scene), ActMode::Mean, dummy);
      rep.scores[t] = sim::score(sim::execute(a.traj, scene), scene);
    });
    double total = 0.0;
    for (float v : rep.scores) total += v;
    rep.success_rate = total / n;
  }
  return reports;
}

std::vector<TrialReport> unseen_eval(const Net& perception, const Net& policy,
                                     const TrajVae& vae, sim::Task task,
                                     const std::vector<int>& unseen_ids,
                                     const std::vector<int>& seen_ids, int n,
                                     std::uint64_t seed, const std::string& variant) {
  for (int id : unseen_ids)
    if (std::find(seen_ids.begin(), seen_ids.end(), id) != seen_ids.end())
      throw Error("unseen_eval: object id " + std::to_string(id) +
                  " leaks into the seen set");
  return run_trials(perception, policy, vae, task, unseen_ids, n, seed, variant);
}

double average_success(const std::vector<TrialReport>& reports) {
  if (reports.empty()) throw Error("average_success: no reports");
  double total = 0.0;
  for (const TrialReport& r : reports) total += r.success_rate;
  return total / reports.size();
}

FeatureCloud collect_feature_cloud(const Net& perception, sim::Task task,
                                   const std::vector<int>& object_ids, int n_per_class,
                                   std::uint64_t seed) {
  FeatureCloud cloud;
  const int dim = perception.out_shape[0];
  cloud.features.resize(3 * n_per_class, dim);
  cloud.tags.resize(3 * n_per_class);
  parallel_for(3 * n_per_class, [&](std::size_t i) {
    const int cls = static_cast<int>(i) / n_per_class;
    const std::uint64_t s = derive_seed(seed, "cloud." + std::to_string(i));
    sim::SceneSpec scene;
    if (cls == 0) {
      scene = sim::sample_scene(task, sim::DomainKind::SourcePlain, std::nullopt, s);
      cloud.tags[i] = FeatureTag::Template;
    } else if (cls == 1) {
      const int id = object_ids[i % object_ids.size()];
      scene = sim::sample_scene(task, sim::DomainKind::Target, id, s);
      cloud.tags[i] = FeatureTag::TaskObject;
    } else {
      scene = sim::sample_scene(task, sim::DomainKind::Target, std::nullopt, s);
      cloud.tags[i] = FeatureTag::Clutter;
    }
    const Tensor f = forward(perception, sim::render(scene));
    for (int k = 0; k < dim; ++k) cloud.features(i, k) = f.data[k];
  });
  return cloud;
}

namespace {

MatX<double> pca_project(const MatX<float>& features) {
  const Eigen::Index n = features.rows(), dim = features.cols();
  MatX<double> x = features.cast<double>();
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd cov =
      (x.transpose() * x) / std::max<double>(1.0, static_cast<double>(n - 1));
  if (cov.norm() < 1e-18)
    throw Error("pca: degenerate covariance (all points identical)");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  MatX<double> components(dim, 2);
  components.col(0) = solver.eigenvectors().col(dim - 1);
  if (dim > 1)
    components.col(1) = solver.eigenvectors().col(dim - 2);
  else
    components.col(1).setZero();
  // sign convention: the largest-magnitude loading of each axis is positive
  for (int c = 0; c < 2; ++c) {
    Eigen::Index imax = 0;
    components.col(c).cwiseAbs().maxCoeff(&imax);
    if (components(imax, c) < 0) components.col(c) = -components.col(c);
  }
  return x * components;
}

// Exact t-SNE (van der Maaten 2008): per-point precision search to match
// perplexity, symmetrized affinities, early exaggeration, momentum + gains.
MatX<double> tsne_project(const MatX<float>& features, std::uint64_t seed) {
  const int n = static_cast<int>(features.rows());
  const double perplexity = 30.0;
  const int iters = 500;

  MatX<double> x = features.cast<double>();
  Eigen::MatrixXd d2(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) d2(i, j) = (x.row(i) - x.row(j)).squaredNorm();

  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  const double log_perp = std::log(std::min(perplexity, (n - 1) / 1.0));
  for (int i = 0; i < n; ++i) {
    double beta = 1.0, beta_lo = 0.0, beta_hi = 1e300;
    for (int it = 0; it < 64; ++it) {
      double sum = 0.0, dot = 0.0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double pj = std::exp(-beta * d2(i, j));
        sum += pj;
        dot += pj * d2(i, j);
      }
      if (sum <= 0) {
        beta /= 2;
        continue;
      }
      const double entropy = std::log(sum) + beta * dot / sum;
      if (std::abs(entropy - log_perp) < 1e-5) break;
      if (entropy > log_perp) {
        beta_lo = beta;
        beta = beta_hi >= 1e300 ? beta * 2 : (beta + beta_hi) / 2;
      } else {
        beta_hi = beta;
        beta = (beta + beta_lo) / 2;
      }
    }
    double sum = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i) sum += std::exp(-beta * d2(i, j));
    for (int j = 0; j < n; ++j)
      if (j != i) p(i, j) = std::exp(-beta * d2(i, j)) / sum;
  }
  p = (p + p.transpose()).eval() / (2.0 * n);
  p = p.cwiseMax(1e-12);

  Rng rng = derive_rng(seed, "tsne.init");
  MatX<double> y(n, 2), vel = MatX<double>::Zero(n, 2),
               gains = MatX<double>::Constant(n, 2, 1.0);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 2; ++c) y(i, c) = 1e-4 * rng.normal();

  const double lr = 200.0;
  for (int iter = 0; iter < iters; ++iter) {
    const double exaggeration = iter < 100 ? 12.0 : 1.0;
    const double momentum = iter < 250 ? 0.5 : 0.8;

    Eigen::MatrixXd num(n, n);
    double qsum = 0.0;
    for (int i = 0; i < n; ++i) {
      num(i, i) = 0.0;
      for (int j = i + 1; j < n; ++j) {
        const double q = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
        num(i, j) = q;
        num(j, i) = q;
        qsum += 2.0 * q;
      }
    }
    MatX<double> grad = MatX<double>::Zero(n, 2);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double coeff =
            4.0 * (exaggeration * p(i, j) - num(i, j) / qsum) * num(i, j);
        grad.row(i) += coeff * (y.row(i) - y.row(j));
      }
    }
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < 2; ++c) {
        const bool same_sign = (grad(i, c) > 0) == (vel(i, c) > 0);
        gains(i, c) = std::max(0.01, same_sign ? gains(i, c) * 0.8 : gains(i, c) + 0.2);
        vel(i, c) = momentum * vel(i, c) - lr * gains(i, c) * grad(i, c);
        y(i, c) += vel(i, c);
      }
    }
    y.rowwise() -= y.colwise().mean();
  }
  return y;
}

}  // namespace

MatX<double> project_features(const MatX<float>& features, ProjectionMethod method,
                              std::uint64_t seed) {
  if (features.rows() < 10)
    throw Error("project_features: need at least 10 points, got " +
                std::to_string(features.rows()));
  return method == ProjectionMethod::Pca ? pca_project(features)
                                         : tsne_project(features, seed);
}

double mmd2_gaussian(const MatX<float>& a, const MatX<float>& b) {
  if (a.rows() == 0 || b.rows() == 0) throw Error("mmd2: empty feature set");
  if (a.cols() != b.cols()) throw ShapeError("mmd2: feature dims differ");
  const MatX<double> xa = a.cast<double>(), xb = b.cast<double>();

  // bandwidth: median pairwise distance over the pooled set
  std::vector<double> dists;
  MatX<double> pooled(a.rows() + b.rows(), a.cols());
  pooled << xa, xb;
  for (Eigen::Index i = 0; i < pooled.rows(); ++i)
    for (Eigen::Index j = i + 1; j < pooled.rows(); ++j)
      dists.push_back((pooled.row(i) - pooled.row(j)).norm());
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
  double bw = dists.empty() ? 1.0 : dists[dists.size() / 2];
  if (bw <= 0) bw = 1.0;
  const double gamma = 1.0 / (2.0 * bw * bw);

  auto kernel_mean = [gamma](const MatX<double>& u, const MatX<double>& v) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < u.rows(); ++i)
      for (Eigen::Index j = 0; j < v.rows(); ++j)
        total += std::exp(-gamma * (u.row(i) - v.row(j)).squaredNorm());
    return total / (static_cast<double>(u.rows()) * static_cast<double>(v.rows()));
  };
  return kernel_mean(xa, xa) + kernel_mean(xb, xb) - 2.0 * kernel_mean(xa, xb);
}

DomainGap domain_gap(const MatX<float>& features_source,
                     const MatX<float>& features_target, std::uint64_t seed) {
  DomainGap gap;
  gap.mmd2 = mmd2_gaussian(features_source, features_target);

  // Fresh 1-hidden-layer probe, never the training discriminator. Train on
  // even rows of each set, report accuracy on the odd rows.
  const int dim = static_cast<int>(features_source.cols());
  Rng init = derive_rng(seed, "probe.init");
  Net probe = NetBuilder({dim}, init).dense(32).relu().dense(1).build();
  Adam opt;

  struct Sample { const float* row; int label; };
  std::vector<Sample> train, test;
  for (Eigen::Index i = 0; i < features_source.rows(); ++i)
    (i % 2 == 0 ? train : test).push_back({features_source.row(i).data(), 1});
  for (Eigen::Index i = 0; i < features_target.rows(); ++i)
    (i % 2 == 0 ? train : test).push_back({features_target.row(i).data(), 0});

  // row(i).data() on a row-major matrix points at contiguous row storage
  auto to_tensor = [dim](const Sample& s) {
    Tensor t({dim});
    for (int k = 0; k < dim; ++k) t.data[k] = s.row[k];
    return t;
  };

  Rng order = derive_rng(seed, "probe.order");
  const int steps = 400, batch = 32;
  for (int step = 0; step < steps; ++step) {
    GradAccum acc;
    for (int b = 0; b < batch; ++b) {
      const Sample& s = train[order.index(train.size())];
      Trace trace;
      const Tensor logit = forward(probe, to_tensor(s), &trace);
      LossGrad lg = bce_with_logits(logit, s.label);
      lg.grad.data[0] /= batch;
      acc.add(backward(probe, trace, lg.grad).grads);
    }
    adam_step(opt, probe.params, acc.mean(1.0), AdamHp{1e-3, 0.9, 0.999, 1e-8});
  }
  long correct = 0;
  for (const Sample& s : test) {
    const Tensor logit = forward(probe, to_tensor(s));
    if ((logit.data[0] > 0.0f) == (s.label == 1)) ++correct;
  }
  gap.probe_acc = test.empty() ? 0.0 : static_cast<double>(correct) / test.size();
  return gap;
}

double silhouette_score(const MatX<double>& points, const std::vector<int>& labels) {
  const int n = static_cast<int>(points.rows());
  if (n != static_cast<int>(labels.size())) throw ShapeError("silhouette: size mismatch");
  std::set<int> classes(labels.begin(), labels.end());
  if (classes.size() < 2) throw Error("silhouette: need at least two clusters");
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double intra = 0.0;
    long intra_n = 0;
    double best_other = 1e300;
    for (int cls : classes) {
      if (cls == labels[i]) continue;
      double sum = 0.0;
      long count = 0;
      for (int j = 0; j < n; ++j) {
        if (labels[j] != cls) continue;
        sum += (points.row(i) - points.row(j)).norm();
        ++count;
      }
      if (count > 0) best_other = std::min(best_other, sum / count);
    }
    for (int j = 0; j < n; ++j) {
      if (j == i || labels[j] != labels[i]) continue;
      intra += (points.row(i) - points.row(j)).norm();
      ++intra_n;
    }
    const double a = intra_n > 0 ? intra / intra_n : 0.0;
    const double s = std::max(a, best_other) > 0
                         ? (best_other - a) / std::max(a, best_other)
                         : 0.0;
    total += s;
  }
  return total / n;
}

ComparisonTable make_tables(const std::vector<std::vector<TrialReport>>& by_variant) {
  if (by_variant.empty()) throw Error("make_tables: no reports");
  ComparisonTable t;
  t.task = by_variant[0].at(0).task;
  for (const TrialReport& r : by_variant[0]) t.object_ids.push_back(r.object_id);

  // canonical column order where known, appended order otherwise
  static const std::vector<std::string> canon = {"full", "adda", "adda_extrainfo",
                                                 "gplac", "gplac_extrainfo"};
  std::vector<std::size_t> order(by_variant.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto rank = [](const std::string& name) {
    for (std::size_t i = 0; i < canon.size(); ++i)
      if (canon[i] == name) return i;
    return canon.size();
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return rank(by_variant[a].at(0).variant) < rank(by_variant[b].at(0).variant);
  });

  t.rates.resize(static_cast<Eigen::Index>(t.object_ids.size()),
                 static_cast<Eigen::Index>(by_variant.size()));
  for (std::size_t c = 0; c < order.size(); ++c) {
    const auto& reports = by_variant[order[c]];
    if (reports.size() != t.object_ids.size())
      throw Error("make_tables: variant '" + reports.at(0).variant +
                  "' covers a different object set");
    t.variants.push_back(reports.at(0).variant);
    double avg = 0.0;
    for (std::size_t r = 0; r < reports.size(); ++r) {
      if (reports[r].object_id != t.object_ids[r] || reports[r].task != t.task)
        throw Error("make_tables: mismatched object sets across variants");
      t.rates(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          reports[r].success_rate;
      avg += reports[r].success_rate;
    }
    t.averages.push_back(avg / reports.size());
  }
  return t;
}

std::string table_csv(const ComparisonTable& t) {
  std::ostringstream os;
  os << "object_id";
  for (const std::string& v : t.variants) os << "," << v;
  os << "\n";
  char buf[40];
  for (Eigen::Index r = 0; r < t.rates.rows(); ++r) {
    os << t.object_ids[r];
    for (Eigen::Index c = 0; c < t.rates.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.4f", t.rates(r, c));
      os << "," << buf;
    }
    os << "\n";
  }
  os << "average";
  for (double a : t.averages) {
    std::snprintf(buf, sizeof(buf), "%.4f", a);
    os << "," << buf;
  }
  os << "\n";
  return os.str();
}

std::string table_text(const ComparisonTable& t) {
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%-10s", "object");
  os << buf;
  for (const std::string& v : t.variants) {
    std::snprintf(buf, sizeof(buf), " %16s", v.c_str());
    os << buf;
  }
  os << "\n";
  for (Eigen::Index r = 0; r < t.rates.rows(); ++r) {
    std::snprintf(buf, sizeof(buf), "%-10d", t.object_ids[r]);
    os << buf;
    for (Eigen::Index c = 0; c < t.rates.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), " %16.2f", t.rates(r, c));
      os << buf;
    }
    os << "\n";
  }
  std::snprintf(buf, sizeof(buf), "%-10s", "average");
  os << buf;
  for (double a : t.averages) {
    std::snprintf(buf, sizeof(buf), " %16.2f", a);
    os << buf;
  }
  os << "\n";
  return os.str();
}

std::string reports_csv(const std::vector<TrialReport>& reports) {
  std::ostringstream os;
  os << "variant,task,object_id,n_trials,success_rate,scores\n";
  char buf[40];
  for (const TrialReport& r : reports) {
    std::snprintf(buf, sizeof(buf), "%.6f", r.success_rate);
    os << r.variant << "," << sim::task_name(r.task) << "," << r.object_id << ","
       << r.n_trials << "," << buf << ",";
    for (std::size_t i = 0; i < r.scores.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%g", r.scores[i]);
      os << (i ? ";" : "") << buf;
    }
    os << "\n";
  }
  return os.str();
}

std::vector<TrialReport> reports_from_csv(const std::string& csv,
                                          const std::string& origin) {
  std::istringstream is(csv);
  std::string line;
  if (!std::getline(is, line) || line.rfind("variant,", 0) != 0)
    throw IoError(origin + ": not a trial report CSV");
  std::vector<TrialReport> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    TrialReport r;
    std::getline(ls, r.variant, ',');
    std::getline(ls, field, ',');
    r.task = sim::parse_task(field);
    std::getline(ls, field, ',');
    r.object_id = std::stoi(field);
    std::getline(ls, field, ',');
    r.n_trials = std::stoi(field);
    std::getline(ls, field, ',');
    r.success_rate = std::stod(field);
    std::getline(ls, field);
    std::istringstream ss(field);
    std::string sc;
    while (std::getline(ss, sc, ';'))
      if (!sc.empty()) r.scores.push_back(std::stof(sc));
    out.push_back(std::move(r));
  }
  return out;
}

namespace {
const char* tag_color(FeatureTag t) {
  switch (t) {
    case FeatureTag::Template: return "red";
    case FeatureTag::TaskObject: return "green";
    case FeatureTag::Clutter: return "blue";
  }
  return "black";
}
const char* tag_name(FeatureTag t) {
  switch (t) {
    case FeatureTag::Template: return "template";
    case FeatureTag::TaskObject: return "task_object";
    case FeatureTag::Clutter: return "clutter";
  }
  return "?";
}
}  // namespace

std::string projection_csv(const MatX<double>& points,
                           const std::vector<FeatureTag>& tags) {
  std::ostringstream os;
  os << "x,y,tag\n";
  char buf[80];
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,", points(i, 0), points(i, 1));
    os << buf << tag_name(tags[i]) << "\n";
  }
  return os.str();
}

std::string projection_svg(const MatX<double>& points,
                           const std::vector<FeatureTag>& tags) {
  const double minx = points.col(0).minCoeff(), maxx = points.col(0).maxCoeff();
  const double miny = points.col(1).minCoeff(), maxy = points.col(1).maxCoeff();
  const double sx = maxx > minx ? 560.0 / (maxx - minx) : 1.0;
  const double sy = maxy > miny ? 560.0 / (maxy - miny) : 1.0;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"600\">\n"
     << "<rect width=\"600\" height=\"600\" fill=\"white\"/>\n";
  char buf[160];
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const double cx = 20.0 + (points(i, 0) - minx) * sx;
    const double cy = 580.0 - (points(i, 1) - miny) * sy;
    std::snprintf(buf, sizeof(buf),
                  "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\" fill-opacity=\"0.7\"/>\n",
                  cx, cy, tag_color(tags[i]));
    os << buf;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace cb
