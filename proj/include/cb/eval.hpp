#pragma once

// Evaluation protocol: per-object trials with the scoring rubric, seen vs
// unseen splits, 2-D feature projections (PCA / exact t-SNE) and domain
// discrepancy probes (squared MMD and a freshly trained probe classifier).

#include <cstdint>
#include <string>
#include <vector>

#include "cb/net.hpp"
#include "cb/sim.hpp"
#include "cb/vae.hpp"

namespace cb {

struct TrialReport {
  std::string variant;
  sim::Task task = sim::Task::Picking;
  int object_id = 0;
  int n_trials = 0;
  std::vector<float> scores;
  double success_rate = 0.0;
};

// n target scenes per object, mean-mode actions, simulator scores.
std::vector<TrialReport> run_trials(const Net& perception, const Net& policy,
                                    const TrajVae& vae, sim::Task task,
                                    const std::vector<int>& object_ids, int n,
                                    std::uint64_t seed, const std::string& variant);

// Same protocol on held-out ids; rejects any overlap with the seen list.
std::vector<TrialReport> unseen_eval(const Net& perception, const Net& policy,
                                     const TrajVae& vae, sim::Task task,
                                     const std::vector<int>& unseen_ids,
                                     const std::vector<int>& seen_ids, int n,
                                     std::uint64_t seed, const std::string& variant);

double average_success(const std::vector<TrialReport>& reports);

enum class FeatureTag { Template, TaskObject, Clutter };

struct FeatureCloud {
  MatX<float> features;           // N x dim
  std::vector<FeatureTag> tags;   // one per row
};

// Fresh template / task-object / clutter scenes passed through P.
FeatureCloud collect_feature_cloud(const Net& perception, sim::Task task,
                                   const std::vector<int>& object_ids, int n_per_class,
                                   std::uint64_t seed);

enum class ProjectionMethod { Pca, Tsne };

// 2-D embedding: PCA top-2 components (sign-normalized) or exact t-SNE with
// perplexity 30 and 500 iterations.
MatX<double> project_features(const MatX<float>& features, ProjectionMethod method,
                              std::uint64_t seed);

struct DomainGap {
  double mmd2 = 0.0;       // biased V-statistic, Gaussian kernel
  double probe_acc = 0.0;  // held-out accuracy of a fresh 1-hidden-layer probe
};

DomainGap domain_gap(const MatX<float>& features_source,
                     const MatX<float>& features_target, std::uint64_t seed);

double mmd2_gaussian(const MatX<float>& a, const MatX<float>& b);

// Mean silhouette coefficient of a labeled 2-D embedding.
double silhouette_score(const MatX<double>& points, const std::vector<int>& labels);

struct ComparisonTable {
  sim::Task task = sim::Task::Picking;
  std::vector<int> object_ids;
  std::vector<std::string> variants;  // canonical column order
  MatX<double> rates;                 // objects x variants
  std::vector<double> averages;       // per variant
};

// Per-object rows, per-variant columns, average row. All report lists must
// cover the same object ids.
ComparisonTable make_tables(const std::vector<std::vector<TrialReport>>& by_variant);

std::string table_csv(const ComparisonTable& t);
std::string table_text(const ComparisonTable& t);
std::string reports_csv(const std::vector<TrialReport>& reports);
std::vector<TrialReport> reports_from_csv(const std::string& csv,
                                          const std::string& origin);

std::string projection_csv(const MatX<double>& points, const std::vector<FeatureTag>& tags);
// Fig.-6-style scatter: red = template, green = task object, blue = clutter.
std::string projection_svg(const MatX<double>& points, const std::vector<FeatureTag>& tags);

}  // namespace cb
