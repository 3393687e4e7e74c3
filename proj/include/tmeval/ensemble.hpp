#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tmeval/alignment.hpp"
#include "tmeval/corpus.hpp"
#include "tmeval/run_io.hpp"
#include "tmeval/stability.hpp"

namespace tmeval {

/// Topics of all runs stacked row-wise: beta rows and transposed theta
/// columns, with row r of both referring to the same (run, topic).
struct StackedTopics {
  Matrix beta;   // (m K) x V
  Matrix theta;  // (m K) x N
  std::vector<std::pair<std::size_t, std::size_t>> origin;  // row -> (run, topic)
  std::size_t K = 0;
  std::string dataset_id;
  std::string vocab_sha256;
  bool non_simplex = false;

  std::size_t size() const noexcept { return origin.size(); }
};

StackedTopics stack_runs(const RunSet& runs);

/// Symmetric (m K) x (m K) topic distances with a zero diagonal. Theta rows are
/// renormalized before ranking, which leaves rankings unchanged.
Matrix pairwise_distances(const StackedTopics& stacked, Target source, const StabilityOptions& opt,
                          unsigned jobs = 1);

/// lambda * d_beta + (1 - lambda) * d_theta, element-wise.
Matrix interpolate(const Matrix& d_beta, const Matrix& d_theta, double lambda);

struct TopicClustering {
  std::vector<std::size_t> assignment;  // row -> cluster, ids contiguous from 0
  std::size_t n_clusters = 0;
  std::vector<std::size_t> medoids;     // filled by k-medoids only
};

enum class ClusterAlgorithm { kmedoids, agglomerative };
ClusterAlgorithm parse_cluster_algorithm(const std::string& s);
std::string to_string(ClusterAlgorithm a);

struct ClusterOptions {
  ClusterAlgorithm algorithm = ClusterAlgorithm::kmedoids;
  /// Number of clusters. Required for k-medoids; for agglomerative either
  /// this or distance_threshold must be set.
  std::optional<std::size_t> k_target;
  /// Agglomerative only: merge while the closest average-linkage distance is
  /// below this value.
  std::optional<double> distance_threshold;
  std::uint64_t seed = 0;
  std::size_t max_swaps = 300;
};

/// PAM k-medoids: greedy build, then first-improvement swaps (scan order
/// shuffled by seed) until no swap improves or max_swaps is reached.
TopicClustering kmedoids(const Matrix& d, std::size_t k, std::uint64_t seed, std::size_t max_swaps = 300);
/// Average-linkage agglomerative clustering; deterministic.
TopicClustering agglomerative(const Matrix& d, std::optional<std::size_t> k_target,
                              std::optional<double> distance_threshold);
TopicClustering cluster_topics(const Matrix& d, const ClusterOptions& opt);

/// Sum over rows of the distance to the row's cluster medoid.
double kmedoids_objective(const Matrix& d, const TopicClustering& c);

/// Element-wise mean of the rows assigned to each cluster (no renormalization).
Matrix cluster_mean_rows(const Matrix& rows, const TopicClustering& c);

struct EnsembleModel {
  Matrix beta;   // n_clusters x V, simplex rows
  Matrix theta;  // N x n_clusters, simplex rows
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> members;  // per cluster
  TopicClustering clustering;
  double lambda = 1.0;
  DistanceMetric metric = DistanceMetric::rbo;
  ClusterAlgorithm algorithm = ClusterAlgorithm::kmedoids;

  /// Packs the ensemble as a run bundle with model_name "ensemble".
  RunBundle to_bundle(const StackedTopics& stacked, std::uint64_t seed) const;
  /// Sidecar describing how the ensemble was built.
  nlohmann::json sidecar() const;
};

EnsembleModel aggregate(const StackedTopics& stacked, const TopicClustering& clustering);

struct EnsembleConfig {
  double lambda = 1.0;
  StabilityOptions distance;
  ClusterOptions cluster;  // k_target defaults to K when unset
};

/// stack -> distances -> interpolate -> cluster -> aggregate.
EnsembleModel build_ensemble(const RunSet& runs, const EnsembleConfig& config, unsigned jobs = 1);

enum class Comparison { better, tie, worse };
std::string to_string(Comparison c);

struct MetricComparison {
  AlignmentMetric metric;
  double ensemble = 0.0;
  double worst = 0.0;
  double median = 0.0;  // lower median for even m
  double best = 0.0;
  Comparison vs_worst = Comparison::tie;
  Comparison vs_median = Comparison::tie;
  Comparison vs_best = Comparison::tie;

  bool beats_worst() const { return vs_worst == Comparison::better; }
  bool beats_median() const { return vs_median == Comparison::better; }
  bool beats_best() const { return vs_best == Comparison::better; }
};

struct EnsembleEvaluation {
  AlignmentScores ensemble_scores;
  AlignmentReport members;
  std::vector<MetricComparison> comparisons;  // one per alignment metric
};

EnsembleEvaluation evaluate_ensemble(const EnsembleModel& ensemble, const RunSet& runs,
                                     const Corpus& gold, LabelLevel level, unsigned jobs = 1);

nlohmann::json to_json(const EnsembleEvaluation& e);

}  // namespace tmeval
