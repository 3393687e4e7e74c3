#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tmeval/matrix.hpp"
#include "tmeval/run_io.hpp"
#include "tmeval/stats.hpp"

namespace tmeval {

/// Item indices in descending score order, truncated to a depth.
struct RankedList {
  std::vector<std::uint32_t> items;

  RankedList() = default;
  /// Throws Error if items contains duplicates.
  explicit RankedList(std::vector<std::uint32_t> items);

  std::size_t size() const noexcept { return items.size(); }
  friend bool operator==(const RankedList&, const RankedList&) = default;
};

/// Indices of the `depth` largest scores, descending; ties by ascending index.
RankedList rank_scores(std::span<const double> scores, std::size_t depth);
inline RankedList rank_topic_words(std::span<const double> beta_row, std::size_t depth) {
  return rank_scores(beta_row, depth);
}

/// |S[0..d) ∩ L[0..d)| for d = 1..min(|S|, |L|).
std::vector<std::size_t> prefix_overlaps(const RankedList& s, const RankedList& l);

/// Extrapolated rank-biased overlap on lists truncated to k = min(|S|, |L|):
/// (X_k / k) p^k + ((1 - p) / p) * sum_{d=1..k} (X_d / d) p^d.
double rbo_similarity(const RankedList& s, const RankedList& l, double p);

/// Mean over prefix depths of the Jaccard index of the two prefixes.
double average_jaccard(const RankedList& s, const RankedList& l);

enum class DistanceMetric { rbo, jaccard };
DistanceMetric parse_metric(const std::string& s);
std::string to_string(DistanceMetric m);

/// 1 - similarity.
double topic_distance(const RankedList& a, const RankedList& b, DistanceMetric metric,
                      double p = 0.9);

struct TopicMatching {
  std::vector<std::size_t> permutation;  // topic k of the first run -> topic of the second
  std::vector<double> distances;         // cost[k][permutation[k]]
  double total = 0.0;                    // mean of distances
};

/// Minimum-cost perfect matching on a square cost matrix (shortest augmenting
/// path form of the Jonker-Volgenant algorithm).
TopicMatching match_topics(const Matrix& cost);

enum class Target { beta, theta };
Target parse_target(const std::string& s);
std::string to_string(Target t);

struct StabilityOptions {
  DistanceMetric metric = DistanceMetric::rbo;
  double p = 0.9;
  /// Truncation depth; 0 picks the default (25 for beta rows, min(100, N)
  /// for theta columns).
  std::size_t depth = 0;
};

std::size_t effective_depth(const StabilityOptions& opt, Target target, std::size_t n_items);

/// Ranked topics of one run: rows of beta, or columns of theta ranked over
/// documents.
std::vector<RankedList> ranked_topics(const RunBundle& run, Target target, std::size_t depth);

Matrix distance_matrix(std::span<const RankedList> a, std::span<const RankedList> b,
                       DistanceMetric metric, double p);

/// Total topic distance between two runs: mean matched topic distance under
/// the optimal one-to-one matching.
TopicMatching total_topic_distance(const RunBundle& a, const RunBundle& b, Target target,
                                   const StabilityOptions& opt = {});

struct PairDistance {
  std::size_t i = 0;
  std::size_t j = 0;
  TopicMatching matching;
};

struct StabilityReport {
  Target target = Target::beta;
  DistanceMetric metric = DistanceMetric::rbo;
  double p = 0.9;
  std::size_t depth = 0;
  std::vector<PairDistance> pairs;  // (i, j) with i < j, lexicographic

  std::vector<double> distances() const;
  double mean() const;
  double stddev() const;
};

StabilityReport runset_stability(const RunSet& runs, Target target,
                                 const StabilityOptions& opt = {}, unsigned jobs = 1);

/// Welch two-sided test of report a's distances against report b's.
WelchResult compare_stability(const StabilityReport& a, const StabilityReport& b);

nlohmann::json to_json(const StabilityReport& report);

}  // namespace tmeval
