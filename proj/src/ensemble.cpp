#include "tmeval/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tmeval/error.hpp"
#include "tmeval/parallel.hpp"
#include "tmeval/rng.hpp"

namespace tmeval {

StackedTopics stack_runs(const RunSet& runs) {
  if (runs.size() < 2) throw Error("an ensemble needs at least two runs");
  const std::size_t m = runs.size();
  const std::size_t K = runs.context.K, V = runs.context.V, N = runs.context.N;
  StackedTopics s;
  s.K = K;
  s.dataset_id = runs.context.dataset_id;
  s.vocab_sha256 = runs.context.vocab_sha256;
  s.beta = Matrix(m * K, V);
  s.theta = Matrix(m * K, N);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& run = runs.runs[i];
    if (run.beta.rows() != K || run.beta.cols() != V || run.theta.rows() != N || run.theta.cols() != K) {
      throw Error("run " + runs.names[i] + " does not match the run set context");
    }
    s.non_simplex = s.non_simplex || run.meta.non_simplex;
    for (std::size_t k = 0; k < K; ++k) {
      const std::size_t r = i * K + k;
      std::copy(run.beta.row(k).begin(), run.beta.row(k).end(), s.beta.row(r).begin());
      for (std::size_t d = 0; d < N; ++d) s.theta(r, d) = run.theta(d, k);
      s.origin.emplace_back(i, k);
    }
  }
  return s;
}

Matrix pairwise_distances(const StackedTopics& stacked, Target source, const StabilityOptions& opt,
                          unsigned jobs) {
  const Matrix& rows = source == Target::beta ? stacked.beta : stacked.theta;
  const std::size_t n = rows.rows();
  const std::size_t depth = effective_depth(opt, source, rows.cols());

  std::vector<RankedList> ranked(n);
  parallel_for(n, jobs, [&](std::size_t r) {
    if (source == Target::theta) {
      std::vector<double> normalized(rows.row(r).begin(), rows.row(r).end());
      const double sum = std::accumulate(normalized.begin(), normalized.end(), 0.0);
      if (sum > 0.0)
        for (double& x : normalized) x /= sum;
      ranked[r] = rank_scores(normalized, depth);
    } else {
      ranked[r] = rank_scores(rows.row(r), depth);
    }
  });

  Matrix d(n, n, 0.0);
  parallel_for(n, jobs, [&](std::size_t i) {
    for (std::size_t j = i + 1; j < n; ++j) d(i, j) = topic_distance(ranked[i], ranked[j], opt.metric, opt.p);
  });
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d(j, i) = d(i, j);
  return d;
}

Matrix interpolate(const Matrix& d_beta, const Matrix& d_theta, double lambda) {
  if (d_beta.rows() != d_theta.rows() || d_beta.cols() != d_theta.cols()) {
    throw Error("distance matrices differ in shape");
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error("lambda must lie in [0, 1]");
  Matrix out(d_beta.rows(), d_beta.cols());
  for (std::size_t i = 0; i < out.data().size(); ++i) {
    out.data()[i] = lambda * d_beta.data()[i] + (1.0 - lambda) * d_theta.data()[i];
  }
  return out;
}

ClusterAlgorithm parse_cluster_algorithm(const std::string& s) {
  if (s == "kmedoids") return ClusterAlgorithm::kmedoids;
  if (s == "agglomerative") return ClusterAlgorithm::agglomerative;
  throw Error("unknown clustering algorithm '" + s + "' (expected kmedoids or agglomerative)");
}

std::string to_string(ClusterAlgorithm a) {
  return a == ClusterAlgorithm::kmedoids ? "kmedoids" : "agglomerative";
}

namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

/// Renames cluster ids in order of first appearance over rows.
void relabel_by_first_row(TopicClustering& c) {
  std::vector<std::size_t> rename(c.n_clusters, kNone);
  std::size_t next = 0;
  for (auto& a : c.assignment) {
    if (rename[a] == kNone) rename[a] = next++;
    a = rename[a];
  }
  if (!c.medoids.empty()) {
    std::vector<std::size_t> medoids(c.n_clusters);
    for (std::size_t old = 0; old < c.n_clusters; ++old) medoids[rename[old]] = c.medoids[old];
    c.medoids = std::move(medoids);
  }
}

void check_square(const Matrix& d) {
  if (d.rows() != d.cols()) throw Error("distance matrix must be square");
  if (d.rows() == 0) throw Error("distance matrix is empty");
}

struct Nearest {
  std::vector<std::size_t> slot;  // index into medoids of the nearest medoid
  std::vector<double> first;      // distance to nearest medoid
  std::vector<double> second;     // distance to second nearest medoid
};

Nearest nearest_medoids(const Matrix& d, const std::vector<std::size_t>& medoids) {
  const std::size_t n = d.rows();
  Nearest out{std::vector<std::size_t>(n), std::vector<double>(n), std::vector<double>(n)};
  constexpr double inf = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    double best = inf, next = inf;
    std::size_t best_slot = 0;
    for (std::size_t s = 0; s < medoids.size(); ++s) {
      const double x = medoids[s] == j ? -1.0 : d(medoids[s], j);  // a medoid owns itself
      if (x < best || (x == best && medoids[s] < medoids[best_slot])) {
        next = best;
        best = x;
        best_slot = s;
      } else if (x < next) {
        next = x;
      }
    }
    out.slot[j] = best_slot;
    out.first[j] = std::max(best, 0.0);
    out.second[j] = next;
  }
  return out;
}

}  // namespace

TopicClustering kmedoids(const Matrix& d, std::size_t k, std::uint64_t seed, std::size_t max_swaps) {
  check_square(d);
  const std::size_t n = d.rows();
  if (k == 0) throw Error("k-medoids needs k >= 1");
  if (k > n) {
    throw Error("k_target = " + std::to_string(k) + " exceeds the number of stacked topics " +
                std::to_string(n));
  }

  // Build: start from the most central point, then greedily add the point
  // that lowers the total distance the most.
  std::vector<std::size_t> medoids;
  std::vector<bool> is_medoid(n, false);
  std::vector<double> near(n, std::numeric_limits<double>::infinity());
  {
    std::size_t first = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) total += d(i, j);
      if (total < best) {
        best = total;
        first = i;
      }
    }
    medoids.push_back(first);
    is_medoid[first] = true;
    for (std::size_t j = 0; j < n; ++j) near[j] = d(first, j);
  }
  while (medoids.size() < k) {
    std::size_t pick = kNone;
    double best_gain = -1.0;
    for (std::size_t c = 0; c < n; ++c) {
      if (is_medoid[c]) continue;
      double gain = 0.0;
      for (std::size_t j = 0; j < n; ++j) gain += std::max(0.0, near[j] - d(c, j));
      if (gain > best_gain) {
        best_gain = gain;
        pick = c;
      }
    }
    medoids.push_back(pick);
    is_medoid[pick] = true;
    for (std::size_t j = 0; j < n; ++j) near[j] = std::min(near[j], d(pick, j));
  }

  // Swap: first improvement over (medoid slot, candidate) pairs in a seeded order.
  Rng rng = make_rng(seed, 0x9a3);
  std::size_t swaps = 0;
  bool improved = true;
  while (improved && swaps < max_swaps) {
    improved = false;
    Nearest nearest = nearest_medoids(d, medoids);
    std::vector<std::pair<std::size_t, std::size_t>> order;
    for (std::size_t s = 0; s < k; ++s)
      for (std::size_t c = 0; c < n; ++c)
        if (!is_medoid[c]) order.emplace_back(s, c);
    shuffle_in_place(order, rng);

    for (auto [slot, cand] : order) {
      double delta = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double to_cand = j == cand ? 0.0 : d(cand, j);
        const double keep = nearest.slot[j] == slot ? nearest.second[j] : nearest.first[j];
        delta += std::min(to_cand, keep) - nearest.first[j];
      }
      if (delta < -1e-12) {
        is_medoid[medoids[slot]] = false;
        medoids[slot] = cand;
        is_medoid[cand] = true;
        ++swaps;
        improved = true;
        break;
      }
    }
  }

  TopicClustering out;
  out.n_clusters = k;
  const Nearest final_nearest = nearest_medoids(d, medoids);
  out.assignment = final_nearest.slot;
  out.medoids = medoids;
  relabel_by_first_row(out);
  return out;
}

TopicClustering agglomerative(const Matrix& d, std::optional<std::size_t> k_target,
                              std::optional<double> distance_threshold) {
  check_square(d);
  const std::size_t n = d.rows();
  if (!k_target && !distance_threshold) {
    throw Error("agglomerative clustering needs k_target or distance_threshold");
  }
  if (k_target && (*k_target == 0 || *k_target > n)) {
    throw Error("k_target = " + std::to_string(*k_target) + " outside 1.." + std::to_string(n));
  }
  if (distance_threshold && !(*distance_threshold > 0.0)) {
    throw Error("distance_threshold must be positive");
  }

  Matrix link = d;
  std::vector<std::size_t> size(n, 1), owner(n);
  std::iota(owner.begin(), owner.end(), 0);
  std::vector<bool> active(n, true);
  std::size_t n_active = n;
  while (n_active > 1) {
    if (k_target && n_active <= *k_target) break;
    std::size_t bi = kNone, bj = kNone;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (active[j] && link(i, j) < best) {
          best = link(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    if (distance_threshold && !(best < *distance_threshold)) break;
    // average linkage (Lance-Williams update)
    for (std::size_t x = 0; x < n; ++x) {
      if (!active[x] || x == bi || x == bj) continue;
      const double merged = (size[bi] * link(bi, x) + size[bj] * link(bj, x)) /
                            static_cast<double>(size[bi] + size[bj]);
      link(bi, x) = link(x, bi) = merged;
    }
    size[bi] += size[bj];
    active[bj] = false;
    for (auto& o : owner)
      if (o == bj) o = bi;
    --n_active;
  }

  TopicClustering out;
  out.assignment = owner;
  out.n_clusters = n;  // owner ids are row indices; relabeling compacts them
  relabel_by_first_row(out);
  out.n_clusters = n_active;
  return out;
}

TopicClustering cluster_topics(const Matrix& d, const ClusterOptions& opt) {
  if (opt.algorithm == ClusterAlgorithm::kmedoids) {
    if (!opt.k_target) throw Error("k-medoids needs k_target");
    return kmedoids(d, *opt.k_target, opt.seed, opt.max_swaps);
  }
  return agglomerative(d, opt.k_target, opt.distance_threshold);
}

double kmedoids_objective(const Matrix& d, const TopicClustering& c) {
  double total = 0.0;
  for (std::size_t i = 0; i < c.assignment.size(); ++i) total += d(i, c.medoids[c.assignment[i]]);
  return total;
}

Matrix cluster_mean_rows(const Matrix& rows, const TopicClustering& c) {
  if (c.assignment.size() != rows.rows()) throw Error("clustering does not cover the stacked rows");
  const std::size_t cols = rows.cols();
  std::vector<std::vector<std::size_t>> members(c.n_clusters);
  for (std::size_t r = 0; r < rows.rows(); ++r) members.at(c.assignment[r]).push_back(r);

  Matrix out(c.n_clusters, cols);
  for (std::size_t k = 0; k < c.n_clusters; ++k) {
    const auto& mem = members[k];
    if (mem.empty()) throw Error("cluster " + std::to_string(k) + " has no members");
    for (std::size_t v = 0; v < cols; ++v) {
      const double first = rows(mem[0], v);
      double sum = 0.0;
      bool all_equal = true;
      for (auto r : mem) {
        sum += rows(r, v);
        all_equal = all_equal && rows(r, v) == first;
      }
      out(k, v) = all_equal ? first : sum / static_cast<double>(mem.size());
    }
  }
  return out;
}

namespace {

// Rows already on the simplex up to rounding are left alone, so averaging
// identical members reproduces them bit for bit.
void normalize_rows(Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double sum = 0.0;
    for (double x : m.row(r)) sum += x;
    if (sum > 0.0 && std::abs(sum - 1.0) > 1e-12) {
      for (double& x : m.row(r)) x /= sum;
    } else if (sum == 0.0) {
      for (double& x : m.row(r)) x = 1.0 / static_cast<double>(m.cols());
    }
  }
}

}  // namespace

EnsembleModel aggregate(const StackedTopics& stacked, const TopicClustering& clustering) {
  if (clustering.assignment.size() != stacked.size()) {
    throw Error("clustering does not cover the stacked topics");
  }
  EnsembleModel e;
  e.clustering = clustering;
  e.beta = cluster_mean_rows(stacked.beta, clustering);
  normalize_rows(e.beta);
  e.theta = cluster_mean_rows(stacked.theta, clustering).transposed();
  normalize_rows(e.theta);
  e.members.resize(clustering.n_clusters);
  for (std::size_t r = 0; r < stacked.size(); ++r) e.members[clustering.assignment[r]].push_back(stacked.origin[r]);
  return e;
}

RunBundle EnsembleModel::to_bundle(const StackedTopics& stacked, std::uint64_t seed) const {
  RunBundle b;
  b.beta = beta;
  b.theta = theta;
  b.meta.model_name = "ensemble";
  b.meta.dataset_id = stacked.dataset_id;
  b.meta.K = beta.rows();
  b.meta.V = beta.cols();
  b.meta.N = theta.rows();
  b.meta.seed = seed;
  b.meta.vocab_sha256 = stacked.vocab_sha256;
  b.meta.hyperparams = {{"lambda", lambda},
                        {"metric", to_string(metric)},
                        {"algorithm", to_string(algorithm)},
                        {"n_members", static_cast<double>(stacked.size() / std::max<std::size_t>(stacked.K, 1))}};
  return b;
}

nlohmann::json EnsembleModel::sidecar() const {
  nlohmann::json members_json = nlohmann::json::array();
  for (const auto& cluster : members) {
    nlohmann::json c = nlohmann::json::array();
    for (auto [run, topic] : cluster) c.push_back({{"run", run}, {"topic", topic}});
    members_json.push_back(c);
  }
  return {{"lambda", lambda},
          {"metric", to_string(metric)},
          {"algorithm", to_string(algorithm)},
          {"n_clusters", clustering.n_clusters},
          {"members", members_json},
          {"assignment", clustering.assignment},
          {"theta_renormalized", true}};
}

EnsembleModel build_ensemble(const RunSet& runs, const EnsembleConfig& config, unsigned jobs) {
  const StackedTopics stacked = stack_runs(runs);
  if (!(config.lambda >= 0.0 && config.lambda <= 1.0)) throw Error("lambda must lie in [0, 1]");
  Matrix d;
  if (config.lambda == 1.0) {
    d = pairwise_distances(stacked, Target::beta, config.distance, jobs);
  } else if (config.lambda == 0.0) {
    d = pairwise_distances(stacked, Target::theta, config.distance, jobs);
  } else {
    d = interpolate(pairwise_distances(stacked, Target::beta, config.distance, jobs),
                    pairwise_distances(stacked, Target::theta, config.distance, jobs), config.lambda);
  }
  ClusterOptions copt = config.cluster;
  if (!copt.k_target && !(copt.algorithm == ClusterAlgorithm::agglomerative && copt.distance_threshold)) {
    copt.k_target = stacked.K;
  }
  EnsembleModel e = aggregate(stacked, cluster_topics(d, copt));
  e.lambda = config.lambda;
  e.metric = config.distance.metric;
  e.algorithm = copt.algorithm;
  return e;
}

std::string to_string(Comparison c) {
  switch (c) {
    case Comparison::better: return "better";
    case Comparison::tie: return "tie";
    case Comparison::worse: return "worse";
  }
  return "?";
}

namespace {

Comparison compare(double ensemble, double member) {
  if (ensemble > member) return Comparison::better;
  if (ensemble < member) return Comparison::worse;
  return Comparison::tie;
}

}  // namespace

EnsembleEvaluation evaluate_ensemble(const EnsembleModel& ensemble, const RunSet& runs,
                                     const Corpus& gold, LabelLevel level, unsigned jobs) {
  if (ensemble.theta.rows() != gold.size()) throw Error("ensemble and gold corpus differ in N");
  EnsembleEvaluation out;
  out.ensemble_scores = score_alignment(hard_assign(ensemble.theta, gold.empty), gold_labeling(gold, level));
  out.members = alignment_report(runs, gold, level, jobs);
  for (auto m : kAlignmentMetrics) {
    auto values = out.members.values(m);
    std::sort(values.begin(), values.end());
    MetricComparison c;
    c.metric = m;
    c.ensemble = get(out.ensemble_scores, m);
    c.worst = values.front();
    c.best = values.back();
    c.median = values[(values.size() - 1) / 2];
    c.vs_worst = compare(c.ensemble, c.worst);
    c.vs_median = compare(c.ensemble, c.median);
    c.vs_best = compare(c.ensemble, c.best);
    out.comparisons.push_back(c);
  }
  return out;
}

nlohmann::json to_json(const EnsembleEvaluation& e) {
  nlohmann::json comps = nlohmann::json::object();
  for (const auto& c : e.comparisons) {
    comps[to_string(c.metric)] = {{"ensemble", c.ensemble},
                                  {"worst", c.worst},
                                  {"median", c.median},
                                  {"best", c.best},
                                  {"vs_worst", to_string(c.vs_worst)},
                                  {"vs_median", to_string(c.vs_median)},
                                  {"vs_best", to_string(c.vs_best)},
                                  {"beats_worst", c.beats_worst()},
                                  {"beats_median", c.beats_median()},
                                  {"beats_best", c.beats_best()}};
  }
  return {{"ensemble_scores", to_json(e.ensemble_scores)},
          {"member_scores", to_json(e.members)},
          {"comparisons", comps}};
}

}  // namespace tmeval
