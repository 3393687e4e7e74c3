#include "tmeval/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tmeval/error.hpp"
#include "tmeval/parallel.hpp"

namespace tmeval {

RankedList::RankedList(std::vector<std::uint32_t> v) : items(std::move(v)) {
  std::vector<std::uint32_t> sorted = items;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw Error("ranked list contains duplicate items");
  }
}

RankedList rank_scores(std::span<const double> scores, std::size_t depth) {
  if (depth == 0) throw Error("ranking depth must be at least 1");
  std::vector<std::uint32_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0u);
  const std::size_t keep = std::min(depth, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(),
                    [&](std::uint32_t a, std::uint32_t b) {
                      return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
                    });
  idx.resize(keep);
  RankedList out;
  out.items = std::move(idx);
  return out;
}

std::vector<std::size_t> prefix_overlaps(const RankedList& s, const RankedList& l) {
  const std::size_t k = std::min(s.size(), l.size());
  // An item at rank i in S and rank j in L is shared by every prefix deeper
  // than max(i, j).
  std::vector<std::pair<std::uint32_t, std::size_t>> l_rank(k);
  for (std::size_t j = 0; j < k; ++j) l_rank[j] = {l.items[j], j};
  std::sort(l_rank.begin(), l_rank.end());
  std::vector<std::size_t> joins(k, 0);
  for (std::size_t i = 0; i < k; ++i) {
    auto it = std::lower_bound(l_rank.begin(), l_rank.end(),
                               std::pair<std::uint32_t, std::size_t>{s.items[i], 0});
    if (it != l_rank.end() && it->first == s.items[i]) ++joins[std::max(i, it->second)];
  }
  std::vector<std::size_t> overlap(k);
  std::size_t running = 0;
  for (std::size_t d = 0; d < k; ++d) {
    running += joins[d];
    overlap[d] = running;
  }
  return overlap;
}

double rbo_similarity(const RankedList& s, const RankedList& l, double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error("RBO persistence p must lie in (0, 1)");
  if (s.size() == 0 || l.size() == 0) throw Error("RBO needs nonempty lists");
  const auto overlap = prefix_overlaps(s, l);
  const std::size_t k = overlap.size();
  bool identical = true;
  for (std::size_t d = 0; d < k && identical; ++d) identical = overlap[d] == d + 1;
  if (identical) return 1.0;
  double sum = 0.0;
  double weight = 1.0;
  for (std::size_t d = 1; d <= k; ++d) {
    weight *= p;
    sum += static_cast<double>(overlap[d - 1]) / static_cast<double>(d) * weight;
  }
  const double agreement_k = static_cast<double>(overlap[k - 1]) / static_cast<double>(k);
  const double value = agreement_k * weight + (1.0 - p) / p * sum;
  return std::clamp(value, 0.0, 1.0);
}

double average_jaccard(const RankedList& s, const RankedList& l) {
  if (s.size() == 0 || l.size() == 0) throw Error("average Jaccard needs nonempty lists");
  const auto overlap = prefix_overlaps(s, l);
  double sum = 0.0;
  for (std::size_t d = 1; d <= overlap.size(); ++d) {
    const double x = static_cast<double>(overlap[d - 1]);
    sum += x / (2.0 * static_cast<double>(d) - x);
  }
  return sum / static_cast<double>(overlap.size());
}

DistanceMetric parse_metric(const std::string& s) {
  if (s == "rbo") return DistanceMetric::rbo;
  if (s == "jaccard") return DistanceMetric::jaccard;
  throw Error("unknown distance metric '" + s + "' (expected rbo or jaccard)");
}

std::string to_string(DistanceMetric m) { return m == DistanceMetric::rbo ? "rbo" : "jaccard"; }

double topic_distance(const RankedList& a, const RankedList& b, DistanceMetric metric, double p) {
  const double sim = metric == DistanceMetric::rbo ? rbo_similarity(a, b, p) : average_jaccard(a, b);
  return 1.0 - sim;
}

TopicMatching match_topics(const Matrix& cost) {
  const std::size_t n = cost.rows();
  if (cost.cols() != n) {
    throw Error("cost matrix must be square, got " + std::to_string(n) + "x" +
                std::to_string(cost.cols()));
  }
  for (double x : cost.data())
    if (!std::isfinite(x)) throw Error("cost matrix has a non-finite entry");

  constexpr double inf = std::numeric_limits<double>::infinity();
  constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
  std::vector<double> u(n, 0.0), v(n, 0.0), shortest(n);
  std::vector<std::size_t> path(n, none), col_of_row(n, none), row_of_col(n, none), remaining(n);
  std::vector<bool> row_done(n), col_done(n);

  for (std::size_t cur = 0; cur < n; ++cur) {
    // Dijkstra-style search for the shortest augmenting path from row `cur`
    // over reduced costs.
    double min_val = 0.0;
    std::size_t n_remaining = n;
    for (std::size_t it = 0; it < n; ++it) remaining[it] = n - it - 1;
    std::fill(row_done.begin(), row_done.end(), false);
    std::fill(col_done.begin(), col_done.end(), false);
    std::fill(shortest.begin(), shortest.end(), inf);

    std::size_t sink = none;
    std::size_t i = cur;
    while (sink == none) {
      std::size_t index = none;
      double lowest = inf;
      row_done[i] = true;
      for (std::size_t it = 0; it < n_remaining; ++it) {
        const std::size_t j = remaining[it];
        const double r = min_val + cost(i, j) - u[i] - v[j];
        if (r < shortest[j]) {
          path[j] = i;
          shortest[j] = r;
        }
        if (shortest[j] < lowest || (shortest[j] == lowest && row_of_col[j] == none)) {
          lowest = shortest[j];
          index = it;
        }
      }
      min_val = lowest;
      const std::size_t j = remaining[index];
      if (row_of_col[j] == none) {
        sink = j;
      } else {
        i = row_of_col[j];
      }
      col_done[j] = true;
      remaining[index] = remaining[--n_remaining];
    }

    u[cur] += min_val;
    for (std::size_t r = 0; r < n; ++r) {
      if (row_done[r] && r != cur) u[r] += min_val - shortest[col_of_row[r]];
    }
    for (std::size_t c = 0; c < n; ++c) {
      if (col_done[c]) v[c] -= min_val - shortest[c];
    }
    for (std::size_t j = sink;;) {
      const std::size_t r = path[j];
      row_of_col[j] = r;
      std::swap(col_of_row[r], j);
      if (r == cur) break;
    }
  }

  TopicMatching m;
  m.permutation = std::move(col_of_row);
  m.distances.resize(n);
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    m.distances[k] = cost(k, m.permutation[k]);
    sum += m.distances[k];
  }
  m.total = n == 0 ? 0.0 : sum / static_cast<double>(n);
  return m;
}

Target parse_target(const std::string& s) {
  if (s == "beta" || s == "B") return Target::beta;
  if (s == "theta" || s == "Theta") return Target::theta;
  throw Error("unknown stability target '" + s + "' (expected beta or theta)");
}

std::string to_string(Target t) { return t == Target::beta ? "beta" : "theta"; }

std::size_t effective_depth(const StabilityOptions& opt, Target target, std::size_t n_items) {
  const std::size_t depth = opt.depth > 0 ? opt.depth : target == Target::beta ? 25 : 100;
  return std::min(depth, n_items);
}

std::vector<RankedList> ranked_topics(const RunBundle& run, Target target, std::size_t depth) {
  std::vector<RankedList> out;
  if (target == Target::beta) {
    out.reserve(run.beta.rows());
    for (std::size_t k = 0; k < run.beta.rows(); ++k) out.push_back(rank_scores(run.beta.row(k), depth));
  } else {
    out.reserve(run.theta.cols());
    for (std::size_t k = 0; k < run.theta.cols(); ++k) {
      const auto column = run.theta.column(k);
      out.push_back(rank_scores(column, depth));
    }
  }
  return out;
}

Matrix distance_matrix(std::span<const RankedList> a, std::span<const RankedList> b,
                       DistanceMetric metric, double p) {
  Matrix d(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) d(i, j) = topic_distance(a[i], b[j], metric, p);
  return d;
}

namespace {

void check_pair_context(const RunBundle& a, const RunBundle& b, Target target) {
  if (a.meta.K != b.meta.K) {
    throw Error("runs differ in K: " + std::to_string(a.meta.K) + " vs " + std::to_string(b.meta.K));
  }
  if (target == Target::beta && a.meta.V != b.meta.V) {
    throw Error("runs differ in V: " + std::to_string(a.meta.V) + " vs " + std::to_string(b.meta.V));
  }
  if (target == Target::theta && a.meta.N != b.meta.N) {
    throw Error("runs differ in N: " + std::to_string(a.meta.N) + " vs " + std::to_string(b.meta.N));
  }
}

std::size_t items_of(const RunBundle& r, Target target) {
  return target == Target::beta ? r.meta.V : r.meta.N;
}

}  // namespace

TopicMatching total_topic_distance(const RunBundle& a, const RunBundle& b, Target target,
                                   const StabilityOptions& opt) {
  check_pair_context(a, b, target);
  const std::size_t depth = effective_depth(opt, target, items_of(a, target));
  const auto ra = ranked_topics(a, target, depth);
  const auto rb = ranked_topics(b, target, depth);
  return match_topics(distance_matrix(ra, rb, opt.metric, opt.p));
}

std::vector<double> StabilityReport::distances() const {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& pr : pairs) out.push_back(pr.matching.total);
  return out;
}

double StabilityReport::mean() const { return tmeval::mean(distances()); }
double StabilityReport::stddev() const { return sample_std(distances()); }

StabilityReport runset_stability(const RunSet& runs, Target target, const StabilityOptions& opt,
                                 unsigned jobs) {
  const std::size_t m = runs.size();
  if (m < 2) throw Error("stability needs at least two runs");
  for (std::size_t i = 1; i < m; ++i) check_pair_context(runs.runs[0], runs.runs[i], target);

  StabilityReport report;
  report.target = target;
  report.metric = opt.metric;
  report.p = opt.p;
  report.depth = effective_depth(opt, target, items_of(runs.runs[0], target));

  std::vector<std::vector<RankedList>> ranked(m);
  parallel_for(m, jobs, [&](std::size_t i) { ranked[i] = ranked_topics(runs.runs[i], target, report.depth); });

  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) report.pairs.push_back({i, j, {}});
  parallel_for(report.pairs.size(), jobs, [&](std::size_t n) {
    auto& pr = report.pairs[n];
    pr.matching = match_topics(distance_matrix(ranked[pr.i], ranked[pr.j], opt.metric, opt.p));
  });
  return report;
}

WelchResult compare_stability(const StabilityReport& a, const StabilityReport& b) {
  const auto da = a.distances();
  const auto db = b.distances();
  return welch_t_test(da, db);
}

nlohmann::json to_json(const StabilityReport& report) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& pr : report.pairs) {
    pairs.push_back({{"i", pr.i},
                     {"j", pr.j},
                     {"td", pr.matching.total},
                     {"permutation", pr.matching.permutation}});
  }
  return {{"target", to_string(report.target)},
          {"metric", to_string(report.metric)},
          {"p", report.p},
          {"T", report.depth},
          {"pairs", pairs},
          {"mean", report.mean()},
          {"std", report.stddev()}};
}

}  // namespace tmeval
