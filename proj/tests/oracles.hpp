#pragma once

// Independent reference computations, written for clarity over speed.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include "tmeval/matrix.hpp"

namespace oracle {

/// Prefix-overlap sum, one prefix set at a time.
inline double rbo(const std::vector<std::uint32_t>& s, const std::vector<std::uint32_t>& l, double p) {
  const std::size_t k = std::min(s.size(), l.size());
  double sum = 0.0;
  double last = 0.0;
  for (std::size_t d = 1; d <= k; ++d) {
    std::set<std::uint32_t> a(s.begin(), s.begin() + d), b(l.begin(), l.begin() + d);
    std::size_t x = 0;
    for (auto v : a) x += b.count(v);
    const double agree = static_cast<double>(x) / static_cast<double>(d);
    sum += agree * std::pow(p, static_cast<double>(d));
    last = agree;
  }
  return last * std::pow(p, static_cast<double>(k)) + (1.0 - p) / p * sum;
}

inline double average_jaccard(const std::vector<std::uint32_t>& s, const std::vector<std::uint32_t>& l) {
  const std::size_t k = std::min(s.size(), l.size());
  double sum = 0.0;
  for (std::size_t d = 1; d <= k; ++d) {
    std::set<std::uint32_t> a(s.begin(), s.begin() + d), b(l.begin(), l.begin() + d);
    std::set<std::uint32_t> u = a;
    u.insert(b.begin(), b.end());
    std::size_t x = 0;
    for (auto v : a) x += b.count(v);
    sum += static_cast<double>(x) / static_cast<double>(u.size());
  }
  return sum / static_cast<double>(k);
}

/// Minimum of sum_k cost(k, pi(k)) over all permutations, divided by K.
inline double brute_force_matching(const tmeval::Matrix& cost) {
  const std::size_t n = cost.rows();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) total += cost(k, perm[k]);
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(n);
}

/// Full stable sort of indices by descending score.
inline std::vector<std::uint32_t> sorted_prefix(const std::vector<double>& scores, std::size_t depth) {
  std::vector<std::uint32_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0u);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  idx.resize(std::min(depth, idx.size()));
  return idx;
}

struct ClusterScores {
  double ri = 0.0, ari = 0.0, nmi = 0.0, purity = 0.0, inverse_purity = 0.0, p1 = 0.0;
};

/// Rand and adjusted Rand by pair enumeration; NMI (arithmetic-mean
/// normalization) and purity from a plug-in contingency table.
inline ClusterScores cluster_scores(const std::vector<int>& pred, const std::vector<int>& gold) {
  const std::size_t n = pred.size();
  ClusterScores out;
  double a = 0, b = 0, c = 0, d = 0;  // same/same, same/diff, diff/same, diff/diff
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool sp = pred[i] == pred[j], sg = gold[i] == gold[j];
      if (sp && sg) a += 1;
      else if (sp) b += 1;
      else if (sg) c += 1;
      else d += 1;
    }
  const double pairs = a + b + c + d;
  out.ri = pairs > 0 ? (a + d) / pairs : 1.0;
  const double expected = pairs > 0 ? (a + b) * (a + c) / pairs : 0.0;
  const double max_index = 0.5 * ((a + b) + (a + c));
  out.ari = max_index == expected ? (b == 0 && c == 0 ? 1.0 : 0.0) : (a - expected) / (max_index - expected);

  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> cp, cg;
  for (std::size_t i = 0; i < n; ++i) {
    joint[{pred[i], gold[i]}] += 1;
    cp[pred[i]] += 1;
    cg[gold[i]] += 1;
  }
  const double N = static_cast<double>(n);
  auto entropy = [&](const std::map<int, double>& m) {
    double h = 0;
    for (auto& [k, v] : m) h -= v / N * std::log(v / N);
    return h;
  };
  double mi = 0;
  for (auto& [key, v] : joint) mi += v / N * std::log(v * N / (cp[key.first] * cg[key.second]));
  const double hp = entropy(cp), hg = entropy(cg);
  out.nmi = (hp + hg) == 0.0 ? 1.0 : 2.0 * mi / (hp + hg);

  double pur = 0, inv = 0;
  for (auto& [k, _] : cp) {
    double best = 0;
    for (auto& [g, __] : cg) best = std::max(best, joint.count({k, g}) ? joint[{k, g}] : 0.0);
    pur += best;
  }
  for (auto& [g, _] : cg) {
    double best = 0;
    for (auto& [k, __] : cp) best = std::max(best, joint.count({k, g}) ? joint[{k, g}] : 0.0);
    inv += best;
  }
  out.purity = pur / N;
  out.inverse_purity = inv / N;
  out.p1 = 2.0 * out.purity * out.inverse_purity / (out.purity + out.inverse_purity);
  return out;
}

}  // namespace oracle
