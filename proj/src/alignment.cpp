#include "tmeval/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <unordered_map>

#include "tmeval/error.hpp"
#include "tmeval/parallel.hpp"

namespace tmeval {

Labeling hard_assign(const Matrix& theta, const std::vector<bool>& exclude) {
  if (!exclude.empty() && exclude.size() != theta.rows()) {
    throw Error("exclusion mask length does not match theta rows");
  }
  Labeling out;
  for (std::size_t d = 0; d < theta.rows(); ++d) {
    if (!exclude.empty() && exclude[d]) continue;
    auto row = theta.row(d);
    // max_element returns the first maximum, i.e. the smallest topic index
    out.docs.push_back(d);
    out.labels.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
  }
  return out;
}

Labeling gold_labeling(const Corpus& corpus, LabelLevel level) {
  const auto& ids = level == LabelLevel::high ? corpus.high_of_doc : corpus.low_of_doc;
  Labeling out;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    if (corpus.empty[d]) continue;
    out.docs.push_back(d);
    out.labels.push_back(ids[d]);
  }
  return out;
}

namespace {

/// Relabels by order of first appearance, so every statistic below is computed
/// from the same numbers in the same order regardless of how clusters are named.
std::vector<int> canonical(const std::vector<int>& labels, int& n_clusters) {
  std::unordered_map<int, int> remap;
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = remap.emplace(labels[i], static_cast<int>(remap.size()));
    out[i] = it->second;
  }
  n_clusters = static_cast<int>(remap.size());
  return out;
}

struct Contingency {
  std::int64_t n = 0;
  int rows = 0;  // pred clusters
  int cols = 0;  // gold clusters
  std::vector<std::int64_t> cells;  // rows x cols
  std::vector<std::int64_t> row_sums;
  std::vector<std::int64_t> col_sums;
  bool identical = false;

  std::int64_t at(int i, int j) const { return cells[static_cast<std::size_t>(i) * cols + j]; }
};

Contingency contingency(const Labeling& pred, const Labeling& gold) {
  if (pred.docs != gold.docs || pred.labels.size() != gold.labels.size()) {
    throw Error("labelings cover different documents");
  }
  Contingency c;
  const auto a = canonical(pred.labels, c.rows);
  const auto b = canonical(gold.labels, c.cols);
  c.n = static_cast<std::int64_t>(a.size());
  c.cells.assign(static_cast<std::size_t>(c.rows) * c.cols, 0);
  c.row_sums.assign(c.rows, 0);
  c.col_sums.assign(c.cols, 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++c.cells[static_cast<std::size_t>(a[i]) * c.cols + b[i]];
    ++c.row_sums[a[i]];
    ++c.col_sums[b[i]];
  }
  c.identical = a == b;
  return c;
}

std::int64_t choose2(std::int64_t x) { return x * (x - 1) / 2; }

struct PairCounts {
  std::int64_t total = 0;     // C(n, 2)
  std::int64_t together = 0;  // sum C(n_ij, 2)
  std::int64_t pred = 0;      // sum C(a_i, 2)
  std::int64_t gold = 0;      // sum C(b_j, 2)
};

PairCounts pair_counts(const Contingency& c) {
  PairCounts p;
  p.total = choose2(c.n);
  for (auto x : c.cells) p.together += choose2(x);
  for (auto x : c.row_sums) p.pred += choose2(x);
  for (auto x : c.col_sums) p.gold += choose2(x);
  return p;
}

std::int64_t majority_sum(const Contingency& c, bool by_row) {
  std::int64_t sum = 0;
  const int outer = by_row ? c.rows : c.cols;
  const int inner = by_row ? c.cols : c.rows;
  for (int i = 0; i < outer; ++i) {
    std::int64_t best = 0;
    for (int j = 0; j < inner; ++j) best = std::max(best, by_row ? c.at(i, j) : c.at(j, i));
    sum += best;
  }
  return sum;
}

double entropy(const std::vector<std::int64_t>& sizes, std::int64_t n) {
  std::vector<double> terms;
  for (auto s : sizes) {
    if (s == 0) continue;
    const double q = static_cast<double>(s) / static_cast<double>(n);
    terms.push_back(-q * std::log(q));
  }
  std::sort(terms.begin(), terms.end());
  double h = 0.0;
  for (double t : terms) h += t;
  return h;
}

}  // namespace

double rand_index(const Labeling& pred, const Labeling& gold) {
  const auto c = contingency(pred, gold);
  if (c.n < 2) throw Error("Rand index needs at least two documents");
  const auto p = pair_counts(c);
  // agreements = pairs together in both + pairs apart in both
  const std::int64_t agree = p.total + 2 * p.together - p.pred - p.gold;
  return static_cast<double>(agree) / static_cast<double>(p.total);
}

double adjusted_rand_index(const Labeling& pred, const Labeling& gold) {
  const auto c = contingency(pred, gold);
  if (c.n < 2) throw Error("adjusted Rand index needs at least two documents");
  const auto p = pair_counts(c);
  // (index - A B / C) / ((A + B) / 2 - A B / C), scaled by 2C to stay in integers
  using wide = __int128;
  const wide num = 2 * (static_cast<wide>(p.together) * p.total - static_cast<wide>(p.pred) * p.gold);
  const wide den = static_cast<wide>(p.pred + p.gold) * p.total - 2 * static_cast<wide>(p.pred) * p.gold;
  if (den == 0) return c.identical ? 1.0 : 0.0;
  return static_cast<double>(static_cast<long double>(num) / static_cast<long double>(den));
}

double nmi(const Labeling& pred, const Labeling& gold) {
  const auto c = contingency(pred, gold);
  if (c.n == 0) throw Error("NMI needs at least one document");
  const double n = static_cast<double>(c.n);
  const double h = entropy(c.row_sums, c.n) + entropy(c.col_sums, c.n);
  if (h == 0.0) return c.identical ? 1.0 : 0.0;

  // Each term depends on a_i * b_j, so sorting the terms makes the sum
  // independent of which labeling is which.
  std::vector<double> terms;
  for (int i = 0; i < c.rows; ++i) {
    for (int j = 0; j < c.cols; ++j) {
      const auto nij = c.at(i, j);
      if (nij == 0) continue;
      const double outer = static_cast<double>(c.row_sums[i]) * static_cast<double>(c.col_sums[j]);
      terms.push_back(static_cast<double>(nij) / n * std::log(n * static_cast<double>(nij) / outer));
    }
  }
  std::sort(terms.begin(), terms.end());
  double mi = 0.0;
  for (double t : terms) mi += t;
  if (mi <= 0.0) return 0.0;
  return std::clamp(2.0 * mi / h, 0.0, 1.0);
}

double purity(const Labeling& pred, const Labeling& gold) {
  const auto c = contingency(pred, gold);
  if (c.n == 0) throw Error("purity needs at least one document");
  return static_cast<double>(majority_sum(c, true)) / static_cast<double>(c.n);
}

AlignmentScores p1(const Labeling& pred, const Labeling& gold) {
  AlignmentScores s;
  s.purity = purity(pred, gold);
  s.inverse_purity = purity(gold, pred);
  s.p1 = 2.0 * s.purity * s.inverse_purity / (s.purity + s.inverse_purity);
  return s;
}

AlignmentScores score_alignment(const Labeling& pred, const Labeling& gold) {
  AlignmentScores s = p1(pred, gold);
  s.ari = adjusted_rand_index(pred, gold);
  s.nmi = nmi(pred, gold);
  return s;
}

std::string to_string(AlignmentMetric m) {
  switch (m) {
    case AlignmentMetric::ari: return "ari";
    case AlignmentMetric::nmi: return "nmi";
    case AlignmentMetric::purity: return "purity";
    case AlignmentMetric::inverse_purity: return "inverse_purity";
    case AlignmentMetric::p1: return "p1";
  }
  return "?";
}

AlignmentMetric parse_alignment_metric(const std::string& s) {
  for (auto m : kAlignmentMetrics)
    if (to_string(m) == s) return m;
  throw Error("unknown alignment metric '" + s + "'");
}

double get(const AlignmentScores& s, AlignmentMetric m) {
  switch (m) {
    case AlignmentMetric::ari: return s.ari;
    case AlignmentMetric::nmi: return s.nmi;
    case AlignmentMetric::purity: return s.purity;
    case AlignmentMetric::inverse_purity: return s.inverse_purity;
    case AlignmentMetric::p1: return s.p1;
  }
  return 0.0;
}

std::vector<double> AlignmentReport::values(AlignmentMetric m) const {
  std::vector<double> out;
  for (const auto& r : rows) out.push_back(get(r.scores, m));
  return out;
}

double AlignmentReport::mean(AlignmentMetric m) const { return tmeval::mean(values(m)); }
double AlignmentReport::stddev(AlignmentMetric m) const { return sample_std(values(m)); }

AlignmentReport alignment_report(const RunSet& runs, const Corpus& gold, LabelLevel level,
                                 unsigned jobs) {
  if (runs.context.N != gold.size()) {
    throw Error("run set has N = " + std::to_string(runs.context.N) + " documents but the gold corpus has " +
                std::to_string(gold.size()));
  }
  const Labeling truth = gold_labeling(gold, level);
  AlignmentReport report;
  report.level = level;
  report.rows.resize(runs.size());
  parallel_for(runs.size(), jobs, [&](std::size_t i) {
    report.rows[i].run_id = runs.names[i];
    report.rows[i].scores = score_alignment(hard_assign(runs.runs[i].theta, gold.empty), truth);
  });
  return report;
}

std::vector<std::pair<AlignmentMetric, WelchResult>> compare_alignment(const AlignmentReport& a,
                                                                       const AlignmentReport& b) {
  std::vector<std::pair<AlignmentMetric, WelchResult>> out;
  for (auto m : kAlignmentMetrics) {
    const auto va = a.values(m), vb = b.values(m);
    out.emplace_back(m, welch_t_test(va, vb));
  }
  return out;
}

nlohmann::json to_json(const AlignmentScores& s) {
  return {{"ari", s.ari}, {"nmi", s.nmi}, {"purity", s.purity},
          {"inverse_purity", s.inverse_purity}, {"p1", s.p1}};
}

nlohmann::json to_json(const AlignmentReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    auto j = to_json(row.scores);
    j["run_id"] = row.run_id;
    j["level"] = to_string(r.level);
    rows.push_back(j);
  }
  nlohmann::json summary = nlohmann::json::object();
  for (auto m : kAlignmentMetrics) {
    summary[to_string(m)] = {{"mean", r.mean(m)}, {"std", r.stddev(m)}};
  }
  return {{"level", to_string(r.level)}, {"runs", rows}, {"summary", summary}};
}

std::string to_csv(const AlignmentReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "run_id,level,ari,nmi,purity,inverse_purity,p1\n";
  for (const auto& row : r.rows) {
    const auto& s = row.scores;
    out << row.run_id << ',' << to_string(r.level) << ',' << s.ari << ',' << s.nmi << ',' << s.purity
        << ',' << s.inverse_purity << ',' << s.p1 << '\n';
  }
  return out.str();
}

}  // namespace tmeval
