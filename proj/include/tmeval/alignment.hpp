#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tmeval/corpus.hpp"
#include "tmeval/matrix.hpp"
#include "tmeval/run_io.hpp"
#include "tmeval/stats.hpp"

namespace tmeval {

/// Cluster/category id per document. `docs` holds corpus row indices so two
/// labelings can be checked to cover the same documents.
struct Labeling {
  std::vector<std::size_t> docs;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
};

/// Most probable topic per row, ties to the smallest topic index. Rows with
/// exclude[d] set are skipped.
Labeling hard_assign(const Matrix& theta, const std::vector<bool>& exclude = {});

/// Gold labels at the given level for every non-empty document.
Labeling gold_labeling(const Corpus& corpus, LabelLevel level);

double rand_index(const Labeling& pred, const Labeling& gold);
double adjusted_rand_index(const Labeling& pred, const Labeling& gold);
double nmi(const Labeling& pred, const Labeling& gold);
/// Fraction of documents in the majority gold class of their predicted cluster.
double purity(const Labeling& pred, const Labeling& gold);

struct AlignmentScores {
  double ari = 0.0;
  double nmi = 0.0;
  double purity = 0.0;
  double inverse_purity = 0.0;
  double p1 = 0.0;
};

enum class AlignmentMetric { ari, nmi, purity, inverse_purity, p1 };
inline constexpr std::array<AlignmentMetric, 5> kAlignmentMetrics = {
    AlignmentMetric::ari, AlignmentMetric::nmi, AlignmentMetric::purity,
    AlignmentMetric::inverse_purity, AlignmentMetric::p1};
std::string to_string(AlignmentMetric m);
AlignmentMetric parse_alignment_metric(const std::string& s);
double get(const AlignmentScores& s, AlignmentMetric m);

/// Purity, inverse purity (purity with the roles swapped) and their harmonic mean.
AlignmentScores p1(const Labeling& pred, const Labeling& gold);

AlignmentScores score_alignment(const Labeling& pred, const Labeling& gold);

struct AlignmentRow {
  std::string run_id;
  AlignmentScores scores;
};

struct AlignmentReport {
  LabelLevel level = LabelLevel::low;
  std::vector<AlignmentRow> rows;

  std::vector<double> values(AlignmentMetric m) const;
  double mean(AlignmentMetric m) const;
  double stddev(AlignmentMetric m) const;
};

/// Scores every run's hard assignment against gold labels at `level`.
/// Documents flagged empty in the corpus are excluded.
AlignmentReport alignment_report(const RunSet& runs, const Corpus& gold, LabelLevel level,
                                 unsigned jobs = 1);

/// Per-metric Welch tests of report a against report b.
std::vector<std::pair<AlignmentMetric, WelchResult>> compare_alignment(const AlignmentReport& a,
                                                                       const AlignmentReport& b);

nlohmann::json to_json(const AlignmentScores& s);
nlohmann::json to_json(const AlignmentReport& r);
/// One row per run: run_id,level,ari,nmi,purity,inverse_purity,p1
std::string to_csv(const AlignmentReport& r);

}  // namespace tmeval
