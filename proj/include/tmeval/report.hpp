#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tmeval/alignment.hpp"
#include "tmeval/ensemble.hpp"
#include "tmeval/stability.hpp"

namespace tmeval {

enum class Mark { none, bold, underline };
std::string to_string(Mark m);

/// Column marking used by the comparison tables: the best entry is bold, and
/// every other entry whose Welch test against the best has p >= 0.05 (or
/// cannot be run for lack of samples) is underlined.
std::vector<Mark> mark_column(const std::vector<std::vector<double>>& samples, bool lower_is_better,
                              double alpha = 0.05);

struct TableCell {
  std::vector<double> values;  // per-pair TDs or per-run scores
  double mean = 0.0;
  double stddev = 0.0;
  Mark mark = Mark::none;
  std::optional<double> p_vs_best;
};

struct TableColumn {
  std::vector<std::string> header;  // one entry per header level, outermost first
};

struct TableRow {
  std::string dataset;
  std::string model;
  std::vector<std::optional<TableCell>> cells;
};

/// A results table laid out as dataset/model rows against context columns.
struct ResultTable {
  std::string name;
  std::vector<std::string> header_levels;
  std::vector<TableColumn> columns;
  std::vector<TableRow> rows;
  bool lower_is_better = false;
  int precision = 2;

  /// Recomputes marks column by column, restricted to rows of one dataset.
  void mark();
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

struct StabilityEntry {
  std::string dataset;
  std::string model;
  std::string vocab_label;  // e.g. "5k"
  std::size_t K = 0;
  std::filesystem::path runs;
};

struct AlignmentEntry {
  std::string dataset;
  std::string model;
  std::size_t K = 0;
  std::filesystem::path runs;
  std::filesystem::path gold;
  LabelLevel level = LabelLevel::low;
};

struct EnsembleEntry {
  std::string model;
  std::filesystem::path runs;
  std::filesystem::path gold;
  LabelLevel level = LabelLevel::low;
  EnsembleConfig config;
};

struct ReportManifest {
  std::vector<StabilityEntry> stability;
  std::vector<AlignmentEntry> alignment;
  std::vector<EnsembleEntry> ensemble;
  StabilityOptions stability_options;
  bool allow_unnormalized = false;

  /// Relative paths are resolved against base_dir.
  static ReportManifest from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
};

ResultTable stability_table(const ReportManifest& m, unsigned jobs = 1);
ResultTable alignment_table(const ReportManifest& m, unsigned jobs = 1);

struct EnsembleTableRow {
  std::string model;  // "Overall" for the pooled row
  std::string algorithm;
  std::string metric;
  double lambda = 1.0;
  std::size_t settings = 0;  // contexts x {ARI, NMI, P1}
  double beats_worst = 0.0;  // fractions of settings
  double beats_median = 0.0;
  double beats_best = 0.0;
};

struct EnsembleTable {
  std::vector<EnsembleTableRow> rows;

  std::string to_csv() const;
  nlohmann::json to_json() const;
};

/// One row per model plus a leading "Overall" row pooling all settings.
EnsembleTable ensemble_table(const ReportManifest& m, unsigned jobs = 1);

/// Writes stability.{csv,json}, alignment.{csv,json} and ensemble.{csv,json}
/// for the sections present in the manifest.
void write_reports(const ReportManifest& m, const std::filesystem::path& out_dir, unsigned jobs = 1);

}  // namespace tmeval
