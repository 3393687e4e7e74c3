#include "tmeval/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "tmeval/error.hpp"
#include "tmeval/run_io.hpp"
#include "tmeval/stats.hpp"

namespace tmeval {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Mark m) {
  switch (m) {
    case Mark::none: return "none";
    case Mark::bold: return "bold";
    case Mark::underline: return "underline";
  }
  return "?";
}

std::vector<Mark> mark_column(const std::vector<std::vector<double>>& samples, bool lower_is_better,
                              double alpha) {
  std::vector<Mark> marks(samples.size(), Mark::none);
  std::optional<std::size_t> best;
  double best_mean = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].empty()) continue;
    const double m = mean(samples[i]);
    if (!best || (lower_is_better ? m < best_mean : m > best_mean)) {
      best = i;
      best_mean = m;
    }
  }
  if (!best) return marks;
  marks[*best] = Mark::bold;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (i == *best || samples[i].empty()) continue;
    if (samples[i].size() < 2 || samples[*best].size() < 2) {
      marks[i] = Mark::underline;
      continue;
    }
    const WelchResult w = welch_t_test(samples[i], samples[*best]);
    marks[i] = w.p_value < alpha ? Mark::none : Mark::underline;
  }
  return marks;
}

namespace {

std::string format_number(double x, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, x);
  return buf;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

TableCell make_cell(std::vector<double> values) {
  TableCell c;
  c.values = std::move(values);
  c.mean = mean(c.values);
  c.stddev = c.values.size() >= 2 ? sample_std(c.values) : 0.0;
  return c;
}

/// Index of (dataset, model) in rows, appended on first sight.
std::size_t row_index(ResultTable& t, const std::string& dataset, const std::string& model) {
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    if (t.rows[i].dataset == dataset && t.rows[i].model == model) return i;
  t.rows.push_back({dataset, model, std::vector<std::optional<TableCell>>(t.columns.size())});
  return t.rows.size() - 1;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

class RunCache {
 public:
  explicit RunCache(ReadOptions opt) : opt_(opt) {}

  const RunSet& runs(const fs::path& root) {
    auto it = runs_.find(root);
    if (it != runs_.end()) return it->second;
    const auto dirs = find_run_dirs(root);
    if (dirs.empty()) throw Error(root.string() + ": no run bundles found");
    return runs_.emplace(root, load_runset(dirs, opt_)).first->second;
  }

  const Corpus& corpus(const fs::path& path) {
    auto it = corpora_.find(path);
    if (it != corpora_.end()) return it->second;
    return corpora_.emplace(path, load_gold_corpus(path)).first->second;
  }

 private:
  ReadOptions opt_;
  std::map<fs::path, RunSet> runs_;
  std::map<fs::path, Corpus> corpora_;
};

ReadOptions read_options(const ReportManifest& m) {
  ReadOptions o;
  o.allow_unnormalized = m.allow_unnormalized;
  return o;
}

std::string vocab_label(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_unsigned() || v.is_number_integer()) return std::to_string(v.get<long long>());
  throw Error("V must be a string or an integer");
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

void ResultTable::mark() {
  std::vector<std::string> datasets;
  for (const auto& r : rows)
    if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end()) datasets.push_back(r.dataset);

  for (std::size_t c = 0; c < columns.size(); ++c) {
    for (const auto& ds : datasets) {
      std::vector<std::size_t> idx;
      std::vector<std::vector<double>> samples;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].dataset != ds) continue;
        idx.push_back(r);
        samples.push_back(rows[r].cells[c] ? rows[r].cells[c]->values : std::vector<double>{});
      }
      const auto marks = mark_column(samples, lower_is_better);
      std::optional<std::size_t> best;
      for (std::size_t i = 0; i < idx.size(); ++i)
        if (marks[i] == Mark::bold) best = i;
      for (std::size_t i = 0; i < idx.size(); ++i) {
        auto& cell = rows[idx[i]].cells[c];
        if (!cell) continue;
        cell->mark = marks[i];
        cell->p_vs_best.reset();
        if (best && i != *best && samples[i].size() >= 2 && samples[*best].size() >= 2) {
          cell->p_vs_best = welch_t_test(samples[i], samples[*best]).p_value;
        }
      }
    }
  }
}

std::string ResultTable::to_csv() const {
  std::ostringstream out;
  out << "dataset,model";
  for (const auto& col : columns) {
    std::string h;
    for (std::size_t l = 0; l < col.header.size(); ++l) {
      if (l) h += "/";
      h += col.header[l];
    }
    out << "," << csv_escape(h);
  }
  out << "\n";
  for (const auto& r : rows) {
    out << csv_escape(r.dataset) << "," << csv_escape(r.model);
    for (const auto& cell : r.cells) {
      out << ",";
      if (!cell) continue;
      const std::string v = format_number(cell->mean, precision);
      if (cell->mark == Mark::bold) out << "**" << v << "**";
      else if (cell->mark == Mark::underline) out << "_" << v << "_";
      else out << v;
    }
    out << "\n";
  }
  return out.str();
}

json ResultTable::to_json() const {
  json cols = json::array();
  for (const auto& c : columns) cols.push_back(c.header);
  json rows_json = json::array();
  for (const auto& r : rows) {
    json cells = json::array();
    for (const auto& cell : r.cells) {
      if (!cell) {
        cells.push_back(nullptr);
        continue;
      }
      json c = {{"mean", cell->mean},
                {"std", cell->stddev},
                {"n", cell->values.size()},
                {"values", cell->values},
                {"mark", to_string(cell->mark)}};
      c["p_vs_best"] = cell->p_vs_best ? json(*cell->p_vs_best) : json(nullptr);
      cells.push_back(c);
    }
    rows_json.push_back({{"dataset", r.dataset}, {"model", r.model}, {"cells", cells}});
  }
  return {{"name", name},
          {"lower_is_better", lower_is_better},
          {"header_levels", header_levels},
          {"columns", cols},
          {"rows", rows_json}};
}

ReportManifest ReportManifest::from_json(const json& j, const fs::path& base_dir) {
  ReportManifest m;
  try {
    if (j.contains("stability_options")) {
      const auto& o = j.at("stability_options");
      if (o.contains("metric")) m.stability_options.metric = parse_metric(o.at("metric").get<std::string>());
      if (o.contains("p")) m.stability_options.p = o.at("p").get<double>();
      if (o.contains("depth")) m.stability_options.depth = o.at("depth").get<std::size_t>();
    }
    m.allow_unnormalized = j.value("allow_unnormalized", false);
    for (const auto& e : j.value("stability", json::array())) {
      m.stability.push_back({e.at("dataset").get<std::string>(), e.at("model").get<std::string>(),
                             vocab_label(e.at("V")), e.at("K").get<std::size_t>(),
                             resolve(base_dir, e.at("runs").get<std::string>())});
    }
    for (const auto& e : j.value("alignment", json::array())) {
      m.alignment.push_back({e.at("dataset").get<std::string>(), e.at("model").get<std::string>(),
                             e.at("K").get<std::size_t>(), resolve(base_dir, e.at("runs").get<std::string>()),
                             resolve(base_dir, e.at("gold").get<std::string>()),
                             parse_label_level(e.value("level", std::string("low")))});
    }
    for (const auto& e : j.value("ensemble", json::array())) {
      EnsembleEntry en;
      en.model = e.at("model").get<std::string>();
      en.runs = resolve(base_dir, e.at("runs").get<std::string>());
      en.gold = resolve(base_dir, e.at("gold").get<std::string>());
      en.level = parse_label_level(e.value("level", std::string("low")));
      en.config.lambda = e.value("lambda", 1.0);
      en.config.distance.metric = parse_metric(e.value("metric", std::string("rbo")));
      en.config.distance.p = e.value("p", 0.9);
      en.config.distance.depth = e.value("depth", std::size_t{0});
      en.config.cluster.algorithm = parse_cluster_algorithm(e.value("algorithm", std::string("kmedoids")));
      if (e.contains("k_target")) en.config.cluster.k_target = e.at("k_target").get<std::size_t>();
      if (e.contains("distance_threshold"))
        en.config.cluster.distance_threshold = e.at("distance_threshold").get<double>();
      en.config.cluster.seed = e.value("seed", std::uint64_t{0});
      m.ensemble.push_back(en);
    }
  } catch (const json::exception& e) {
    throw Error(std::string("report manifest: ") + e.what());
  }
  return m;
}

ResultTable stability_table(const ReportManifest& m, unsigned jobs) {
  ResultTable t;
  t.name = "stability";
  t.lower_is_better = true;
  t.header_levels = {"V", "K", "target"};

  // columns: vocabulary labels in order of first appearance, then K ascending
  std::vector<std::string> vocab_order;
  std::map<std::string, std::set<std::size_t>> ks;
  for (const auto& e : m.stability) {
    if (std::find(vocab_order.begin(), vocab_order.end(), e.vocab_label) == vocab_order.end())
      vocab_order.push_back(e.vocab_label);
    ks[e.vocab_label].insert(e.K);
  }
  std::map<std::pair<std::string, std::size_t>, std::size_t> first_col;
  for (const auto& v : vocab_order) {
    for (auto k : ks[v]) {
      first_col[{v, k}] = t.columns.size();
      t.columns.push_back({{"V=" + v, "K=" + std::to_string(k), "Theta"}});
      t.columns.push_back({{"V=" + v, "K=" + std::to_string(k), "B"}});
    }
  }

  RunCache cache(read_options(m));
  for (const auto& e : m.stability) {
    const RunSet& runs = cache.runs(e.runs);
    if (runs.context.K != e.K) {
      throw Error(e.runs.string() + ": runs have K = " + std::to_string(runs.context.K) + ", manifest says " +
                  std::to_string(e.K));
    }
    const std::size_t r = row_index(t, e.dataset, e.model);
    const std::size_t c = first_col.at({e.vocab_label, e.K});
    if (t.rows[r].cells[c]) throw Error("duplicate stability entry for " + e.dataset + "/" + e.model);
    t.rows[r].cells[c] = make_cell(runset_stability(runs, Target::theta, m.stability_options, jobs).distances());
    t.rows[r].cells[c + 1] = make_cell(runset_stability(runs, Target::beta, m.stability_options, jobs).distances());
  }
  t.mark();
  return t;
}

ResultTable alignment_table(const ReportManifest& m, unsigned jobs) {
  ResultTable t;
  t.name = "alignment";
  t.lower_is_better = false;
  t.header_levels = {"K", "metric"};
  const std::vector<AlignmentMetric> metrics = {AlignmentMetric::ari, AlignmentMetric::nmi, AlignmentMetric::p1};

  std::set<std::size_t> ks;
  for (const auto& e : m.alignment) ks.insert(e.K);
  std::map<std::size_t, std::size_t> first_col;
  for (auto k : ks) {
    first_col[k] = t.columns.size();
    for (auto metric : metrics) t.columns.push_back({{"K=" + std::to_string(k), to_string(metric)}});
  }

  RunCache cache(read_options(m));
  for (const auto& e : m.alignment) {
    const RunSet& runs = cache.runs(e.runs);
    if (runs.context.K != e.K) {
      throw Error(e.runs.string() + ": runs have K = " + std::to_string(runs.context.K) + ", manifest says " +
                  std::to_string(e.K));
    }
    const AlignmentReport rep = alignment_report(runs, cache.corpus(e.gold), e.level, jobs);
    const std::size_t r = row_index(t, e.dataset, e.model);
    const std::size_t c = first_col.at(e.K);
    if (t.rows[r].cells[c]) throw Error("duplicate alignment entry for " + e.dataset + "/" + e.model);
    for (std::size_t i = 0; i < metrics.size(); ++i) t.rows[r].cells[c + i] = make_cell(rep.values(metrics[i]));
  }
  t.mark();
  return t;
}

EnsembleTable ensemble_table(const ReportManifest& m, unsigned jobs) {
  const std::vector<AlignmentMetric> metrics = {AlignmentMetric::ari, AlignmentMetric::nmi, AlignmentMetric::p1};
  struct Tally {
    std::size_t settings = 0, worst = 0, median = 0, best = 0;
  };
  std::vector<std::string> order;
  std::map<std::string, Tally> tallies;
  std::map<std::string, EnsembleTableRow> config_of;
  Tally overall;

  RunCache cache(read_options(m));
  for (const auto& e : m.ensemble) {
    const RunSet& runs = cache.runs(e.runs);
    const Corpus& gold = cache.corpus(e.gold);
    const EnsembleModel model = build_ensemble(runs, e.config, jobs);
    const EnsembleEvaluation ev = evaluate_ensemble(model, runs, gold, e.level, jobs);

    EnsembleTableRow cfg;
    cfg.model = e.model;
    cfg.algorithm = to_string(e.config.cluster.algorithm);
    cfg.metric = to_string(e.config.distance.metric);
    cfg.lambda = e.config.lambda;
    if (!tallies.count(e.model)) {
      order.push_back(e.model);
      config_of[e.model] = cfg;
    } else {
      auto& known = config_of[e.model];
      if (known.algorithm != cfg.algorithm || known.metric != cfg.metric || known.lambda != cfg.lambda) {
        throw Error("ensemble entries for model " + e.model + " use different configurations");
      }
    }
    Tally& t = tallies[e.model];
    for (const auto& c : ev.comparisons) {
      if (std::find(metrics.begin(), metrics.end(), c.metric) == metrics.end()) continue;
      for (Tally* x : {&t, &overall}) {
        ++x->settings;
        x->worst += c.beats_worst();
        x->median += c.beats_median();
        x->best += c.beats_best();
      }
    }
  }

  auto fill = [](EnsembleTableRow row, const Tally& t) {
    row.settings = t.settings;
    const double n = static_cast<double>(std::max<std::size_t>(t.settings, 1));
    row.beats_worst = static_cast<double>(t.worst) / n;
    row.beats_median = static_cast<double>(t.median) / n;
    row.beats_best = static_cast<double>(t.best) / n;
    return row;
  };

  EnsembleTable table;
  if (order.empty()) return table;
  EnsembleTableRow pooled;
  pooled.model = "Overall";
  pooled.algorithm = config_of[order[0]].algorithm;
  pooled.metric = config_of[order[0]].metric;
  pooled.lambda = config_of[order[0]].lambda;
  bool mixed = false;
  for (const auto& name : order) {
    const auto& c = config_of[name];
    mixed = mixed || c.algorithm != pooled.algorithm || c.metric != pooled.metric || c.lambda != pooled.lambda;
  }
  if (mixed) {
    pooled.algorithm = "mixed";
    pooled.metric = "mixed";
    pooled.lambda = std::nan("");
  }
  table.rows.push_back(fill(pooled, overall));
  for (const auto& name : order) table.rows.push_back(fill(config_of[name], tallies[name]));
  return table;
}

std::string EnsembleTable::to_csv() const {
  std::ostringstream out;
  out << "model,algorithm,distance,lambda,settings,beats_worst,beats_median,beats_best\n";
  auto pct = [](double x) { return format_number(100.0 * x, 0) + "%"; };
  for (const auto& r : rows) {
    out << csv_escape(r.model) << "," << r.algorithm << "," << r.metric << ","
        << (std::isnan(r.lambda) ? std::string() : format_number(r.lambda, 2)) << "," << r.settings << ","
        << pct(r.beats_worst) << "," << pct(r.beats_median) << "," << pct(r.beats_best) << "\n";
  }
  return out.str();
}

json EnsembleTable::to_json() const {
  json rows_json = json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"model", r.model},
                         {"algorithm", r.algorithm},
                         {"distance", r.metric},
                         {"lambda", std::isnan(r.lambda) ? json(nullptr) : json(r.lambda)},
                         {"settings", r.settings},
                         {"beats_worst", r.beats_worst},
                         {"beats_median", r.beats_median},
                         {"beats_best", r.beats_best}});
  }
  return {{"name", "ensemble"}, {"rows", rows_json}};
}

void write_reports(const ReportManifest& m, const fs::path& out_dir, unsigned jobs) {
  fs::create_directories(out_dir);
  if (!m.stability.empty()) {
    const auto t = stability_table(m, jobs);
    write_text(out_dir / "stability.csv", t.to_csv());
    write_text(out_dir / "stability.json", t.to_json().dump(2) + "\n");
  }
  if (!m.alignment.empty()) {
    const auto t = alignment_table(m, jobs);
    write_text(out_dir / "alignment.csv", t.to_csv());
    write_text(out_dir / "alignment.json", t.to_json().dump(2) + "\n");
  }
  if (!m.ensemble.empty()) {
    const auto t = ensemble_table(m, jobs);
    write_text(out_dir / "ensemble.csv", t.to_csv());
    write_text(out_dir / "ensemble.json", t.to_json().dump(2) + "\n");
  }
}

}  // namespace tmeval
