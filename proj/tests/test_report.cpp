#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "helpers.hpp"
#include "tmeval/error.hpp"
#include "tmeval/report.hpp"

using namespace tmeval;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kFixtures = TMEVAL_FIXTURES_DIR;

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::string f;
    std::istringstream ls(line);
    while (std::getline(ls, f, ',')) fields.push_back(f);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    out.push_back(fields);
  }
  return out;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

ReportManifest fixture_manifest() { return ReportManifest::from_json(read_json(kFixtures / "manifest.json"), kFixtures); }

std::vector<std::string> strings(const json& j) { return j.get<std::vector<std::string>>(); }

}  // namespace

TEST_CASE("column marking") {
  const std::vector<double> low = {0.20, 0.21, 0.22, 0.19}, close = {0.21, 0.22, 0.20, 0.23},
                            far = {0.60, 0.61, 0.62, 0.59};
  auto m = mark_column({far, low, close}, true);
  CHECK(m == std::vector<Mark>{Mark::none, Mark::bold, Mark::underline});
  m = mark_column({far, low, close}, false);
  CHECK(m[0] == Mark::bold);
  CHECK(m[1] == Mark::none);
  CHECK(m[2] == Mark::none);
  // single-sample entries cannot be tested
  m = mark_column({low, {0.9}}, true);
  CHECK(m == std::vector<Mark>{Mark::bold, Mark::underline});
  m = mark_column({{}, low}, true);
  CHECK(m == std::vector<Mark>{Mark::none, Mark::bold});
  CHECK(mark_column({}, true).empty());
}

TEST_CASE("table marking is per dataset and CSV marks cells") {
  ResultTable t;
  t.columns = {{{"K=5", "ari"}}, {{"K=5", "nmi"}}};
  auto cell = [](std::vector<double> v) {
    TableCell c;
    c.values = v;
    c.mean = mean(v);
    return c;
  };
  t.rows.push_back({"X", "m1", {cell({0.5, 0.52, 0.51}), std::nullopt}});
  t.rows.push_back({"X", "m2", {cell({0.1, 0.12, 0.11}), cell({0.3, 0.31})}});
  t.rows.push_back({"Y", "m1", {cell({0.2, 0.21, 0.22}), cell({0.4, 0.4})}});
  t.mark();
  CHECK(t.rows[0].cells[0]->mark == Mark::bold);
  CHECK(t.rows[1].cells[0]->mark == Mark::none);
  CHECK(t.rows[1].cells[1]->mark == Mark::bold);
  CHECK(t.rows[2].cells[0]->mark == Mark::bold);
  CHECK(t.rows[2].cells[1]->mark == Mark::bold);
  CHECK(t.rows[1].cells[0]->p_vs_best.has_value());
  const auto csv = parse_csv(t.to_csv());
  CHECK(csv[0] == std::vector<std::string>{"dataset", "model", "K=5/ari", "K=5/nmi"});
  CHECK(csv[1] == std::vector<std::string>{"X", "m1", "**0.51**", ""});
  CHECK(csv[2] == std::vector<std::string>{"X", "m2", "0.11", "**0.30**"});
  const auto j = t.to_json();
  CHECK(j.dump().find("\"bold\"") != std::string::npos);
}

TEST_CASE("stability table from third-party bundles") {
  const auto manifest = fixture_manifest();
  const auto expected = read_json(kFixtures / "expected_tables.json").at("stability");
  const auto t = stability_table(manifest, 2);
  const auto csv = parse_csv(t.to_csv());
  CHECK(csv[0] == strings(expected.at("header")));
  REQUIRE(csv.size() == 1 + expected.at("rows").size());
  for (std::size_t r = 0; r < expected.at("rows").size(); ++r) {
    CHECK(std::vector<std::string>(csv[r + 1].begin(), csv[r + 1].begin() + 2) == strings(expected.at("rows")[r]));
    CHECK(csv[r + 1].size() == csv[0].size());
  }

  // each cell equals a direct computation on the same run set
  ReadOptions ro;
  ro.allow_unnormalized = true;
  const auto& e = manifest.stability[3];  // dvae, V=24, K=6
  const RunSet runs = load_runset(find_run_dirs(e.runs), ro);
  const auto beta = runset_stability(runs, Target::beta, manifest.stability_options);
  const auto theta = runset_stability(runs, Target::theta, manifest.stability_options);
  const auto& row = t.rows[1];
  CHECK(row.model == "dvae");
  REQUIRE(row.cells[2].has_value());
  CHECK(row.cells[2]->values == theta.distances());
  CHECK(row.cells[3]->values == beta.distances());
  CHECK(row.cells[3]->values.size() == 6);
  CHECK(row.cells[3]->mean == beta.mean());
}

TEST_CASE("alignment table from third-party bundles") {
  const auto manifest = fixture_manifest();
  const auto expected = read_json(kFixtures / "expected_tables.json").at("alignment");
  const auto t = alignment_table(manifest);
  const auto csv = parse_csv(t.to_csv());
  CHECK(csv[0] == strings(expected.at("header")));
  REQUIRE(csv.size() == 1 + expected.at("rows").size());

  ReadOptions ro;
  ro.allow_unnormalized = true;
  const auto& e = manifest.alignment[0];
  const auto rep = alignment_report(load_runset(find_run_dirs(e.runs), ro), load_gold_corpus(e.gold), e.level);
  CHECK(t.rows[0].cells[0]->values == rep.values(AlignmentMetric::ari));
  CHECK(t.rows[0].cells[2]->values == rep.values(AlignmentMetric::p1));
  // some column must carry a bold best entry
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    int bold = 0;
    for (const auto& r : t.rows) bold += r.cells[c] && r.cells[c]->mark == Mark::bold;
    CHECK(bold == 1);
  }
}

TEST_CASE("ensemble table from third-party bundles") {
  const auto manifest = fixture_manifest();
  const auto expected = read_json(kFixtures / "expected_tables.json").at("ensemble");
  const auto t = ensemble_table(manifest);
  const auto csv = parse_csv(t.to_csv());
  CHECK(csv[0] == strings(expected.at("header")));
  REQUIRE(csv.size() == 1 + expected.at("rows").size());
  for (std::size_t r = 0; r < expected.at("rows").size(); ++r)
    CHECK(std::vector<std::string>(csv[r + 1].begin(), csv[r + 1].begin() + 5) == strings(expected.at("rows")[r]));

  // the pooled row is the settings-weighted mean of the model rows
  double worst = 0, median = 0;
  std::size_t settings = 0;
  for (std::size_t r = 1; r < t.rows.size(); ++r) {
    settings += t.rows[r].settings;
    worst += t.rows[r].beats_worst * static_cast<double>(t.rows[r].settings);
    median += t.rows[r].beats_median * static_cast<double>(t.rows[r].settings);
  }
  CHECK(t.rows[0].settings == settings);
  CHECK(t.rows[0].beats_worst == doctest::Approx(worst / static_cast<double>(settings)));
  CHECK(t.rows[0].beats_median == doctest::Approx(median / static_cast<double>(settings)));
}

TEST_CASE("ensemble table pools differing configurations as mixed") {
  auto j = read_json(kFixtures / "manifest.json");
  j["stability"] = json::array();
  j["alignment"] = json::array();
  j["ensemble"][1]["metric"] = "jaccard";
  j["ensemble"][3]["metric"] = "jaccard";
  j["ensemble"][3]["lambda"] = 0.25;
  j["ensemble"][3]["algorithm"] = "agglomerative";
  j["ensemble"][3]["k_target"] = 6;
  j["ensemble"][2]["metric"] = "jaccard";
  j["ensemble"][2]["lambda"] = 0.25;
  j["ensemble"][2]["algorithm"] = "agglomerative";
  j["ensemble"][2]["k_target"] = 3;
  j["ensemble"][0]["metric"] = "jaccard";
  const auto t = ensemble_table(ReportManifest::from_json(j, kFixtures));
  CHECK(t.rows[0].model == "Overall");
  CHECK(t.rows[0].algorithm == "mixed");
  CHECK(std::isnan(t.rows[0].lambda));
  CHECK(t.rows[2].algorithm == "agglomerative");
  CHECK(t.rows[2].metric == "jaccard");
  CHECK(t.to_csv().find("Overall,mixed,mixed,,18,") != std::string::npos);

  j["ensemble"][1]["lambda"] = 0.5;
  CHECK_THROWS_AS(ensemble_table(ReportManifest::from_json(j, kFixtures)), Error);
}

TEST_CASE("manifest parsing") {
  const auto m = fixture_manifest();
  CHECK(m.allow_unnormalized);
  CHECK(m.stability.size() == 12);
  CHECK(m.alignment.size() == 6);
  CHECK(m.ensemble.size() == 6);
  CHECK(m.stability[0].vocab_label == "24");
  CHECK(m.stability[0].runs.is_absolute());
  CHECK(m.ensemble[0].config.lambda == 1.0);
  CHECK(m.ensemble[0].config.cluster.algorithm == ClusterAlgorithm::kmedoids);

  CHECK_THROWS_AS(ReportManifest::from_json(json{{"stability", {{{"dataset", "x"}}}}}, kFixtures), Error);
  CHECK_THROWS_AS(ReportManifest::from_json(json{{"stability_options", {{"metric", "cosine"}}}}, kFixtures), Error);
  auto j = read_json(kFixtures / "manifest.json");
  j["stability"][0]["V"] = 24;
  CHECK(ReportManifest::from_json(j, kFixtures).stability[0].vocab_label == "24");

  j["allow_unnormalized"] = false;
  CHECK_THROWS_AS(stability_table(ReportManifest::from_json(j, kFixtures)), Error);
}

TEST_CASE("writing all reports") {
  testutil::TempDir dir;
  write_reports(fixture_manifest(), dir.path());
  for (const char* f : {"stability.csv", "stability.json", "alignment.csv", "alignment.json", "ensemble.csv", "ensemble.json"})
    CHECK(fs::exists(dir / f));
  const auto j = read_json(dir / "ensemble.json");
  CHECK(j.at("rows").size() == 4);
  const auto s = read_json(dir / "stability.json");
  CHECK(s.at("rows").size() == 3);
}
