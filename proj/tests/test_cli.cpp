#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "commands.hpp"
#include "helpers.hpp"
#include "tmeval/alignment.hpp"
#include "tmeval/error.hpp"
#include "tmeval/run_io.hpp"
#include "tmeval/stability.hpp"

using namespace tmeval;
using namespace tmeval::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

struct Proc {
  int status = -1;
  std::string output;
};

Proc run_binary(const std::string& args) {
  Proc p;
  const std::string cmd = std::string(TMEVAL_BINARY) + " " + args + " 2>&1";
  FILE* f = ::popen(cmd.c_str(), "r");
  REQUIRE(f != nullptr);
  char buf[512];
  while (std::fgets(buf, sizeof buf, f)) p.output += buf;
  const int rc = ::pclose(f);
  p.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  return p;
}

Config synth_config(const fs::path& out, std::uint64_t seed = 5) {
  return {{"out", out.string()}, {"K", 4},     {"V", 150}, {"N", 120}, {"doc_len_mean", 40},
          {"alpha", 0.1},        {"seed", seed}, {"topic_sparsity", 0.25}};
}

/// Small planted corpus plus three trained runs, shared by several cases.
struct Pipeline {
  testutil::TempDir dir;
  fs::path world, runs;

  Pipeline() {
    world = dir / "world";
    runs = dir / "runs";
    cmd_synth(synth_config(world));
    const Config train = {{"out", runs.string()},
                          {"corpus", (world / "corpus.jsonl").string()},
                          {"K", 4},
                          {"m", 3},
                          {"seeds", {1, 2, 3}},
                          {"hyperparams", {{"alpha", 0.5}, {"beta", 0.01}, {"n_iterations", 150}, {"burn_in", 50}, {"optimize_interval", 0}}},
                          {"jobs", 2}};
    REQUIRE(cmd_train(train) == 0);
  }
};

Pipeline& pipeline() {
  static Pipeline p;
  return p;
}

}  // namespace

TEST_CASE("synth writes a loadable, deterministic world") {
  testutil::TempDir dir;
  REQUIRE(cmd_synth(synth_config(dir / "a")) == 0);
  REQUIRE(cmd_synth(synth_config(dir / "b")) == 0);
  for (const char* f : {"corpus.jsonl", "vocab.txt", "truth.json", "truth/beta.mat", "truth/theta.mat"})
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  const Corpus c = load_gold_corpus(dir / "a" / "corpus.jsonl");
  CHECK(c.size() == 120);
  const RunBundle truth = read_run(dir / "a" / "truth");
  CHECK(max_row_sum_error(truth.beta) <= 1e-9);
  CHECK(max_row_sum_error(truth.theta) <= 1e-9);
  CHECK(read_json(dir / "a" / "truth.json").at("params").at("seed") == 5);

  cmd_synth(synth_config(dir / "c", 6));
  CHECK(slurp(dir / "a" / "corpus.jsonl") != slurp(dir / "c" / "corpus.jsonl"));
}

TEST_CASE("train writes one bundle per seed") {
  auto& p = pipeline();
  const auto dirs = find_run_dirs(p.runs);
  REQUIRE(dirs.size() == 3);
  std::set<std::uint64_t> seeds;
  for (const auto& d : dirs) {
    const RunBundle b = read_run(d);
    seeds.insert(b.meta.seed);
    CHECK(b.meta.K == 4);
    CHECK(std::get<double>(b.meta.hyperparams.at("alpha")) == 0.5);
  }
  CHECK(seeds == std::set<std::uint64_t>{1, 2, 3});
  const auto manifest = read_json(p.runs / "manifest.json");
  CHECK(manifest.at("completed").size() == 3);
  CHECK(manifest.at("failed").empty());
  CHECK(fs::exists(p.runs / "draws.json"));
  CHECK(fs::exists(p.runs / "train.jsonl"));
  CHECK(fs::exists(p.runs / "vocab.txt"));
}

TEST_CASE("hyperparameter draws are logged, in range and reproducible") {
  auto& p = pipeline();
  testutil::TempDir dir;
  const Config cfg = {{"corpus", (p.world / "corpus.jsonl").string()},
                      {"K", 3},
                      {"m", 4},
                      {"seed", 9},
                      {"hyperparams", {{"alpha", {0.01, 0.05, 0.1}}, {"beta", {{"min", 0.01}, {"max", 0.02}}}, {"n_iterations", 20}, {"burn_in", 5}}}};
  Config a = cfg, b = cfg;
  a["out"] = (dir / "a").string();
  b["out"] = (dir / "b").string();
  REQUIRE(cmd_train(a) == 0);
  REQUIRE(cmd_train(b) == 0);
  CHECK(slurp(dir / "a" / "draws.json") == slurp(dir / "b" / "draws.json"));
  for (const auto& d : read_json(dir / "a" / "draws.json")) {
    const double alpha = d.at("alpha").get<double>(), beta = d.at("beta").get<double>();
    CHECK((alpha == 0.01 || alpha == 0.05 || alpha == 0.1));
    CHECK(beta >= 0.01);
    CHECK(beta <= 0.02);
  }
  // bundles agree apart from the wall-clock timing field
  for (const char* run : {"run_000", "run_003"}) {
    CHECK(slurp(dir / "a" / run / "beta.mat") == slurp(dir / "b" / run / "beta.mat"));
    CHECK(slurp(dir / "a" / run / "theta.mat") == slurp(dir / "b" / run / "theta.mat"));
    auto ma = read_json(dir / "a" / run / "meta.json"), mb = read_json(dir / "b" / run / "meta.json");
    ma.erase("wall_time");
    mb.erase("wall_time");
    CHECK(ma == mb);
  }
}

TEST_CASE("draw_hyperparam forms") {
  Rng rng = make_rng(1);
  CHECK(draw_hyperparam(json(0.3), false, rng) == 0.3);
  for (int i = 0; i < 50; ++i) {
    const double v = draw_hyperparam(json{{"min", 10}, {"max", 12}}, true, rng);
    CHECK((v == 10 || v == 11 || v == 12));
  }
  CHECK_THROWS_AS(draw_hyperparam(json::array(), false, rng), Error);
  CHECK_THROWS_AS(draw_hyperparam(json{{"min", 2}, {"max", 1}}, false, rng), Error);
  CHECK_THROWS_AS(draw_hyperparam(json("x"), false, rng), Error);
}

TEST_CASE("train with a held-out split") {
  auto& p = pipeline();
  testutil::TempDir dir;
  const Config cfg = {{"out", (dir / "r").string()},
                      {"corpus", (p.world / "corpus.jsonl").string()},
                      {"K", 3},
                      {"m", 1},
                      {"split", {{"heldout_fraction", 0.25}, {"unseen_low_fraction", 0.5}}},
                      {"heldout_iterations", 20},
                      {"hyperparams", {{"n_iterations", 20}, {"burn_in", 5}}}};
  REQUIRE(cmd_train(cfg) == 0);
  const SplitSpec split = read_split(dir / "r" / "split.json");
  const RunBundle b = read_run(dir / "r" / "run_000");
  CHECK(b.meta.N == split.train_ids.size());
  const Matrix h = read_matrix(dir / "r" / "run_000" / "heldout_theta.mat");
  CHECK(h.rows() == split.heldout_ids.size());
  CHECK(h.cols() == 3);
}

TEST_CASE("stability command") {
  auto& p = pipeline();
  testutil::TempDir dir;
  const Config cfg = {{"out", (dir / "s").string()}, {"runsets", {p.runs.string(), (p.world / "truth").string()}}};
  // a single truth bundle is not a run set for stability
  CHECK_THROWS_AS(cmd_stability(cfg), Error);

  // duplicated bundle set
  fs::create_directories(dir / "dup");
  for (int i = 0; i < 3; ++i) fs::copy(p.world / "truth", dir / "dup" / ("copy" + std::to_string(i)), fs::copy_options::recursive);
  const Config two = {{"out", (dir / "s").string()}, {"runsets", {(dir / "dup").string(), p.runs.string()}}, {"jobs", 2}};
  REQUIRE(cmd_stability(two) == 0);
  const auto j = read_json(dir / "s" / "stability.json");
  CHECK(j.at("runsets")[0].at("beta").at("mean") == 0.0);
  CHECK(j.at("runsets")[0].at("theta").at("mean") == 0.0);

  const RunSet runs = load_runset(find_run_dirs(p.runs));
  const auto beta = runset_stability(runs, Target::beta);
  CHECK(j.at("runsets")[1].at("beta").at("mean").get<double>() == beta.mean());

  const std::string csv = slurp(dir / "s" / "stability.csv");
  CHECK(csv.rfind("runset,target,metric,p,T,pairs,mean,std\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  const std::string cmp = slurp(dir / "s" / "stability_comparison.csv");
  CHECK(cmp.rfind("target,mean_a,mean_b,t,df,p_value,a_is_smaller\n", 0) == 0);
  CHECK(cmp.find("beta,0,") != std::string::npos);
}

TEST_CASE("alignment command") {
  auto& p = pipeline();
  testutil::TempDir dir;
  fs::create_directories(dir / "truth");
  for (int i = 0; i < 2; ++i) fs::copy(p.world / "truth", dir / "truth" / ("copy" + std::to_string(i)), fs::copy_options::recursive);
  Config cfg = {{"out", (dir / "a").string()},
                {"runsets", {(dir / "truth").string(), p.runs.string()}},
                {"gold", (p.world / "corpus.jsonl").string()}};
  REQUIRE(cmd_alignment(cfg) == 0);
  const auto j = read_json(dir / "a" / "alignment.json");
  // truth topics reproduce the argmax labels exactly
  for (const auto& row : j.at("runsets")[0].at("report").at("runs")) CHECK(row.at("ari") == 1.0);
  const std::string csv = slurp(dir / "a" / "alignment.csv");
  CHECK(csv.rfind("run_id,level,ari,nmi,purity,inverse_purity,p1\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
  CHECK(fs::exists(dir / "a" / "alignment_comparison.csv"));

  cfg["level"] = "high";
  cfg["out"] = (dir / "h").string();
  REQUIRE(cmd_alignment(cfg) == 0);
  const auto h = read_json(dir / "h" / "alignment.json");
  CHECK(h.at("runsets")[1].at("report").at("runs")[0].at("ari") != j.at("runsets")[1].at("report").at("runs")[0].at("ari"));
}

TEST_CASE("ensemble command") {
  auto& p = pipeline();
  testutil::TempDir dir;
  const Config cfg = {{"out", (dir / "e").string()}, {"runsets", {p.runs.string()}}, {"gold", (p.runs / "train.jsonl").string()}};
  REQUIRE(cmd_ensemble(cfg) == 0);
  const RunBundle b = read_run(dir / "e");
  CHECK(b.meta.model_name == "ensemble");
  CHECK(b.meta.K == 4);
  const auto side = read_json(dir / "e" / "ensemble.json");
  CHECK(side.at("assignment").size() == 12);
  const auto ev = read_json(dir / "e" / "evaluation.json");
  for (const char* m : {"ari", "nmi", "purity", "inverse_purity", "p1"})
    for (const char* k : {"beats_worst", "beats_median", "beats_best"}) CHECK(ev.at("comparisons").at(m).at(k).is_boolean());

  const Config al = {{"out", (dir / "a").string()}, {"runsets", {p.runs.string()}}, {"gold", (p.runs / "train.jsonl").string()}};
  REQUIRE(cmd_alignment(al) == 0);
  const auto aj = read_json(dir / "a" / "alignment.json");
  CHECK(ev.at("member_scores").at("runs") == aj.at("runsets")[0].at("report").at("runs"));
  CHECK(slurp(dir / "e" / "evaluation.csv").rfind("metric,ensemble,worst,median,best,beats_worst,beats_median,beats_best\n", 0) == 0);
}

TEST_CASE("rerunning a command rewrites identical files") {
  auto& p = pipeline();
  testutil::TempDir dir;
  const Config cfg = {{"out", (dir / "s").string()}, {"runsets", {p.runs.string()}}};
  cmd_stability(cfg);
  const std::string first = slurp(dir / "s" / "stability.json");
  cmd_stability(cfg);
  CHECK(slurp(dir / "s" / "stability.json") == first);
}

TEST_CASE("binary entry point") {
  auto& p = pipeline();
  testutil::TempDir dir;
  const Proc bad = run_binary("stability --out " + (dir / "x").string());
  CHECK(bad.status == 1);
  CHECK(bad.output.find("tmeval: error:") != std::string::npos);
  CHECK(run_binary("frobnicate").status != 0);
  CHECK(run_binary("--help").status == 0);

  const Proc ok = run_binary("stability --out " + (dir / "s").string() + " --metric jaccard --depth 10 " + p.runs.string());
  CHECK(ok.status == 0);
  const auto j = read_json(dir / "s" / "stability.json");
  CHECK(j.at("runsets")[0].at("beta").at("metric") == "jaccard");
  CHECK(j.at("runsets")[0].at("beta").at("T") == 10);

  // flags override the config file
  std::ofstream(dir / "cfg.json") << R"({"metric": "jaccard", "rbo_p": 0.5})";
  CHECK(run_binary("stability --config " + (dir / "cfg.json").string() + " --metric rbo --out " + (dir / "c").string() +
                   " " + p.runs.string()).status == 0);
  const auto c = read_json(dir / "c" / "stability.json");
  CHECK(c.at("runsets")[0].at("beta").at("metric") == "rbo");
  CHECK(c.at("runsets")[0].at("beta").at("p") == 0.5);

  const Proc rep = run_binary("report --manifest " + std::string(TMEVAL_FIXTURES_DIR) + "/manifest.json --out " + (dir / "r").string());
  CHECK(rep.status == 0);
  CHECK(fs::exists(dir / "r" / "ensemble.csv"));
}

TEST_CASE("concurrent use of one output directory is refused") {
  testutil::TempDir dir;
  OutputLock held(dir.path());
  CHECK_THROWS_AS(OutputLock(dir.path()), Error);
  CHECK_THROWS_AS(cmd_synth(synth_config(dir.path())), Error);
}
