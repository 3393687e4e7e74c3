#include "commands.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <chrono>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>

#include "tmeval/alignment.hpp"
#include "tmeval/corpus.hpp"
#include "tmeval/ensemble.hpp"
#include "tmeval/error.hpp"
#include "tmeval/lda_gibbs.hpp"
#include "tmeval/parallel.hpp"
#include "tmeval/report.hpp"
#include "tmeval/run_io.hpp"
#include "tmeval/stability.hpp"
#include "tmeval/stats.hpp"
#include "tmeval/synth.hpp"

namespace tmeval::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path path_of(const Config& c, const char* key) {
  if (!c.contains(key)) throw Error(std::string("missing required setting '") + key + "'");
  const fs::path p(c.at(key).get<std::string>());
  if (p.is_absolute() || !c.contains("_base")) return p;
  return fs::path(c.at("_base").get<std::string>()) / p;
}

std::vector<fs::path> paths_of(const Config& c, const char* key) {
  std::vector<fs::path> out;
  if (!c.contains(key)) return out;
  const fs::path base = c.contains("_base") ? fs::path(c.at("_base").get<std::string>()) : fs::path();
  for (const auto& v : c.at(key)) {
    const fs::path p(v.get<std::string>());
    out.push_back(p.is_absolute() || base.empty() ? p : base / p);
  }
  return out;
}

unsigned jobs_of(const Config& c) {
  const auto j = c.value("jobs", 1u);
  return j == 0 ? 1u : j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

ReadOptions read_options(const Config& c) {
  ReadOptions o;
  o.allow_unnormalized = c.value("allow_unnormalized", false);
  return o;
}

/// A run set made of every bundle under the given roots.
RunSet load_roots(const std::vector<fs::path>& roots, const ReadOptions& opt) {
  std::vector<fs::path> dirs;
  for (const auto& r : roots) {
    const auto found = find_run_dirs(r);
    if (found.empty()) throw Error(r.string() + ": no run bundles found");
    dirs.insert(dirs.end(), found.begin(), found.end());
  }
  return load_runset(dirs, opt);
}

StabilityOptions stability_options(const Config& c, StabilityOptions o = {}) {
  if (c.contains("metric")) o.metric = parse_metric(c.at("metric").get<std::string>());
  if (c.contains("rbo_p")) o.p = c.at("rbo_p").get<double>();
  if (c.contains("depth")) o.depth = c.at("depth").get<std::size_t>();
  if (!(o.p > 0.0 && o.p < 1.0)) throw Error("--rbo-p must lie in (0, 1)");
  return o;
}

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(17);
  s << x;
  return s.str();
}

}  // namespace

Config load_config(const std::optional<fs::path>& path) {
  if (!path) return json::object();
  std::ifstream in(*path);
  if (!in) throw Error("cannot open config " + path->string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(path->string() + ": " + e.what());
  }
  if (!j.is_object()) throw Error(path->string() + ": config must be a JSON object");
  j["_base"] = fs::absolute(*path).parent_path().string();
  return j;
}

OutputLock::OutputLock(const fs::path& dir) {
  fs::create_directories(dir);
  const fs::path lock = dir / ".tmeval.lock";
  fd_ = ::open(lock.c_str(), O_RDWR | O_CREAT, 0644);
  if (fd_ < 0) throw Error("cannot create lock file " + lock.string());
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw Error("output directory " + dir.string() + " is in use by another tmeval process");
  }
}

OutputLock::~OutputLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

double draw_hyperparam(const json& spec, bool integer, Rng& rng) {
  if (spec.is_number()) return spec.get<double>();
  if (spec.is_array()) {
    if (spec.empty()) throw Error("hyperparameter choice list is empty");
    return spec.at(uniform_index(rng, spec.size())).get<double>();
  }
  if (spec.is_object() && spec.contains("min") && spec.contains("max")) {
    const double lo = spec.at("min").get<double>(), hi = spec.at("max").get<double>();
    if (!(lo <= hi)) throw Error("hyperparameter range has min > max");
    if (integer) {
      const auto a = static_cast<std::size_t>(lo), b = static_cast<std::size_t>(hi);
      return static_cast<double>(a + uniform_index(rng, b - a + 1));
    }
    return lo + (hi - lo) * uniform01(rng);
  }
  throw Error("hyperparameter must be a number, a list, or {\"min\", \"max\"}: " + spec.dump());
}

int cmd_synth(const Config& c) {
  const fs::path out = path_of(c, "out");
  OutputLock lock(out);
  json params = json::object();
  for (const char* key : {"K", "V", "N", "doc_len_mean", "alpha", "topic_sparsity", "n_high_groups", "seed",
                          "word_concentration", "min_doc_len", "dataset_id"}) {
    if (c.contains(key)) params[key] = c.at(key);
  }
  const SynthParams p = SynthParams::from_json(params);
  const PlantedWorld world = generate(p, jobs_of(c));
  write_world(world, out);
  std::cerr << "synth: wrote " << world.corpus.size() << " documents, |V| = " << world.corpus.vocab.size()
            << " to " << out << "\n";
  return 0;
}

int cmd_train(const Config& c) {
  const fs::path out = path_of(c, "out");
  OutputLock lock(out);
  const fs::path corpus_path = path_of(c, "corpus");
  LoadOptions lo;
  if (c.contains("vocab_size")) lo.max_vocab = c.at("vocab_size").get<std::size_t>();
  const Corpus full = load_corpus(corpus_path, parse_corpus_format(c.value("format", std::string("jsonl"))), lo);
  const std::string dataset_id = c.value("dataset_id", corpus_path.stem().string());
  if (!c.contains("K")) throw Error("missing required setting 'K'");
  const auto K = c.at("K").get<std::size_t>();
  const auto m = c.value("m", std::size_t{1});
  if (m < 1) throw Error("m must be at least 1");
  const auto base_seed = c.value("seed", std::uint64_t{0});

  std::vector<std::uint64_t> seeds;
  if (c.contains("seeds")) {
    seeds = c.at("seeds").get<std::vector<std::uint64_t>>();
    if (seeds.size() != m) throw Error("seeds lists " + std::to_string(seeds.size()) + " values for m = " + std::to_string(m));
  } else {
    for (std::size_t i = 0; i < m; ++i) seeds.push_back(base_seed + i);
  }

  // held-out split: a path to an existing split file or fractions for a new one
  std::optional<SplitSpec> split;
  if (c.contains("split")) {
    const auto& s = c.at("split");
    if (s.is_string()) {
      split = read_split(path_of(c, "split"));
    } else {
      split = make_label_split(full, s.value("heldout_fraction", 0.2), s.value("unseen_low_fraction", 0.5),
                               base_seed);
    }
    write_split(out / "split.json", *split);
  }
  const Corpus train = split ? subset(full, split->train_ids) : full;
  const std::optional<Corpus> heldout = split ? std::optional<Corpus>(subset(full, split->heldout_ids)) : std::nullopt;
  write_vocabulary(out / "vocab.txt", full.vocab);
  write_documents(out / "train.jsonl", train.docs);

  const json hp_spec = c.value("hyperparams", json::object());
  Rng draw_rng = make_rng(base_seed, 0xd7a);
  std::vector<LdaHyperparams> draws(m);
  json draw_log = json::array();
  for (std::size_t i = 0; i < m; ++i) {
    LdaHyperparams hp;
    auto pick = [&](const char* key, bool integer, double fallback) {
      return hp_spec.contains(key) ? draw_hyperparam(hp_spec.at(key), integer, draw_rng) : fallback;
    };
    hp.alpha = pick("alpha", false, hp.alpha);
    hp.beta = pick("beta", false, hp.beta);
    hp.optimize_interval = static_cast<std::size_t>(pick("optimize_interval", true, static_cast<double>(hp.optimize_interval)));
    hp.n_iterations = static_cast<std::size_t>(pick("n_iterations", true, static_cast<double>(hp.n_iterations)));
    hp.burn_in = static_cast<std::size_t>(pick("burn_in", true, static_cast<double>(hp.burn_in)));
    hp.validate();
    draws[i] = hp;
    draw_log.push_back({{"run", i},
                        {"seed", seeds[i]},
                        {"alpha", hp.alpha},
                        {"beta", hp.beta},
                        {"optimize_interval", hp.optimize_interval},
                        {"n_iterations", hp.n_iterations},
                        {"burn_in", hp.burn_in}});
  }
  write_json(out / "draws.json", draw_log);

  const auto heldout_iterations = c.value("heldout_iterations", std::size_t{200});
  std::vector<std::string> errors(m);
  std::mutex log_mutex;
  parallel_for(m, jobs_of(c), [&](std::size_t i) {
    char name[32];
    std::snprintf(name, sizeof name, "run_%03zu", i);
    try {
      const auto t0 = std::chrono::steady_clock::now();
      RunBundle b = train_lda(train, K, draws[i], seeds[i]);
      b.meta.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      b.meta.dataset_id = dataset_id;
      write_run(b, out / name);
      if (heldout) write_matrix(out / name / "heldout_theta.mat", infer_theta(b, *heldout, heldout_iterations, seeds[i]));
      std::lock_guard g(log_mutex);
      std::cerr << "train: " << name << " done (" << b.meta.wall_time << " s)\n";
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  json completed = json::array(), failed = json::array();
  for (std::size_t i = 0; i < m; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "run_%03zu", i);
    if (errors[i].empty()) completed.push_back(name);
    else failed.push_back({{"run", name}, {"error", errors[i]}});
  }
  write_json(out / "manifest.json", {{"completed", completed}, {"failed", failed}});
  if (!failed.empty()) {
    for (const auto& f : failed)
      std::cerr << "train: " << f.at("run").get<std::string>() << " failed: " << f.at("error").get<std::string>() << "\n";
    return 1;
  }
  return 0;
}

int cmd_stability(const Config& c) {
  const fs::path out = path_of(c, "out");
  OutputLock lock(out);
  const auto roots = paths_of(c, "runsets");
  if (roots.empty() || roots.size() > 2) throw Error("stability takes one or two run set directories");
  const StabilityOptions opt = stability_options(c);
  const unsigned jobs = jobs_of(c);

  std::vector<StabilityReport> beta, theta;
  json sets = json::array();
  std::ostringstream csv;
  csv << "runset,target,metric,p,T,pairs,mean,std\n";
  for (const auto& root : roots) {
    const RunSet runs = load_roots({root}, read_options(c));
    beta.push_back(runset_stability(runs, Target::beta, opt, jobs));
    theta.push_back(runset_stability(runs, Target::theta, opt, jobs));
    sets.push_back({{"path", root.string()}, {"runs", runs.names}, {"beta", to_json(beta.back())}, {"theta", to_json(theta.back())}});
    for (const auto* r : {&theta.back(), &beta.back()}) {
      csv << root.filename().string() << "," << to_string(r->target) << "," << to_string(r->metric) << ","
          << fmt(r->p) << "," << r->depth << "," << r->pairs.size() << "," << fmt(r->mean()) << ","
          << fmt(r->stddev()) << "\n";
    }
  }
  json j = {{"runsets", sets}};
  write_text(out / "stability.csv", csv.str());
  if (roots.size() == 2) {
    std::ostringstream cmp;
    cmp << "target,mean_a,mean_b,t,df,p_value,a_is_smaller\n";
    json comparison = json::object();
    for (auto [name, reports] : {std::pair{"theta", &theta}, std::pair{"beta", &beta}}) {
      const WelchResult w = compare_stability((*reports)[0], (*reports)[1]);
      comparison[name] = {{"t", w.t}, {"df", w.df}, {"p_value", w.p_value}, {"a_is_smaller", w.a_is_smaller}};
      cmp << name << "," << fmt((*reports)[0].mean()) << "," << fmt((*reports)[1].mean()) << "," << fmt(w.t) << ","
          << fmt(w.df) << "," << fmt(w.p_value) << "," << (w.a_is_smaller ? "true" : "false") << "\n";
    }
    j["comparison"] = comparison;
    write_text(out / "stability_comparison.csv", cmp.str());
  }
  write_json(out / "stability.json", j);
  return 0;
}

int cmd_alignment(const Config& c) {
  const fs::path out = path_of(c, "out");
  OutputLock lock(out);
  const auto roots = paths_of(c, "runsets");
  if (roots.empty() || roots.size() > 2) throw Error("alignment takes one or two run set directories");
  const Corpus gold = load_gold_corpus(path_of(c, "gold"));
  const LabelLevel level = parse_label_level(c.value("level", std::string("low")));

  std::vector<AlignmentReport> reports;
  json sets = json::array();
  std::string csv;
  for (const auto& root : roots) {
    const RunSet runs = load_roots({root}, read_options(c));
    reports.push_back(alignment_report(runs, gold, level, jobs_of(c)));
    sets.push_back({{"path", root.string()}, {"report", to_json(reports.back())}});
    std::string part = to_csv(reports.back());
    if (!csv.empty()) part = part.substr(part.find('\n') + 1);
    csv += part;
  }
  json j = {{"runsets", sets}};
  write_text(out / "alignment.csv", csv);
  if (reports.size() == 2) {
    std::ostringstream cmp;
    cmp << "metric,mean_a,mean_b,t,df,p_value,a_is_smaller\n";
    json comparison = json::object();
    for (const auto& [metric, w] : compare_alignment(reports[0], reports[1])) {
      comparison[to_string(metric)] = {{"t", w.t}, {"df", w.df}, {"p_value", w.p_value}, {"a_is_smaller", w.a_is_smaller}};
      cmp << to_string(metric) << "," << fmt(reports[0].mean(metric)) << "," << fmt(reports[1].mean(metric)) << ","
          << fmt(w.t) << "," << fmt(w.df) << "," << fmt(w.p_value) << "," << (w.a_is_smaller ? "true" : "false")
          << "\n";
    }
    j["comparison"] = comparison;
    write_text(out / "alignment_comparison.csv", cmp.str());
  }
  write_json(out / "alignment.json", j);
  return 0;
}

int cmd_ensemble(const Config& c) {
  const fs::path out = path_of(c, "out");
  OutputLock lock(out);
  const auto roots = paths_of(c, "runsets");
  if (roots.empty()) throw Error("ensemble needs at least one run set directory");
  const RunSet runs = load_roots(roots, read_options(c));

  EnsembleConfig cfg;
  cfg.distance = stability_options(c);
  cfg.lambda = c.value("lambda", 1.0);
  if (c.contains("cluster")) cfg.cluster.algorithm = parse_cluster_algorithm(c.at("cluster").get<std::string>());
  if (c.contains("k_target")) cfg.cluster.k_target = c.at("k_target").get<std::size_t>();
  if (c.contains("distance_threshold")) cfg.cluster.distance_threshold = c.at("distance_threshold").get<double>();
  cfg.cluster.seed = c.value("seed", std::uint64_t{0});

  const EnsembleModel model = build_ensemble(runs, cfg, jobs_of(c));
  const StackedTopics stacked = stack_runs(runs);
  write_run(model.to_bundle(stacked, cfg.cluster.seed), out);
  write_json(out / "ensemble.json", model.sidecar());

  if (c.contains("gold")) {
    const Corpus gold = load_gold_corpus(path_of(c, "gold"));
    const LabelLevel level = parse_label_level(c.value("level", std::string("low")));
    const EnsembleEvaluation ev = evaluate_ensemble(model, runs, gold, level, jobs_of(c));
    write_json(out / "evaluation.json", to_json(ev));
    std::ostringstream csv;
    csv << "metric,ensemble,worst,median,best,beats_worst,beats_median,beats_best\n";
    for (const auto& m : ev.comparisons) {
      csv << to_string(m.metric) << "," << fmt(m.ensemble) << "," << fmt(m.worst) << "," << fmt(m.median) << ","
          << fmt(m.best) << "," << (m.beats_worst() ? "true" : "false") << ","
          << (m.beats_median() ? "true" : "false") << "," << (m.beats_best() ? "true" : "false") << "\n";
    }
    write_text(out / "evaluation.csv", csv.str());
  }
  return 0;
}

int cmd_report(const Config& c) {
  const fs::path out = path_of(c, "out");
  OutputLock lock(out);
  const fs::path manifest_path = path_of(c, "manifest");
  std::ifstream in(manifest_path);
  if (!in) throw Error("cannot open report manifest " + manifest_path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(manifest_path.string() + ": " + e.what());
  }
  ReportManifest m = ReportManifest::from_json(j, fs::absolute(manifest_path).parent_path());
  m.stability_options = stability_options(c, m.stability_options);
  if (c.value("allow_unnormalized", false)) m.allow_unnormalized = true;
  write_reports(m, out, jobs_of(c));
  return 0;
}

}  // namespace tmeval::cli
