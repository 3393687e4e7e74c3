#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "commands.hpp"
#include "tmeval/error.hpp"

namespace fs = std::filesystem;
using tmeval::cli::Config;

namespace {

struct Flags {
  std::optional<std::string> config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
};

template <typename T>
void put(Config& c, const char* key, const std::optional<T>& v) {
  if (v) c[key] = *v;
}

void put_path(Config& c, const char* key, const std::optional<std::string>& v) {
  if (v) c[key] = fs::absolute(*v).string();
}

void add_shared(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "JSON config file; flags override its values");
  sub->add_option("--out", f.out, "output directory");
  sub->add_option("--seed", f.seed, "random seed");
  sub->add_option("--jobs", f.jobs, "worker threads");
}

Config merged(const Flags& f) {
  Config c = tmeval::cli::load_config(f.config ? std::optional<fs::path>(*f.config) : std::nullopt);
  put_path(c, "out", f.out);
  put(c, "seed", f.seed);
  put(c, "jobs", f.jobs);
  return c;
}

struct MetricFlags {
  std::optional<std::string> metric;
  std::optional<double> rbo_p;
  std::optional<std::size_t> depth;
  bool allow_unnormalized = false;
};

void add_metric(CLI::App* sub, MetricFlags& m) {
  sub->add_option("--metric", m.metric, "topic distance")->check(CLI::IsMember({"rbo", "jaccard"}));
  sub->add_option("--rbo-p", m.rbo_p, "RBO persistence p");
  sub->add_option("--depth", m.depth, "ranked list depth T (0 = default)");
  sub->add_flag("--allow-unnormalized", m.allow_unnormalized, "accept beta score matrices that are not distributions");
}

void put_metric(Config& c, const MetricFlags& m) {
  put(c, "metric", m.metric);
  put(c, "rbo_p", m.rbo_p);
  put(c, "depth", m.depth);
  if (m.allow_unnormalized) c["allow_unnormalized"] = true;
}

void put_runsets(Config& c, const std::vector<std::string>& dirs) {
  if (dirs.empty()) return;
  Config list = Config::array();
  for (const auto& d : dirs) list.push_back(fs::absolute(d).string());
  c["runsets"] = list;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Topic model stability, alignment and ensembling toolkit"};
  app.require_subcommand(1);
  int rc = 0;

  // synth
  Flags synth_f;
  std::optional<std::size_t> s_K, s_V, s_N, s_groups, s_min_len;
  std::optional<double> s_len, s_alpha, s_sparsity, s_conc;
  std::optional<std::string> s_dataset;
  auto* synth = app.add_subcommand("synth", "generate a planted corpus with ground truth");
  add_shared(synth, synth_f);
  synth->add_option("--K", s_K, "topics");
  synth->add_option("--V", s_V, "vocabulary size");
  synth->add_option("--N", s_N, "documents");
  synth->add_option("--doc-len", s_len, "mean document length");
  synth->add_option("--alpha", s_alpha, "document-topic concentration");
  synth->add_option("--sparsity", s_sparsity, "fraction of V in each topic's support");
  synth->add_option("--groups", s_groups, "high-level label groups");
  synth->add_option("--word-concentration", s_conc, "Dirichlet concentration within a topic's support");
  synth->add_option("--min-doc-len", s_min_len, "minimum document length");
  synth->add_option("--dataset-id", s_dataset, "dataset id recorded in the truth bundle");
  synth->callback([&] {
    Config c = merged(synth_f);
    put(c, "K", s_K);
    put(c, "V", s_V);
    put(c, "N", s_N);
    put(c, "doc_len_mean", s_len);
    put(c, "alpha", s_alpha);
    put(c, "topic_sparsity", s_sparsity);
    put(c, "n_high_groups", s_groups);
    put(c, "word_concentration", s_conc);
    put(c, "min_doc_len", s_min_len);
    put(c, "dataset_id", s_dataset);
    rc = tmeval::cli::cmd_synth(c);
  });

  // train
  Flags train_f;
  std::optional<std::string> t_corpus, t_format, t_split, t_dataset;
  std::optional<std::size_t> t_vocab, t_K, t_m, t_interval, t_iter, t_burn, t_heldout_iter;
  std::optional<double> t_alpha, t_beta;
  std::vector<std::uint64_t> t_seeds;
  auto* train = app.add_subcommand("train", "train m LDA runs by collapsed Gibbs sampling");
  add_shared(train, train_f);
  train->add_option("--corpus", t_corpus, "corpus JSONL");
  train->add_option("--format", t_format, "corpus format")->check(CLI::IsMember({"jsonl"}));
  train->add_option("--vocab-size", t_vocab, "keep the most frequent terms");
  train->add_option("--K", t_K, "topics");
  train->add_option("--m", t_m, "number of runs");
  train->add_option("--seeds", t_seeds, "one seed per run");
  train->add_option("--alpha", t_alpha, "fixed alpha (overrides any range in the config)");
  train->add_option("--beta", t_beta, "fixed beta");
  train->add_option("--optimize-interval", t_interval, "iterations between alpha updates (0 = never)");
  train->add_option("--iterations", t_iter, "Gibbs sweeps");
  train->add_option("--burn-in", t_burn, "sweeps before alpha updates start");
  train->add_option("--split", t_split, "split JSON; held-out theta is inferred for each run");
  train->add_option("--heldout-iterations", t_heldout_iter, "fold-in sweeps for held-out documents");
  train->add_option("--dataset-id", t_dataset, "dataset id recorded in each bundle");
  train->callback([&] {
    Config c = merged(train_f);
    put_path(c, "corpus", t_corpus);
    put(c, "format", t_format);
    put(c, "vocab_size", t_vocab);
    put(c, "K", t_K);
    put(c, "m", t_m);
    if (!t_seeds.empty()) c["seeds"] = t_seeds;
    if (!c.contains("hyperparams")) c["hyperparams"] = Config::object();
    put(c["hyperparams"], "alpha", t_alpha);
    put(c["hyperparams"], "beta", t_beta);
    put(c["hyperparams"], "optimize_interval", t_interval);
    put(c["hyperparams"], "n_iterations", t_iter);
    put(c["hyperparams"], "burn_in", t_burn);
    put_path(c, "split", t_split);
    put(c, "heldout_iterations", t_heldout_iter);
    put(c, "dataset_id", t_dataset);
    rc = tmeval::cli::cmd_train(c);
  });

  // stability
  Flags stab_f;
  MetricFlags stab_m;
  std::vector<std::string> stab_dirs;
  auto* stability = app.add_subcommand("stability", "total topic distance over all run pairs");
  add_shared(stability, stab_f);
  add_metric(stability, stab_m);
  stability->add_option("runsets", stab_dirs, "one or two run set directories");
  stability->callback([&] {
    Config c = merged(stab_f);
    put_metric(c, stab_m);
    put_runsets(c, stab_dirs);
    rc = tmeval::cli::cmd_stability(c);
  });

  // alignment
  Flags align_f;
  MetricFlags align_m;
  std::vector<std::string> align_dirs;
  std::optional<std::string> a_gold, a_level;
  auto* alignment = app.add_subcommand("alignment", "agreement of hard assignments with gold labels");
  add_shared(alignment, align_f);
  alignment->add_flag("--allow-unnormalized", align_m.allow_unnormalized, "accept beta score matrices");
  alignment->add_option("--gold", a_gold, "gold corpus JSONL (same documents as the runs)");
  alignment->add_option("--level", a_level, "label level")->check(CLI::IsMember({"high", "low"}));
  alignment->add_option("runsets", align_dirs, "one or two run set directories");
  alignment->callback([&] {
    Config c = merged(align_f);
    if (align_m.allow_unnormalized) c["allow_unnormalized"] = true;
    put_path(c, "gold", a_gold);
    put(c, "level", a_level);
    put_runsets(c, align_dirs);
    rc = tmeval::cli::cmd_alignment(c);
  });

  // ensemble
  Flags ens_f;
  MetricFlags ens_m;
  std::vector<std::string> ens_dirs;
  std::optional<std::string> e_gold, e_level, e_cluster;
  std::optional<double> e_lambda, e_threshold;
  std::optional<std::size_t> e_k;
  auto* ensemble = app.add_subcommand("ensemble", "cluster and average the topics of a run set");
  add_shared(ensemble, ens_f);
  add_metric(ensemble, ens_m);
  ensemble->add_option("--lambda", e_lambda, "weight of the beta distance");
  ensemble->add_option("--cluster", e_cluster, "clustering algorithm")
      ->check(CLI::IsMember({"kmedoids", "agglomerative"}));
  ensemble->add_option("--k-target", e_k, "number of ensemble topics (default K)");
  ensemble->add_option("--distance-threshold", e_threshold, "agglomerative merge threshold");
  ensemble->add_option("--gold", e_gold, "gold corpus for evaluation");
  ensemble->add_option("--level", e_level, "label level")->check(CLI::IsMember({"high", "low"}));
  ensemble->add_option("runsets", ens_dirs, "run set directories");
  ensemble->callback([&] {
    Config c = merged(ens_f);
    put_metric(c, ens_m);
    put(c, "lambda", e_lambda);
    put(c, "cluster", e_cluster);
    put(c, "k_target", e_k);
    put(c, "distance_threshold", e_threshold);
    put_path(c, "gold", e_gold);
    put(c, "level", e_level);
    put_runsets(c, ens_dirs);
    rc = tmeval::cli::cmd_ensemble(c);
  });

  // report
  Flags rep_f;
  MetricFlags rep_m;
  std::optional<std::string> r_manifest;
  auto* report = app.add_subcommand("report", "regenerate stability, alignment and ensemble tables");
  add_shared(report, rep_f);
  add_metric(report, rep_m);
  report->add_option("--manifest", r_manifest, "report manifest JSON");
  report->callback([&] {
    Config c = merged(rep_f);
    put_metric(c, rep_m);
    put_path(c, "manifest", r_manifest);
    rc = tmeval::cli::cmd_report(c);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "tmeval: error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
