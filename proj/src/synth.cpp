#include "tmeval/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "tmeval/error.hpp"
#include "tmeval/parallel.hpp"
#include "tmeval/rng.hpp"
#include "tmeval/run_io.hpp"

namespace tmeval {

void SynthParams::validate() const {
  if (K < 1) throw Error("K must be at least 1");
  if (V < 1) throw Error("V must be at least 1");
  if (N < 1) throw Error("N must be at least 1");
  if (!(doc_len_mean > 0.0)) throw Error("doc_len_mean must be positive");
  if (!(alpha > 0.0)) throw Error("alpha must be positive");
  if (!(topic_sparsity > 0.0 && topic_sparsity <= 1.0)) throw Error("topic_sparsity must lie in (0, 1]");
  if (n_high_groups < 1 || n_high_groups > K) throw Error("n_high_groups must lie in 1..K");
  if (!(word_concentration > 0.0)) throw Error("word_concentration must be positive");
  if (K > 65535) throw Error("K too large");
}

nlohmann::json SynthParams::to_json() const {
  return {{"K", K},
          {"V", V},
          {"N", N},
          {"doc_len_mean", doc_len_mean},
          {"alpha", alpha},
          {"topic_sparsity", topic_sparsity},
          {"n_high_groups", n_high_groups},
          {"seed", seed},
          {"word_concentration", word_concentration},
          {"min_doc_len", min_doc_len},
          {"dataset_id", dataset_id}};
}

SynthParams SynthParams::from_json(const nlohmann::json& j) {
  SynthParams p;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& key = it.key();
    if (key == "K") p.K = it->get<std::size_t>();
    else if (key == "V") p.V = it->get<std::size_t>();
    else if (key == "N") p.N = it->get<std::size_t>();
    else if (key == "doc_len_mean") p.doc_len_mean = it->get<double>();
    else if (key == "alpha") p.alpha = it->get<double>();
    else if (key == "topic_sparsity") p.topic_sparsity = it->get<double>();
    else if (key == "n_high_groups") p.n_high_groups = it->get<std::size_t>();
    else if (key == "seed") p.seed = it->get<std::uint64_t>();
    else if (key == "word_concentration") p.word_concentration = it->get<double>();
    else if (key == "min_doc_len") p.min_doc_len = it->get<std::size_t>();
    else if (key == "dataset_id") p.dataset_id = it->get<std::string>();
    else throw Error("unknown synth parameter '" + key + "'");
  }
  return p;
}

std::string synth_word(std::size_t w) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "w%04zu", w);
  return buf;
}

std::string synth_low_label(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "t%02zu", k);
  return buf;
}

std::string synth_high_label(std::size_t g) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "g%02zu", g);
  return buf;
}

std::size_t synth_group_of(std::size_t k, std::size_t K, std::size_t n_high_groups) {
  return k * n_high_groups / K;
}

std::vector<std::size_t> topic_support(std::size_t k, std::size_t V, double topic_sparsity) {
  const auto block = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(topic_sparsity * static_cast<double>(V))), 1, V);
  std::vector<std::size_t> out(block);
  const std::size_t start = (k * block) % V;
  for (std::size_t j = 0; j < block; ++j) out[j] = (start + j) % V;
  return out;
}

std::vector<std::size_t> PlantedWorld::vocab_word_ids() const {
  std::vector<std::size_t> ids;
  ids.reserve(corpus.vocab.size());
  for (const auto& t : corpus.vocab.terms()) ids.push_back(std::stoul(t.substr(1)));
  return ids;
}

namespace {

struct TopicSampler {
  std::vector<std::size_t> words;
  std::vector<double> cumulative;

  std::size_t draw(Rng& rng) const {
    const double u = uniform01(rng) * cumulative.back();
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    return words[static_cast<std::size_t>(it - cumulative.begin())];
  }
};

}  // namespace

PlantedWorld generate(const SynthParams& params, unsigned jobs) {
  params.validate();
  const std::size_t K = params.K, V = params.V, N = params.N;
  PlantedWorld world;
  world.params = params;
  world.true_beta = Matrix(K, V);
  world.true_theta = Matrix(N, K);

  std::vector<TopicSampler> samplers(K);
  for (std::size_t k = 0; k < K; ++k) {
    Rng rng = make_rng(params.seed, 0x70000 + k);
    const auto support = topic_support(k, V, params.topic_sparsity);
    const auto w = sample_dirichlet(rng, std::vector<double>(support.size(), params.word_concentration));
    double acc = 0.0;
    for (std::size_t j = 0; j < support.size(); ++j) {
      world.true_beta(k, support[j]) = w[j];
      acc += w[j];
      samplers[k].words.push_back(support[j]);
      samplers[k].cumulative.push_back(acc);
    }
  }

  std::vector<Document> docs(N);
  world.gold_low.assign(N, 0);
  world.gold_high.assign(N, 0);
  const std::vector<double> alpha(K, params.alpha);
  const double extra_mean = params.doc_len_mean - static_cast<double>(params.min_doc_len);
  parallel_for(N, jobs, [&](std::size_t d) {
    Rng rng = make_rng(params.seed, 0x100000 + d);
    std::size_t len = 0;
    for (int attempt = 0; attempt < 10 && len == 0; ++attempt) {
      len = params.min_doc_len;
      if (extra_mean > 0.0) len += std::poisson_distribution<std::size_t>(extra_mean)(rng);
    }
    if (len == 0) throw Error("document " + std::to_string(d) + " is empty after 10 attempts");

    const auto theta = sample_dirichlet(rng, alpha);
    for (std::size_t k = 0; k < K; ++k) world.true_theta(d, k) = theta[k];
    const auto top = static_cast<std::size_t>(std::max_element(theta.begin(), theta.end()) - theta.begin());

    Document& doc = docs[d];
    char id[32];
    std::snprintf(id, sizeof id, "d%06zu", d);
    doc.id = id;
    doc.tokens.reserve(len);
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t k = sample_discrete(rng, theta);
      doc.tokens.push_back(synth_word(samplers[k].draw(rng)));
    }
    world.gold_low[d] = static_cast<int>(top);
    world.gold_high[d] = static_cast<int>(synth_group_of(top, K, params.n_high_groups));
    doc.label_low = synth_low_label(top);
    doc.label_high = synth_high_label(static_cast<std::size_t>(world.gold_high[d]));
  });

  Vocabulary vocab = build_vocabulary(docs, V);
  world.corpus = make_corpus(std::move(docs), std::move(vocab));
  return world;
}

RunBundle truth_bundle(const PlantedWorld& world) {
  const auto ids = world.vocab_word_ids();
  const std::size_t K = world.params.K;
  RunBundle b;
  b.beta = Matrix(K, ids.size());
  for (std::size_t k = 0; k < K; ++k) {
    double sum = 0.0;
    for (std::size_t v = 0; v < ids.size(); ++v) sum += world.true_beta(k, ids[v]);
    if (sum > 0.0) {
      for (std::size_t v = 0; v < ids.size(); ++v) b.beta(k, v) = world.true_beta(k, ids[v]) / sum;
    } else {
      for (std::size_t v = 0; v < ids.size(); ++v) b.beta(k, v) = 1.0 / static_cast<double>(ids.size());
    }
  }
  b.theta = world.true_theta;
  b.meta.model_name = "truth";
  b.meta.dataset_id = world.params.dataset_id;
  b.meta.K = K;
  b.meta.V = ids.size();
  b.meta.N = world.true_theta.rows();
  b.meta.seed = world.params.seed;
  b.meta.vocab_sha256 = world.corpus.vocab.sha256();
  return b;
}

void write_world(const PlantedWorld& world, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_documents(dir / "corpus.jsonl", world.corpus.docs);
  write_vocabulary(dir / "vocab.txt", world.corpus.vocab);
  write_run(truth_bundle(world), dir / "truth");
  nlohmann::json truth = {{"params", world.params.to_json()},
                          {"true_beta", "truth/beta.mat"},
                          {"true_theta", "truth/theta.mat"},
                          {"vocab_sha256", world.corpus.vocab.sha256()}};
  std::ofstream out(dir / "truth.json");
  if (!out) throw Error((dir / "truth.json").string() + ": cannot open for writing");
  out << truth.dump(2) << "\n";
}

}  // namespace tmeval
