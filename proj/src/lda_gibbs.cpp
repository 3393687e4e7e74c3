#include "tmeval/lda_gibbs.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <string>

#include "tmeval/error.hpp"

namespace tmeval {

void LdaHyperparams::validate() const {
  auto positive = [](double x) { return std::isfinite(x) && x > 0.0; };
  if (!positive(alpha)) throw Error("alpha must be finite and positive");
  if (!positive(beta)) throw Error("beta must be finite and positive");
  if (!positive(alpha_prior_shape) || !positive(alpha_prior_scale)) {
    throw Error("alpha prior shape and scale must be finite and positive");
  }
  if (n_iterations == 0) throw Error("n_iterations must be positive");
  if (burn_in >= n_iterations) throw Error("burn_in must be smaller than n_iterations");
}

HyperparamMap LdaHyperparams::to_map() const {
  return {{"alpha", alpha},
          {"beta", beta},
          {"optimize_interval", static_cast<double>(optimize_interval)},
          {"n_iterations", static_cast<double>(n_iterations)},
          {"burn_in", static_cast<double>(burn_in)}};
}

GibbsState GibbsState::initialize(const CountMatrix& bow, std::size_t K, double alpha,
                                  double beta, std::uint64_t seed) {
  if (K < 2) throw Error("K must be at least 2");
  if (K > std::numeric_limits<std::uint16_t>::max()) throw Error("K too large");
  GibbsState s;
  s.K = K;
  s.V = bow.cols();
  s.N = bow.rows();
  s.alpha.assign(K, alpha);
  s.alpha_sum = alpha * static_cast<double>(K);
  s.beta = beta;
  s.beta_sum = beta * static_cast<double>(s.V);
  s.rng = make_rng(seed, 0x1da);

  s.doc_offsets.reserve(s.N + 1);
  s.doc_offsets.push_back(0);
  for (std::size_t d = 0; d < s.N; ++d) {
    for (const auto& e : bow.row(d)) s.words.insert(s.words.end(), e.count, e.term);
    s.doc_offsets.push_back(s.words.size());
  }
  s.z.resize(s.words.size());
  s.doc_topic.assign(s.N * K, 0);
  s.topic_word.assign(s.V * K, 0);
  s.topic_total.assign(K, 0);
  for (std::size_t d = 0; d < s.N; ++d) {
    for (std::size_t i = s.doc_offsets[d]; i < s.doc_offsets[d + 1]; ++i) {
      auto k = static_cast<std::uint16_t>(uniform_index(s.rng, K));
      s.z[i] = k;
      s.add_token(d, s.words[i], k);
    }
  }
  return s;
}

void GibbsState::remove_token(std::size_t d, std::size_t v, std::size_t k) {
  --doc_topic[d * K + k];
  --topic_word[v * K + k];
  --topic_total[k];
}

void GibbsState::add_token(std::size_t d, std::size_t v, std::size_t k) {
  ++doc_topic[d * K + k];
  ++topic_word[v * K + k];
  ++topic_total[k];
}

void GibbsState::audit() const {
  std::vector<std::int32_t> dk(N * K, 0), kv(V * K, 0), kt(K, 0);
  for (std::size_t d = 0; d < N; ++d) {
    for (std::size_t i = doc_offsets[d]; i < doc_offsets[d + 1]; ++i) {
      if (z[i] >= K) throw Error("token " + std::to_string(i) + " has topic out of range");
      ++dk[d * K + z[i]];
      ++kv[words[i] * K + z[i]];
      ++kt[z[i]];
    }
  }
  if (dk != doc_topic) throw Error("doc-topic counts inconsistent with assignments");
  if (kv != topic_word) throw Error("topic-word counts inconsistent with assignments");
  if (kt != topic_total) throw Error("topic totals inconsistent with assignments");
  for (std::size_t d = 0; d < N; ++d) {
    std::int64_t sum = 0;
    for (std::size_t k = 0; k < K; ++k) sum += doc_topic[d * K + k];
    if (sum != static_cast<std::int64_t>(doc_length(d))) {
      throw Error("doc " + std::to_string(d) + " topic counts do not sum to its length");
    }
  }
}

void topic_conditional(const GibbsState& s, std::size_t d, std::size_t v,
                       std::vector<double>& weights) {
  weights.resize(s.K);
  const std::int32_t* dk = &s.doc_topic[d * s.K];
  const std::int32_t* kv = &s.topic_word[v * s.K];
  for (std::size_t k = 0; k < s.K; ++k) {
    weights[k] = (dk[k] + s.alpha[k]) * (kv[k] + s.beta) / (s.topic_total[k] + s.beta_sum);
  }
}

std::size_t resample_token(GibbsState& state, std::size_t d, std::size_t v,
                           std::vector<double>& scratch) {
  topic_conditional(state, d, v, scratch);
  return sample_discrete(state.rng, scratch);
}

void gibbs_sweep(GibbsState& s) {
  const std::size_t K = s.K;
  std::vector<double> cumulative(K);
  std::vector<double> inv_denom(K);
  for (std::size_t k = 0; k < K; ++k) inv_denom[k] = 1.0 / (s.topic_total[k] + s.beta_sum);

  for (std::size_t d = 0; d < s.N; ++d) {
    std::int32_t* dk = &s.doc_topic[d * K];
    for (std::size_t i = s.doc_offsets[d]; i < s.doc_offsets[d + 1]; ++i) {
      const std::uint32_t v = s.words[i];
      std::int32_t* kv = &s.topic_word[static_cast<std::size_t>(v) * K];
      std::size_t k = s.z[i];
      --dk[k];
      --kv[k];
      --s.topic_total[k];
      inv_denom[k] = 1.0 / (s.topic_total[k] + s.beta_sum);

      double total = 0.0;
      for (std::size_t t = 0; t < K; ++t) {
        total += (dk[t] + s.alpha[t]) * (kv[t] + s.beta) * inv_denom[t];
        cumulative[t] = total;
      }
      const double u = uniform01(s.rng) * total;
      std::size_t lo = 0;
      while (lo + 1 < K && cumulative[lo] <= u) ++lo;
      k = lo;

      s.z[i] = static_cast<std::uint16_t>(k);
      ++dk[k];
      ++kv[k];
      ++s.topic_total[k];
      inv_denom[k] = 1.0 / (s.topic_total[k] + s.beta_sum);
    }
  }
}

AlphaUpdate optimize_alpha(GibbsState& s, double prior_shape, double prior_scale,
                           std::size_t iterations) {
  // Histograms: how many documents have length n, and how many documents
  // have exactly n tokens of topic k. Digamma differences are then sums of
  // 1 / (a + i), accumulated once per histogram bin.
  std::size_t max_len = 0;
  for (std::size_t d = 0; d < s.N; ++d) max_len = std::max(max_len, s.doc_length(d));
  std::vector<std::uint64_t> length_hist(max_len + 1, 0);
  std::vector<std::vector<std::uint64_t>> topic_hist(s.K, std::vector<std::uint64_t>(max_len + 1, 0));
  for (std::size_t d = 0; d < s.N; ++d) {
    ++length_hist[s.doc_length(d)];
    for (std::size_t k = 0; k < s.K; ++k) ++topic_hist[k][static_cast<std::size_t>(s.n_dk(d, k))];
  }

  std::vector<double> alpha = s.alpha;
  double alpha_sum = s.alpha_sum;
  for (std::size_t it = 0; it < iterations; ++it) {
    double denominator = 0.0;
    double digamma_diff = 0.0;
    for (std::size_t n = 1; n <= max_len; ++n) {
      digamma_diff += 1.0 / (alpha_sum + static_cast<double>(n) - 1.0);
      denominator += static_cast<double>(length_hist[n]) * digamma_diff;
    }
    denominator -= 1.0 / prior_scale;

    double new_sum = 0.0;
    for (std::size_t k = 0; k < s.K; ++k) {
      double numerator = 0.0;
      digamma_diff = 0.0;
      for (std::size_t n = 1; n <= max_len; ++n) {
        digamma_diff += 1.0 / (alpha[k] + static_cast<double>(n) - 1.0);
        numerator += static_cast<double>(topic_hist[k][n]) * digamma_diff;
      }
      alpha[k] = (alpha[k] * numerator + prior_shape) / denominator;
      new_sum += alpha[k];
    }
    alpha_sum = new_sum;

    bool ok = std::isfinite(alpha_sum) && denominator > 0.0;
    for (double a : alpha) ok = ok && std::isfinite(a) && a > 0.0;
    if (!ok) {
      std::cerr << "warning: alpha optimization diverged; keeping previous values\n";
      return {true};
    }
  }
  s.alpha = std::move(alpha);
  s.alpha_sum = alpha_sum;
  return {false};
}

RunBundle train_lda(const Corpus& corpus, std::size_t K, const LdaHyperparams& hp,
                    std::uint64_t seed, const TrainObserver& observer) {
  hp.validate();
  if (K < 2) throw Error("K must be at least 2");
  if (corpus.n_nonempty() == 0) throw Error("corpus has no non-empty documents");
  std::uint64_t total_tokens = 0;
  for (std::size_t d = 0; d < corpus.size(); ++d) total_tokens += corpus.bow.row_total(d);
  if (K > total_tokens) {
    throw Error("K = " + std::to_string(K) + " exceeds the total token count " +
                std::to_string(total_tokens));
  }

  const auto start = std::chrono::steady_clock::now();
  GibbsState state = GibbsState::initialize(corpus.bow, K, hp.alpha, hp.beta, seed);
  for (std::size_t it = 1; it <= hp.n_iterations; ++it) {
    gibbs_sweep(state);
    if (hp.optimize_interval > 0 && it >= hp.burn_in && it % hp.optimize_interval == 0) {
      optimize_alpha(state, hp.alpha_prior_shape, hp.alpha_prior_scale);
    }
    if (observer.after_sweep) observer.after_sweep(it, state);
  }

  RunBundle out;
  const std::size_t V = state.V, N = state.N;
  out.beta = Matrix(K, V);
  for (std::size_t k = 0; k < K; ++k) {
    const double denom = state.topic_total[k] + state.beta_sum;
    for (std::size_t v = 0; v < V; ++v) out.beta(k, v) = (state.n_kv(k, v) + state.beta) / denom;
  }
  out.theta = Matrix(N, K);
  for (std::size_t d = 0; d < N; ++d) {
    const double denom = static_cast<double>(state.doc_length(d)) + state.alpha_sum;
    for (std::size_t k = 0; k < K; ++k) out.theta(d, k) = (state.n_dk(d, k) + state.alpha[k]) / denom;
  }

  out.meta.model_name = "lda_gibbs";
  out.meta.K = K;
  out.meta.V = V;
  out.meta.N = N;
  out.meta.seed = seed;
  out.meta.hyperparams = hp.to_map();
  out.meta.hyperparams["alpha_sum_final"] = state.alpha_sum;
  out.meta.vocab_sha256 = corpus.vocab.sha256();
  out.meta.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

Matrix infer_theta(const RunBundle& bundle, const CountMatrix& heldout_bow,
                   std::size_t n_iterations, std::uint64_t seed, std::optional<double> alpha) {
  const std::size_t K = bundle.beta.rows();
  const std::size_t V = bundle.beta.cols();
  if (heldout_bow.cols() != V) {
    throw Error("vocabulary mismatch: bundle has V = " + std::to_string(V) +
                ", held-out documents have " + std::to_string(heldout_bow.cols()) + " columns");
  }
  double a = 1.0;
  const auto& hp = bundle.meta.hyperparams;
  if (alpha) {
    a = *alpha;
  } else if (auto it = hp.find("alpha_sum_final"); it != hp.end() && std::holds_alternative<double>(it->second)) {
    a = std::get<double>(it->second) / static_cast<double>(K);
  } else if (auto it2 = hp.find("alpha"); it2 != hp.end() && std::holds_alternative<double>(it2->second)) {
    a = std::get<double>(it2->second);
  }
  if (!(std::isfinite(a) && a > 0.0)) throw Error("fold-in alpha must be finite and positive");

  Matrix theta(heldout_bow.rows(), K);
  std::vector<double> cumulative(K);
  std::vector<std::uint32_t> words;
  std::vector<std::uint16_t> z;
  std::vector<std::int32_t> counts(K);
  for (std::size_t d = 0; d < heldout_bow.rows(); ++d) {
    Rng rng = make_rng(seed, d);
    words.clear();
    for (const auto& e : heldout_bow.row(d)) words.insert(words.end(), e.count, e.term);
    z.resize(words.size());
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < words.size(); ++i) {
      z[i] = static_cast<std::uint16_t>(uniform_index(rng, K));
      ++counts[z[i]];
    }
    for (std::size_t it = 0; it < n_iterations && !words.empty(); ++it) {
      for (std::size_t i = 0; i < words.size(); ++i) {
        --counts[z[i]];
        double total = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          total += (counts[k] + a) * bundle.beta(k, words[i]);
          cumulative[k] = total;
        }
        const double u = uniform01(rng) * total;
        std::size_t k = 0;
        while (k + 1 < K && cumulative[k] <= u) ++k;
        z[i] = static_cast<std::uint16_t>(k);
        ++counts[k];
      }
    }
    const double denom = static_cast<double>(words.size()) + a * static_cast<double>(K);
    for (std::size_t k = 0; k < K; ++k) theta(d, k) = (counts[k] + a) / denom;
  }
  return theta;
}

Matrix infer_theta(const RunBundle& bundle, const Corpus& heldout, std::size_t n_iterations,
                   std::uint64_t seed, std::optional<double> alpha) {
  if (!bundle.meta.vocab_sha256.empty() && bundle.meta.vocab_sha256 != heldout.vocab.sha256()) {
    throw Error("vocabulary mismatch: held-out corpus vocabulary hash differs from the bundle's");
  }
  return infer_theta(bundle, heldout.bow, n_iterations, seed, alpha);
}

}  // namespace tmeval
