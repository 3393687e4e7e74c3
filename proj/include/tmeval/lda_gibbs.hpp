#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "tmeval/corpus.hpp"
#include "tmeval/rng.hpp"
#include "tmeval/run_bundle.hpp"

namespace tmeval {

struct LdaHyperparams {
  double alpha = 1.0;  // per-topic initial document-topic concentration
  double beta = 0.05;  // symmetric topic-word concentration
  std::size_t optimize_interval = 10;
  std::size_t n_iterations = 2000;
  std::size_t burn_in = 200;
  /// Gamma prior on alpha used by the fixed-point update (shape, scale).
  double alpha_prior_shape = 1.001;
  double alpha_prior_scale = 1.0;

  void validate() const;
  HyperparamMap to_map() const;
};

/// Collapsed Gibbs sampler state over the non-empty documents of a corpus.
/// topic_word is stored word-major (v * K + k) so the per-token conditional
/// reads contiguous memory.
struct GibbsState {
  std::size_t K = 0;
  std::size_t V = 0;
  std::size_t N = 0;

  std::vector<std::size_t> doc_offsets;  // token range per document, size N + 1
  std::vector<std::uint32_t> words;      // token -> vocabulary index
  std::vector<std::uint16_t> z;          // token -> topic

  std::vector<std::int32_t> doc_topic;   // N x K
  std::vector<std::int32_t> topic_word;  // V x K
  std::vector<std::int32_t> topic_total; // K

  std::vector<double> alpha;  // K
  double alpha_sum = 0.0;
  double beta = 0.0;
  double beta_sum = 0.0;  // V * beta

  Rng rng;

  std::size_t doc_length(std::size_t d) const { return doc_offsets[d + 1] - doc_offsets[d]; }
  std::int32_t& n_dk(std::size_t d, std::size_t k) { return doc_topic[d * K + k]; }
  std::int32_t n_dk(std::size_t d, std::size_t k) const { return doc_topic[d * K + k]; }
  std::int32_t& n_kv(std::size_t k, std::size_t v) { return topic_word[v * K + k]; }
  std::int32_t n_kv(std::size_t k, std::size_t v) const { return topic_word[v * K + k]; }

  /// Builds the token stream from bag-of-words counts and assigns topics
  /// uniformly at random. Empty documents contribute no tokens.
  static GibbsState initialize(const CountMatrix& bow, std::size_t K, double alpha, double beta,
                               std::uint64_t seed);

  /// Recounts everything from z; throws Error describing the first inconsistency.
  void audit() const;

  void remove_token(std::size_t d, std::size_t v, std::size_t k);
  void add_token(std::size_t d, std::size_t v, std::size_t k);
};

/// Unnormalized collapsed conditional for every topic:
/// (n_dk + alpha_k) * (n_kv + beta) / (n_k + V beta). The token must already
/// be removed from the counts.
void topic_conditional(const GibbsState& state, std::size_t d, std::size_t v,
                       std::vector<double>& weights);

/// Draws a new topic for a token whose counts are already excluded.
std::size_t resample_token(GibbsState& state, std::size_t d, std::size_t v,
                           std::vector<double>& scratch);

/// One full pass over all tokens.
void gibbs_sweep(GibbsState& state);

/// Result of an alpha update; when diverged, alpha is left untouched.
struct AlphaUpdate {
  bool diverged = false;
};

/// Fixed-point update of the asymmetric document-topic prior from the
/// Dirichlet-multinomial likelihood of the current doc-topic counts, using
/// count histograms. A Gamma(shape, scale) prior regularizes the update.
AlphaUpdate optimize_alpha(GibbsState& state, double prior_shape = 1.001, double prior_scale = 1.0,
                           std::size_t iterations = 1);

struct TrainObserver {
  /// Called after each sweep with the 1-based iteration number.
  std::function<void(std::size_t, const GibbsState&)> after_sweep;
};

/// Trains LDA by collapsed Gibbs sampling and returns posterior-mean estimates
/// from the final sample.
RunBundle train_lda(const Corpus& corpus, std::size_t K, const LdaHyperparams& hp,
                    std::uint64_t seed, const TrainObserver& observer = {});

/// Fold-in inference for new documents with the topic-word matrix held fixed.
/// The prior is symmetric: `alpha` if given, else the trained
/// "alpha_sum_final" spread evenly over K, else the "alpha" hyperparameter,
/// else 1. Empty documents get the uniform prior mean.
Matrix infer_theta(const RunBundle& bundle, const CountMatrix& heldout_bow,
                   std::size_t n_iterations, std::uint64_t seed,
                   std::optional<double> alpha = std::nullopt);

/// As above, additionally checking the held-out corpus vocabulary against the
/// bundle's vocabulary hash.
Matrix infer_theta(const RunBundle& bundle, const Corpus& heldout, std::size_t n_iterations,
                   std::uint64_t seed, std::optional<double> alpha = std::nullopt);

}  // namespace tmeval
