#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "tmeval/corpus.hpp"
#include "tmeval/matrix.hpp"
#include "tmeval/run_bundle.hpp"

namespace tmeval {

struct SynthParams {
  std::size_t K = 10;
  std::size_t V = 2000;
  std::size_t N = 2000;
  double doc_len_mean = 80.0;
  double alpha = 0.1;            // symmetric document-topic concentration
  double topic_sparsity = 0.1;   // fraction of V in each topic's support
  std::size_t n_high_groups = 2;
  std::uint64_t seed = 0;
  double word_concentration = 1.0;  // Dirichlet concentration over a topic's support
  std::size_t min_doc_len = 5;
  std::string dataset_id = "synth";

  void validate() const;
  nlohmann::json to_json() const;
  static SynthParams from_json(const nlohmann::json& j);
};

/// A corpus drawn from the LDA generative process with known parameters.
/// true_beta columns index the generator's word ids ("w0000", ...), which
/// differ from the corpus vocabulary order; see truth_bundle.
struct PlantedWorld {
  SynthParams params;
  Matrix true_beta;   // K x V
  Matrix true_theta;  // N x K
  Corpus corpus;
  std::vector<int> gold_low;   // argmax of true_theta row
  std::vector<int> gold_high;  // contiguous block of gold_low

  /// Generator word id of each corpus vocabulary entry.
  std::vector<std::size_t> vocab_word_ids() const;
};

std::string synth_word(std::size_t w);
std::string synth_low_label(std::size_t k);
std::string synth_high_label(std::size_t g);
/// Topic k's high-level group: floor(k * n_high_groups / K).
std::size_t synth_group_of(std::size_t k, std::size_t K, std::size_t n_high_groups);

/// Support of topic k: a block of round(sparsity * V) consecutive word ids
/// starting at k * block (mod V).
std::vector<std::size_t> topic_support(std::size_t k, std::size_t V, double topic_sparsity);

PlantedWorld generate(const SynthParams& params, unsigned jobs = 1);

/// The planted parameters as a run bundle over the corpus vocabulary. Words
/// the corpus never produced are dropped and beta rows renormalized.
RunBundle truth_bundle(const PlantedWorld& world);

/// Writes corpus.jsonl, vocab.txt, truth/ (run bundle) and truth.json.
void write_world(const PlantedWorld& world, const std::filesystem::path& dir);

}  // namespace tmeval
