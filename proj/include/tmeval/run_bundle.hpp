#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>

#include "tmeval/matrix.hpp"

namespace tmeval {

using HyperValue = std::variant<double, std::string>;
using HyperparamMap = std::map<std::string, HyperValue>;

struct RunMeta {
  std::string model_name;
  std::string dataset_id;
  std::size_t K = 0;
  std::size_t V = 0;
  std::size_t N = 0;
  std::uint64_t seed = 0;
  HyperparamMap hyperparams;
  std::string vocab_sha256;
  double wall_time = 0.0;
  /// Topic-word rows are rank-preserving scores rather than distributions
  /// (e.g. product-of-experts decoders). Only ranking/argmax metrics apply.
  bool non_simplex = false;
};

/// One model run: topic-word estimates beta (K x V), document-topic
/// estimates theta (N x K), and provenance.
struct RunBundle {
  Matrix beta;
  Matrix theta;
  RunMeta meta;
};

/// Largest |row sum - 1| over the rows of m.
double max_row_sum_error(const Matrix& m);

/// Throws Error unless shapes agree with meta, entries are finite and
/// non-negative, and rows of beta (unless non_simplex) and theta sum to 1
/// within tolerance.
void validate_bundle(const RunBundle& bundle, double tolerance = 1e-9);

}  // namespace tmeval
