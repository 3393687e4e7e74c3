#pragma once

#include <stdlib.h>

#include <filesystem>
#include <string>
#include <vector>

#include "tmeval/matrix.hpp"
#include "tmeval/rng.hpp"
#include "tmeval/run_bundle.hpp"

namespace testutil {

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "tmeval_test_XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline tmeval::Matrix random_simplex(std::size_t rows, std::size_t cols, tmeval::Rng& rng) {
  tmeval::Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (auto& x : m.row(r)) {
      x = 0.01 + tmeval::uniform01(rng);
      sum += x;
    }
    for (auto& x : m.row(r)) x /= sum;
  }
  return m;
}

inline tmeval::RunBundle random_bundle(std::size_t K, std::size_t V, std::size_t N, std::uint64_t seed,
                                       const std::string& vocab_hash = "feed") {
  tmeval::Rng rng = tmeval::make_rng(seed, 77);
  tmeval::RunBundle b;
  b.beta = random_simplex(K, V, rng);
  b.theta = random_simplex(N, K, rng);
  b.meta.model_name = "random";
  b.meta.dataset_id = "toy";
  b.meta.K = K;
  b.meta.V = V;
  b.meta.N = N;
  b.meta.seed = seed;
  b.meta.vocab_sha256 = vocab_hash;
  b.meta.hyperparams = {{"alpha", 0.1}, {"note", std::string("x")}};
  return b;
}

/// Bundle whose topic order is permuted: topic k of the result is topic perm[k] of b.
inline tmeval::RunBundle permute_topics(const tmeval::RunBundle& b, const std::vector<std::size_t>& perm) {
  tmeval::RunBundle out = b;
  for (std::size_t k = 0; k < perm.size(); ++k) {
    for (std::size_t v = 0; v < b.beta.cols(); ++v) out.beta(k, v) = b.beta(perm[k], v);
    for (std::size_t d = 0; d < b.theta.rows(); ++d) out.theta(d, k) = b.theta(d, perm[k]);
  }
  return out;
}

}  // namespace testutil
