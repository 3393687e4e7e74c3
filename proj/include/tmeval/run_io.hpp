#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tmeval/run_bundle.hpp"

namespace tmeval {

/// Matrix file layout: 8-byte magic "TMRUNB01", rows and cols as 32-bit
/// little-endian unsigned ints, then rows*cols little-endian IEEE-754 doubles
/// in row-major order.
inline constexpr char kMatrixMagic[8] = {'T', 'M', 'R', 'U', 'N', 'B', '0', '1'};
inline constexpr std::size_t kMatrixHeaderBytes = 16;

void write_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix(const std::filesystem::path& path);

struct ReadOptions {
  /// Accept topic-word rows that are not distributions. Such rows are
  /// min-max rescaled to [0, 1] per row (rank order preserved) and the
  /// bundle is flagged non_simplex.
  bool allow_unnormalized = false;
  /// Rows whose sum is off by at most this much are renormalized on load.
  double renormalize_tolerance = 1e-6;
};

/// Writes meta.json, beta.mat and theta.mat into dir (created if needed).
void write_run(const RunBundle& bundle, const std::filesystem::path& dir);
RunBundle read_run(const std::filesystem::path& dir, const ReadOptions& options = {});

struct RunContext {
  std::string dataset_id;
  std::size_t V = 0;
  std::size_t K = 0;
  std::size_t N = 0;
  std::string vocab_sha256;
};

/// Runs sharing one experimental context (dataset, vocabulary, K).
struct RunSet {
  std::vector<RunBundle> runs;
  std::vector<std::string> names;  // one per run, e.g. the directory name
  RunContext context;

  std::size_t size() const noexcept { return runs.size(); }
};

/// Builds a RunSet, enforcing that every run shares K, V, N, dataset and
/// vocabulary hash. The error lists the offending runs.
RunSet make_runset(std::vector<RunBundle> runs, std::vector<std::string> names = {});
RunSet load_runset(std::span<const std::filesystem::path> dirs, const ReadOptions& options = {});

/// Sorted subdirectories of root that contain a meta.json.
std::vector<std::filesystem::path> find_run_dirs(const std::filesystem::path& root);

}  // namespace tmeval
