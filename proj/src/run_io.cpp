#include "tmeval/run_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "tmeval/error.hpp"

namespace tmeval {

namespace fs = std::filesystem;
using nlohmann::json;

double max_row_sum_error(const Matrix& m) {
  double worst = 0.0;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double sum = 0.0;
    for (double x : m.row(r)) sum += x;
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  return worst;
}

namespace {

void check_entries(const Matrix& m, const char* name) {
  for (double x : m.data()) {
    if (!std::isfinite(x) || x < 0.0) {
      throw Error(std::string(name) + " has a negative or non-finite entry");
    }
  }
}

std::string shape(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

void validate_bundle(const RunBundle& b, double tolerance) {
  const auto& m = b.meta;
  if (b.beta.rows() != m.K || b.beta.cols() != m.V) {
    throw Error("beta shape " + shape(b.beta.rows(), b.beta.cols()) + " does not match meta K x V " +
                shape(m.K, m.V));
  }
  if (b.theta.rows() != m.N || b.theta.cols() != m.K) {
    throw Error("theta shape " + shape(b.theta.rows(), b.theta.cols()) +
                " does not match meta N x K " + shape(m.N, m.K));
  }
  check_entries(b.beta, "beta");
  check_entries(b.theta, "theta");
  if (!m.non_simplex && max_row_sum_error(b.beta) > tolerance) {
    throw Error("beta row not normalized");
  }
  if (max_row_sum_error(b.theta) > tolerance) throw Error("theta row not normalized");
}

namespace {

template <typename T>
T to_little_endian(T x) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(x);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return x;
}

template <typename T>
void put(std::ostream& out, T x) {
  x = to_little_endian(x);
  out.write(reinterpret_cast<const char*>(&x), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T x;
  in.read(reinterpret_cast<char*>(&x), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) throw Error("unexpected end of file");
  return to_little_endian(x);
}

}  // namespace

void write_matrix(const fs::path& path, const Matrix& m) {
  if (m.rows() > std::numeric_limits<std::uint32_t>::max() ||
      m.cols() > std::numeric_limits<std::uint32_t>::max()) {
    throw Error("matrix too large for the run bundle format: " + path.string());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out.write(kMatrixMagic, sizeof kMatrixMagic);
  put(out, static_cast<std::uint32_t>(m.rows()));
  put(out, static_cast<std::uint32_t>(m.cols()));
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(m.data().data()),
              static_cast<std::streamsize>(m.data().size() * sizeof(double)));
  } else {
    for (double x : m.data()) put(out, x);
  }
  out.flush();
  if (!out) throw Error("write failed: " + path.string());
}

Matrix read_matrix(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  try {
    char magic[8];
    in.read(magic, sizeof magic);
    if (in.gcount() != static_cast<std::streamsize>(sizeof magic) ||
        std::memcmp(magic, kMatrixMagic, sizeof magic) != 0) {
      throw Error("not a run bundle");
    }
    const auto rows = get<std::uint32_t>(in);
    const auto cols = get<std::uint32_t>(in);
    const std::size_t n = static_cast<std::size_t>(rows) * cols;
    std::vector<double> data(n);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(n * sizeof(double))) {
      throw Error("unexpected end of file");
    }
    if constexpr (std::endian::native == std::endian::big) {
      for (double& x : data) x = to_little_endian(x);
    }
    return Matrix(rows, cols, std::move(data));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

namespace {

json hyperparams_to_json(const HyperparamMap& hp) {
  json j = json::object();
  for (const auto& [key, value] : hp) {
    std::visit([&](const auto& v) { j[key] = v; }, value);
  }
  return j;
}

json meta_to_json(const RunMeta& m) {
  json j = {{"model_name", m.model_name},       {"dataset_id", m.dataset_id},
            {"K", m.K},                         {"V", m.V},
            {"N", m.N},                         {"seed", m.seed},
            {"hyperparams", hyperparams_to_json(m.hyperparams)},
            {"vocab_sha256", m.vocab_sha256}};
  j["wall_time"] = m.wall_time;
  if (m.non_simplex) j["non_simplex"] = true;
  return j;
}

RunMeta meta_from_json(const json& j, const fs::path& path) {
  static constexpr const char* required[] = {"model_name", "dataset_id", "K",           "V",
                                             "N",          "seed",       "hyperparams", "vocab_sha256"};
  for (const char* key : required) {
    if (!j.contains(key)) throw Error(path.string() + ": missing key '" + key + "'");
  }
  RunMeta m;
  try {
    m.model_name = j.at("model_name").get<std::string>();
    m.dataset_id = j.at("dataset_id").get<std::string>();
    m.K = j.at("K").get<std::size_t>();
    m.V = j.at("V").get<std::size_t>();
    m.N = j.at("N").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.vocab_sha256 = j.at("vocab_sha256").get<std::string>();
    for (const auto& [key, value] : j.at("hyperparams").items()) {
      if (value.is_number()) {
        m.hyperparams[key] = value.get<double>();
      } else if (value.is_string()) {
        m.hyperparams[key] = value.get<std::string>();
      } else {
        throw Error("hyperparameter '" + key + "' must be a number or string");
      }
    }
    if (j.contains("wall_time")) m.wall_time = j.at("wall_time").get<double>();
    if (j.contains("non_simplex")) m.non_simplex = j.at("non_simplex").get<bool>();
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
  return m;
}

/// Renormalizes rows whose sum is within tolerance of 1; returns false if
/// any row is further off.
bool renormalize_rows(Matrix& m, double tolerance) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double sum = 0.0;
    for (double x : m.row(r)) sum += x;
    if (std::abs(sum - 1.0) > tolerance) return false;
    if (std::abs(sum - 1.0) > 1e-9) {  // rows already within the bundle tolerance stay bit-exact
      for (double& x : m.row(r)) x /= sum;
    }
  }
  return true;
}

void min_max_rows(Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    auto [lo, hi] = std::minmax_element(row.begin(), row.end());
    const double low = *lo, span = *hi - *lo;
    for (double& x : row) x = span > 0.0 ? (x - low) / span : 1.0;
  }
}

}  // namespace

void write_run(const RunBundle& bundle, const fs::path& dir) {
  validate_bundle(bundle);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create directory " + dir.string() + ": " + ec.message());
  write_matrix(dir / "beta.mat", bundle.beta);
  write_matrix(dir / "theta.mat", bundle.theta);
  std::ofstream out(dir / "meta.json");
  if (!out) throw Error("cannot write " + (dir / "meta.json").string());
  out << meta_to_json(bundle.meta).dump(2) << '\n';
  if (!out) throw Error("write failed: " + (dir / "meta.json").string());
}

RunBundle read_run(const fs::path& dir, const ReadOptions& options) {
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::ifstream in(dir / "meta.json");
  if (!in) throw Error("cannot open " + (dir / "meta.json").string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error((dir / "meta.json").string() + ": " + e.what());
  }
  RunBundle b;
  b.meta = meta_from_json(j, dir / "meta.json");
  b.beta = read_matrix(dir / "beta.mat");
  b.theta = read_matrix(dir / "theta.mat");

  if (b.beta.rows() != b.meta.K || b.beta.cols() != b.meta.V) {
    throw Error(dir.string() + ": beta.mat shape " + shape(b.beta.rows(), b.beta.cols()) +
                " does not match meta.json K x V " + shape(b.meta.K, b.meta.V));
  }
  if (b.theta.rows() != b.meta.N || b.theta.cols() != b.meta.K) {
    throw Error(dir.string() + ": theta.mat shape " + shape(b.theta.rows(), b.theta.cols()) +
                " does not match meta.json N x K " + shape(b.meta.N, b.meta.K));
  }
  for (double x : b.beta.data())
    if (!std::isfinite(x)) throw Error(dir.string() + ": beta has a non-finite entry");

  if (!b.meta.non_simplex) {
    bool negative = std::any_of(b.beta.data().begin(), b.beta.data().end(),
                                [](double x) { return x < 0.0; });
    if (negative || !renormalize_rows(b.beta, options.renormalize_tolerance)) {
      if (!options.allow_unnormalized) {
        throw Error(dir.string() + ": beta row not normalized (use allow_unnormalized for score matrices)");
      }
      b.meta.non_simplex = true;
    }
  }
  if (b.meta.non_simplex) min_max_rows(b.beta);
  if (!renormalize_rows(b.theta, options.renormalize_tolerance)) {
    throw Error(dir.string() + ": theta row not normalized");
  }
  try {
    validate_bundle(b, options.renormalize_tolerance);
  } catch (const Error& e) {
    throw Error(dir.string() + ": " + e.what());
  }
  return b;
}

RunSet make_runset(std::vector<RunBundle> runs, std::vector<std::string> names) {
  if (runs.empty()) throw Error("a run set needs at least one run");
  if (names.empty()) {
    for (std::size_t i = 0; i < runs.size(); ++i) names.push_back("run_" + std::to_string(i));
  }
  if (names.size() != runs.size()) throw Error("run names do not match runs");
  const RunMeta& ref = runs.front().meta;
  std::string offenders;
  for (std::size_t i = 1; i < runs.size(); ++i) {
    const RunMeta& m = runs[i].meta;
    std::string why;
    if (m.K != ref.K) why += " K=" + std::to_string(m.K) + " vs " + std::to_string(ref.K);
    if (m.V != ref.V) why += " V=" + std::to_string(m.V) + " vs " + std::to_string(ref.V);
    if (m.N != ref.N) why += " N=" + std::to_string(m.N) + " vs " + std::to_string(ref.N);
    if (m.dataset_id != ref.dataset_id) why += " dataset '" + m.dataset_id + "' vs '" + ref.dataset_id + "'";
    if (m.vocab_sha256 != ref.vocab_sha256) why += " vocabulary hash differs";
    if (!why.empty()) offenders += "\n  " + names[i] + ":" + why + " (reference " + names[0] + ")";
  }
  if (!offenders.empty()) throw Error("incompatible runs in run set:" + offenders);
  RunSet set;
  set.context = {ref.dataset_id, ref.V, ref.K, ref.N, ref.vocab_sha256};
  set.runs = std::move(runs);
  set.names = std::move(names);
  return set;
}

RunSet load_runset(std::span<const fs::path> dirs, const ReadOptions& options) {
  if (dirs.empty()) throw Error("no run directories given");
  std::vector<RunBundle> runs;
  std::vector<std::string> names;
  for (const auto& d : dirs) {
    runs.push_back(read_run(d, options));
    names.push_back(d.filename().empty() ? d.parent_path().filename().string()
                                         : d.filename().string());
  }
  return make_runset(std::move(runs), std::move(names));
}

std::vector<fs::path> find_run_dirs(const fs::path& root) {
  if (fs::exists(root / "meta.json")) return {root};
  std::vector<fs::path> out;
  if (!fs::is_directory(root)) throw Error("not a directory: " + root.string());
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace tmeval
