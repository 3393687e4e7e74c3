#include <doctest.h>

#include <fstream>

#include <json.hpp>

#include "helpers.hpp"
#include "tmeval/error.hpp"
#include "tmeval/run_io.hpp"

using namespace tmeval;
namespace fs = std::filesystem;

namespace {

std::string error_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

void check_same(const RunBundle& a, const RunBundle& b) {
  CHECK(a.beta == b.beta);
  CHECK(a.theta == b.theta);
  CHECK(a.meta.model_name == b.meta.model_name);
  CHECK(a.meta.dataset_id == b.meta.dataset_id);
  CHECK(a.meta.K == b.meta.K);
  CHECK(a.meta.V == b.meta.V);
  CHECK(a.meta.N == b.meta.N);
  CHECK(a.meta.seed == b.meta.seed);
  CHECK(a.meta.hyperparams == b.meta.hyperparams);
  CHECK(a.meta.vocab_sha256 == b.meta.vocab_sha256);
  CHECK(a.meta.non_simplex == b.meta.non_simplex);
}

}  // namespace

TEST_CASE("matrix file layout") {
  testutil::TempDir dir;
  Matrix m(3, 5);
  for (std::size_t i = 0; i < 15; ++i) m.data()[i] = 0.5 * static_cast<double>(i) - 1.0 / 3.0;
  write_matrix(dir / "m.mat", m);
  CHECK(fs::file_size(dir / "m.mat") == 16 + 3 * 5 * 8);

  std::ifstream in(dir / "m.mat", std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "TMRUNB01");
  CHECK(bytes[8] == 3);
  CHECK(bytes[9] == 0);
  CHECK(bytes[12] == 5);
  // first payload double, little-endian
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | bytes[16 + i];
  CHECK(bits == std::bit_cast<std::uint64_t>(m(0, 0)));
  CHECK(read_matrix(dir / "m.mat") == m);
}

TEST_CASE("bundle round-trip is bit-exact") {
  testutil::TempDir dir;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const RunBundle b = testutil::random_bundle(4, 30, 12, seed);
    write_run(b, dir / ("run" + std::to_string(seed)));
    check_same(read_run(dir / ("run" + std::to_string(seed))), b);
  }
  CHECK(fs::exists(dir / "run0" / "meta.json"));
  CHECK(fs::exists(dir / "run0" / "beta.mat"));
  CHECK(fs::exists(dir / "run0" / "theta.mat"));
}

TEST_CASE("write refuses unnormalized rows") {
  testutil::TempDir dir;
  RunBundle b = testutil::random_bundle(3, 10, 5, 1);
  for (auto& x : b.beta.row(1)) x *= 0.9;
  CHECK(contains(error_of([&] { write_run(b, dir / "r"); }), "row not normalized"));
  RunBundle c = testutil::random_bundle(3, 10, 5, 1);
  c.meta.K = 4;
  CHECK_THROWS_AS(write_run(c, dir / "r"), Error);
}

TEST_CASE("read rejects foreign and truncated files") {
  testutil::TempDir dir;
  const RunBundle b = testutil::random_bundle(3, 10, 5, 2);
  write_run(b, dir / "r");
  {
    std::ofstream out(dir / "r" / "theta.mat", std::ios::binary | std::ios::trunc);
    out << "NOTABUNDLE-------------";
  }
  CHECK(contains(error_of([&] { read_run(dir / "r"); }), "not a run bundle"));

  write_run(b, dir / "r");
  fs::resize_file(dir / "r" / "beta.mat", fs::file_size(dir / "r" / "beta.mat") - 5);
  CHECK(contains(error_of([&] { read_run(dir / "r"); }), "unexpected end of file"));
  fs::resize_file(dir / "r" / "beta.mat", 10);
  CHECK(contains(error_of([&] { read_run(dir / "r"); }), "unexpected end of file"));
}

TEST_CASE("read reports shape and meta disagreement") {
  testutil::TempDir dir;
  const RunBundle b = testutil::random_bundle(3, 10, 5, 2);
  write_run(b, dir / "r");
  write_matrix(dir / "r" / "beta.mat", testutil::random_bundle(3, 11, 5, 2).beta);
  const std::string e = error_of([&] { read_run(dir / "r"); });
  CHECK(contains(e, "3x11"));
  CHECK(contains(e, "3x10"));
}

TEST_CASE("read requires every meta key") {
  testutil::TempDir dir;
  const RunBundle b = testutil::random_bundle(2, 4, 3, 2);
  for (const char* key : {"model_name", "dataset_id", "K", "V", "N", "seed", "hyperparams", "vocab_sha256"}) {
    write_run(b, dir / "r");
    nlohmann::json j;
    std::ifstream(dir / "r" / "meta.json") >> j;
    j.erase(key);
    std::ofstream(dir / "r" / "meta.json") << j.dump();
    CHECK(contains(error_of([&] { read_run(dir / "r"); }), key));
  }
}

TEST_CASE("slightly off rows are renormalized, larger errors rejected") {
  testutil::TempDir dir;
  RunBundle b = testutil::random_bundle(3, 10, 5, 3);
  write_run(b, dir / "r");
  Matrix beta = b.beta;
  for (auto& x : beta.row(0)) x *= 1.0 + 5e-7;
  write_matrix(dir / "r" / "beta.mat", beta);
  const RunBundle back = read_run(dir / "r");
  CHECK(max_row_sum_error(back.beta) <= 1e-12);

  for (auto& x : beta.row(0)) x *= 1.01;
  write_matrix(dir / "r" / "beta.mat", beta);
  CHECK(contains(error_of([&] { read_run(dir / "r"); }), "row not normalized"));

  Matrix theta = b.theta;
  for (auto& x : theta.row(2)) x *= 0.5;
  write_matrix(dir / "r" / "beta.mat", b.beta);
  write_matrix(dir / "r" / "theta.mat", theta);
  CHECK(contains(error_of([&] { read_run(dir / "r"); }), "theta row not normalized"));
}

TEST_CASE("unnormalized topic-word scores are accepted on request") {
  testutil::TempDir dir;
  RunBundle b = testutil::random_bundle(3, 8, 4, 4);
  write_run(b, dir / "r");
  // decoder-style scores, negative and unnormalized
  Matrix scores(3, 8);
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t v = 0; v < 8; ++v) scores(k, v) = std::sin(1.0 + k * 8.0 + v) * 3.0;
  write_matrix(dir / "r" / "beta.mat", scores);
  CHECK_THROWS_AS(read_run(dir / "r"), Error);

  ReadOptions opt;
  opt.allow_unnormalized = true;
  const RunBundle r = read_run(dir / "r", opt);
  CHECK(r.meta.non_simplex);
  for (std::size_t k = 0; k < 3; ++k) {
    double lo = 1.0, hi = 0.0;
    for (std::size_t v = 0; v < 8; ++v) {
      lo = std::min(lo, r.beta(k, v));
      hi = std::max(hi, r.beta(k, v));
      for (std::size_t u = 0; u < 8; ++u) CHECK((scores(k, v) < scores(k, u)) == (r.beta(k, v) < r.beta(k, u)));
    }
    CHECK(lo == 0.0);
    CHECK(hi == 1.0);
  }
  // the flag survives a write and read
  write_run(r, dir / "again");
  const RunBundle again = read_run(dir / "again");
  CHECK(again.meta.non_simplex);
  CHECK(again.beta == r.beta);
}

TEST_CASE("run sets enforce one context") {
  std::vector<RunBundle> ok;
  for (std::uint64_t s = 0; s < 10; ++s) ok.push_back(testutil::random_bundle(3, 10, 6, s));
  CHECK(make_runset(ok).size() == 10);

  std::vector<RunBundle> mixed_k = {testutil::random_bundle(25, 10, 6, 1), testutil::random_bundle(50, 10, 6, 2)};
  const std::string e = error_of([&] { make_runset(mixed_k, {"a", "b"}); });
  CHECK(contains(e, "b"));
  CHECK(contains(e, "K=50"));

  std::vector<RunBundle> mixed_vocab = {testutil::random_bundle(3, 10, 6, 1, "aaaa"),
                                        testutil::random_bundle(3, 10, 6, 2, "bbbb")};
  CHECK(contains(error_of([&] { make_runset(mixed_vocab); }), "vocabulary"));
  CHECK_THROWS_AS(make_runset({}), Error);
}

TEST_CASE("run directories are discovered in sorted order") {
  testutil::TempDir dir;
  for (const char* name : {"run_b", "run_a", "run_c"}) write_run(testutil::random_bundle(2, 5, 3, 1), dir / name);
  fs::create_directories(dir / "not_a_run");
  const auto found = find_run_dirs(dir.path());
  REQUIRE(found.size() == 3);
  CHECK(found[0].filename() == "run_a");
  CHECK(found[2].filename() == "run_c");
  CHECK(find_run_dirs(dir / "run_b") == std::vector<fs::path>{dir / "run_b"});

  const RunSet set = load_runset(found);
  CHECK(set.names == std::vector<std::string>{"run_a", "run_b", "run_c"});
  CHECK(set.context.K == 2);
  CHECK(set.context.V == 5);
}
