#include "tmeval/corpus.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tmeval/error.hpp"
#include "tmeval/rng.hpp"

namespace tmeval {

using nlohmann::json;

Vocabulary::Vocabulary(std::vector<std::string> terms) : terms_(std::move(terms)) {
  index_.reserve(terms_.size());
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    if (!index_.emplace(terms_[i], i).second) {
      throw Error("duplicate vocabulary term '" + terms_[i] + "'");
    }
  }
}

std::optional<std::size_t> Vocabulary::find(const std::string& term) const {
  auto it = index_.find(term);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string Vocabulary::sha256() const {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  for (const auto& t : terms_) {
    EVP_DigestUpdate(ctx, t.data(), t.size());
    EVP_DigestUpdate(ctx, "\n", 1);
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

CountMatrix::CountMatrix(std::size_t cols, std::vector<std::vector<Entry>> rows) : cols_(cols) {
  offsets_.reserve(rows.size() + 1);
  for (auto& r : rows) {
    std::sort(r.begin(), r.end(), [](const Entry& a, const Entry& b) { return a.term < b.term; });
    entries_.insert(entries_.end(), r.begin(), r.end());
    offsets_.push_back(entries_.size());
  }
}

std::uint32_t CountMatrix::at(std::size_t d, std::size_t v) const {
  auto r = row(d);
  auto it = std::lower_bound(r.begin(), r.end(), v,
                             [](const Entry& e, std::size_t term) { return e.term < term; });
  return (it != r.end() && it->term == v) ? it->count : 0;
}

std::uint64_t CountMatrix::row_total(std::size_t d) const {
  std::uint64_t total = 0;
  for (const auto& e : row(d)) total += e.count;
  return total;
}

std::size_t Corpus::n_nonempty() const {
  return static_cast<std::size_t>(std::count(empty.begin(), empty.end(), false));
}

LabelLevel parse_label_level(const std::string& s) {
  if (s == "high") return LabelLevel::high;
  if (s == "low") return LabelLevel::low;
  throw Error("unknown label level '" + s + "' (expected high or low)");
}

std::string to_string(LabelLevel level) { return level == LabelLevel::high ? "high" : "low"; }

Vocabulary build_vocabulary(std::span<const Document> docs, std::size_t max_size) {
  if (max_size == 0) throw Error("vocabulary size must be positive");
  std::unordered_map<std::string, std::uint64_t> freq;
  for (const auto& doc : docs)
    for (const auto& tok : doc.tokens) ++freq[tok];
  if (freq.empty()) throw Error("no tokens");

  std::vector<std::pair<std::string, std::uint64_t>> sorted(freq.begin(), freq.end());
  auto by_frequency = [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  };
  const std::size_t keep = std::min(max_size, sorted.size());
  std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(keep),
                    sorted.end(), by_frequency);
  std::vector<std::string> terms;
  terms.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) terms.push_back(std::move(sorted[i].first));
  return Vocabulary(std::move(terms));
}

BagOfWords vectorize(std::span<const Document> docs, const Vocabulary& vocab) {
  std::vector<std::vector<CountMatrix::Entry>> rows(docs.size());
  std::vector<bool> empty(docs.size(), false);
  std::map<std::uint32_t, std::uint32_t> counts;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    counts.clear();
    for (const auto& tok : docs[d].tokens) {
      if (auto v = vocab.find(tok)) ++counts[static_cast<std::uint32_t>(*v)];
    }
    rows[d].reserve(counts.size());
    for (auto [term, count] : counts) rows[d].push_back({term, count});
    empty[d] = counts.empty();
  }
  return {CountMatrix(vocab.size(), std::move(rows)), std::move(empty)};
}

namespace {

std::vector<std::string> sorted_unique(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

int index_of(const std::vector<std::string>& sorted, const std::string& s) {
  return static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), s) - sorted.begin());
}

}  // namespace

Corpus make_corpus(std::vector<Document> docs, Vocabulary vocab) {
  if (docs.empty()) throw Error("no documents");
  std::set<std::string> ids;
  std::map<std::string, std::string> high_of_low;
  for (const auto& doc : docs) {
    if (!ids.insert(doc.id).second) throw Error("duplicate document id '" + doc.id + "'");
    if (doc.label_high.empty() || doc.label_low.empty()) {
      throw Error("unknown label on document '" + doc.id + "'");
    }
    auto [it, inserted] = high_of_low.emplace(doc.label_low, doc.label_high);
    if (!inserted && it->second != doc.label_high) {
      throw Error("low label '" + doc.label_low + "' appears under high labels '" + it->second +
                  "' and '" + doc.label_high + "'");
    }
  }

  Corpus c;
  auto bow = vectorize(docs, vocab);
  c.bow = std::move(bow.counts);
  c.empty = std::move(bow.empty);
  std::vector<std::string> highs, lows;
  for (const auto& doc : docs) {
    highs.push_back(doc.label_high);
    lows.push_back(doc.label_low);
  }
  c.high_labels = sorted_unique(std::move(highs));
  c.low_labels = sorted_unique(std::move(lows));
  for (const auto& doc : docs) {
    c.high_of_doc.push_back(index_of(c.high_labels, doc.label_high));
    c.low_of_doc.push_back(index_of(c.low_labels, doc.label_low));
  }
  c.docs = std::move(docs);
  c.vocab = std::move(vocab);
  return c;
}

SplitSpec make_label_split(const Corpus& corpus, double heldout_fraction,
                           double unseen_low_fraction, std::uint64_t seed) {
  auto in_open_unit = [](double f) { return f > 0.0 && f < 1.0; };
  if (!in_open_unit(heldout_fraction) || !in_open_unit(unseen_low_fraction)) {
    throw Error("split fractions must lie in (0, 1)");
  }
  Rng rng = make_rng(seed, 0x5117);

  // high label -> (low labels, doc indices per low label)
  std::map<std::string, std::map<std::string, std::vector<std::size_t>>> tree;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    tree[corpus.docs[d].label_high][corpus.docs[d].label_low].push_back(d);
  }

  std::vector<bool> heldout(corpus.size(), false);
  std::vector<std::string> seen, unseen;
  for (auto& [high, lows] : tree) {
    std::vector<std::string> names;
    for (const auto& [low, _] : lows) names.push_back(low);
    shuffle_in_place(names, rng);

    std::size_t n_unseen = 0;
    if (names.size() >= 2) {
      auto want = static_cast<std::size_t>(std::llround(unseen_low_fraction * names.size()));
      n_unseen = std::clamp<std::size_t>(want, 1, names.size() - 1);
    }
    std::vector<std::size_t> seen_docs;
    for (std::size_t i = 0; i < names.size(); ++i) {
      const auto& docs = lows[names[i]];
      if (i < n_unseen) {
        unseen.push_back(names[i]);
        for (auto d : docs) heldout[d] = true;
      } else {
        seen.push_back(names[i]);
        seen_docs.insert(seen_docs.end(), docs.begin(), docs.end());
      }
    }
    std::sort(seen_docs.begin(), seen_docs.end());
    shuffle_in_place(seen_docs, rng);

    auto n_hold = static_cast<std::size_t>(std::floor(heldout_fraction * seen_docs.size()));
    if (n_unseen == 0) {
      if (seen_docs.size() < 2) {
        throw Error("high label '" + high + "' has a single document and cannot appear in both splits");
      }
      n_hold = std::max<std::size_t>(n_hold, 1);
    }
    n_hold = std::min(n_hold, seen_docs.size() - 1);
    for (std::size_t i = 0; i < n_hold; ++i) heldout[seen_docs[i]] = true;
  }

  SplitSpec split;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    (heldout[d] ? split.heldout_ids : split.train_ids).push_back(corpus.docs[d].id);
  }
  split.seen_low_labels = sorted_unique(std::move(seen));
  split.unseen_low_labels = sorted_unique(std::move(unseen));
  return split;
}

Corpus subset(const Corpus& corpus, std::span<const std::string> ids) {
  std::set<std::string> wanted(ids.begin(), ids.end());
  std::vector<Document> docs;
  for (const auto& doc : corpus.docs) {
    if (wanted.erase(doc.id)) docs.push_back(doc);
  }
  if (!wanted.empty()) throw Error("document id '" + *wanted.begin() + "' not in corpus");
  return make_corpus(std::move(docs), corpus.vocab);
}

CorpusFormat parse_corpus_format(const std::string& s) {
  if (s == "jsonl") return CorpusFormat::jsonl;
  throw Error("unknown corpus format '" + s + "'");
}

namespace {

std::string require_string(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw Error("line " + std::to_string(line) + ": missing or non-string field '" + key + "'");
  }
  return it->get<std::string>();
}

}  // namespace

std::vector<Document> read_documents(const std::filesystem::path& path, CorpusFormat format) {
  (void)format;  // jsonl is the only format
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus file " + path.string());
  std::vector<Document> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error("line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
    }
    if (!obj.is_object()) throw Error("line " + std::to_string(line_no) + ": expected an object");
    Document doc;
    doc.id = require_string(obj, "id", line_no);
    doc.label_high = require_string(obj, "label_high", line_no);
    doc.label_low = require_string(obj, "label_low", line_no);
    auto toks = obj.find("tokens");
    if (toks == obj.end() || !toks->is_array()) {
      throw Error("line " + std::to_string(line_no) + ": missing or non-array field 'tokens'");
    }
    for (const auto& t : *toks) {
      if (!t.is_string()) throw Error("line " + std::to_string(line_no) + ": non-string token");
      doc.tokens.push_back(t.get<std::string>());
    }
    docs.push_back(std::move(doc));
  }
  if (docs.empty()) throw Error("no documents");
  return docs;
}

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format,
                   const LoadOptions& options) {
  auto docs = read_documents(path, format);
  Vocabulary vocab = options.vocab ? *options.vocab : build_vocabulary(docs, options.max_vocab);
  return make_corpus(std::move(docs), std::move(vocab));
}

Corpus load_gold_corpus(const std::filesystem::path& path) {
  LoadOptions opt;
  const auto vocab_path = path.parent_path() / "vocab.txt";
  if (std::filesystem::exists(vocab_path)) opt.vocab = read_vocabulary(vocab_path);
  return load_corpus(path, CorpusFormat::jsonl, opt);
}

void write_documents(const std::filesystem::path& path, std::span<const Document> docs) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& doc : docs) {
    json obj = {{"id", doc.id},
                {"tokens", doc.tokens},
                {"label_high", doc.label_high},
                {"label_low", doc.label_low}};
    out << obj.dump() << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

Vocabulary read_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open vocabulary file " + path.string());
  std::vector<std::string> terms;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    terms.push_back(line);
  }
  return Vocabulary(std::move(terms));
}

void write_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& t : vocab.terms()) out << t << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

SplitSpec read_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open split file " + path.string());
  json j;
  try {
    j = json::parse(in);
    SplitSpec s;
    s.train_ids = j.at("train_ids").get<std::vector<std::string>>();
    s.heldout_ids = j.at("heldout_ids").get<std::vector<std::string>>();
    s.seen_low_labels = j.at("seen_low_labels").get<std::vector<std::string>>();
    s.unseen_low_labels = j.at("unseen_low_labels").get<std::vector<std::string>>();
    return s;
  } catch (const json::exception& e) {
    throw Error("invalid split file " + path.string() + ": " + e.what());
  }
}

void write_split(const std::filesystem::path& path, const SplitSpec& split) {
  json j = {{"train_ids", split.train_ids},
            {"heldout_ids", split.heldout_ids},
            {"seen_low_labels", split.seen_low_labels},
            {"unseen_low_labels", split.unseen_low_labels}};
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace tmeval
