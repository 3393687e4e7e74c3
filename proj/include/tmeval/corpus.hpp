#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace tmeval {

/// A pre-tokenized document with a two-level gold label.
struct Document {
  std::string id;
  std::vector<std::string> tokens;
  std::string label_high;
  std::string label_low;
};

/// Ordered term list. Position 0 is the most frequent term; frequency ties
/// are broken lexicographically.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> terms);

  std::size_t size() const noexcept { return terms_.size(); }
  bool empty() const noexcept { return terms_.empty(); }
  const std::vector<std::string>& terms() const noexcept { return terms_; }
  const std::string& term(std::size_t i) const { return terms_.at(i); }
  std::optional<std::size_t> find(const std::string& term) const;

  /// Hex SHA-256 of the vocabulary file representation (one term per line,
  /// each terminated by '\n'). Used to check that run bundles share a vocabulary.
  std::string sha256() const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.terms_ == b.terms_; }

 private:
  std::vector<std::string> terms_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Sparse document-term counts in compressed-row form.
class CountMatrix {
 public:
  struct Entry {
    std::uint32_t term;
    std::uint32_t count;
  };

  CountMatrix() = default;
  CountMatrix(std::size_t cols, std::vector<std::vector<Entry>> rows);

  std::size_t rows() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t cols() const noexcept { return cols_; }
  std::span<const Entry> row(std::size_t d) const {
    return {entries_.data() + offsets_[d], offsets_[d + 1] - offsets_[d]};
  }
  std::uint32_t at(std::size_t d, std::size_t v) const;
  std::uint64_t row_total(std::size_t d) const;

 private:
  std::size_t cols_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<Entry> entries_;
};

/// Result of vectorizing documents against a vocabulary.
struct BagOfWords {
  CountMatrix counts;
  /// Documents with zero in-vocabulary tokens. They stay in the corpus so ids
  /// remain aligned, but are skipped by training and hard-assignment metrics.
  std::vector<bool> empty;
};

/// Documents, their vocabulary, and bag-of-words counts. Gold labels are kept
/// both as strings (on the documents) and as dense ids per level.
struct Corpus {
  std::vector<Document> docs;
  Vocabulary vocab;
  CountMatrix bow;
  std::vector<bool> empty;

  std::vector<std::string> high_labels;  // id -> name, sorted by name
  std::vector<std::string> low_labels;
  std::vector<int> high_of_doc;
  std::vector<int> low_of_doc;

  std::size_t size() const noexcept { return docs.size(); }
  std::size_t n_nonempty() const;
};

enum class LabelLevel { high, low };
LabelLevel parse_label_level(const std::string& s);
std::string to_string(LabelLevel level);

/// Disjoint train/held-out partition in which a subset of low-level labels is
/// only ever seen in held-out documents.
struct SplitSpec {
  std::vector<std::string> train_ids;
  std::vector<std::string> heldout_ids;
  std::vector<std::string> seen_low_labels;
  std::vector<std::string> unseen_low_labels;

  friend bool operator==(const SplitSpec&, const SplitSpec&) = default;
};

Vocabulary build_vocabulary(std::span<const Document> docs, std::size_t max_size);
BagOfWords vectorize(std::span<const Document> docs, const Vocabulary& vocab);

/// Assembles a Corpus, checking id uniqueness and the label hierarchy.
Corpus make_corpus(std::vector<Document> docs, Vocabulary vocab);

/// Selects, per high-level label, round(unseen_low_fraction * n_low) low labels
/// (at least 1 and at most n_low - 1 when n_low >= 2) as unseen; their documents
/// go to held-out. Additionally floor(heldout_fraction * n) of each high label's
/// seen-label documents are held out, keeping at least one in training.
SplitSpec make_label_split(const Corpus& corpus, double heldout_fraction,
                           double unseen_low_fraction, std::uint64_t seed);

/// Restricts a corpus to the given ids (in corpus order), keeping the vocabulary.
Corpus subset(const Corpus& corpus, std::span<const std::string> ids);

enum class CorpusFormat { jsonl };
CorpusFormat parse_corpus_format(const std::string& s);

struct LoadOptions {
  std::size_t max_vocab = SIZE_MAX;
  /// When set, documents are vectorized against this vocabulary instead of
  /// building one from the file.
  std::optional<Vocabulary> vocab;
};

std::vector<Document> read_documents(const std::filesystem::path& path, CorpusFormat format);
Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format,
                   const LoadOptions& options = {});
void write_documents(const std::filesystem::path& path, std::span<const Document> docs);
/// Gold-label corpus for alignment. A vocab.txt next to the file is used for
/// vectorizing, so documents empty under the training vocabulary are skipped.
Corpus load_gold_corpus(const std::filesystem::path& path);

Vocabulary read_vocabulary(const std::filesystem::path& path);
void write_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab);

SplitSpec read_split(const std::filesystem::path& path);
void write_split(const std::filesystem::path& path, const SplitSpec& split);

}  // namespace tmeval
