#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace semcom {

struct CorpusError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RawDocument {
    std::string text;
};

// One cleaned sentence per entry: lowercase, alphabetic tokens joined by single spaces.
struct CleanCorpus {
    std::vector<std::string> sentences;

    std::size_t size() const { return sentences.size(); }
};

inline constexpr std::string_view kUnkToken = "unk";

struct TrimmedVocabulary {
    std::set<std::string> words;
    std::size_t min_count = 1;
    std::string unk_token{kUnkToken};
};

// Word <-> index map. Index 0 is reserved for padding and never assigned.
class Tokenizer {
public:
    Tokenizer() = default;

    // Indices are assigned by descending frequency, ties broken by first occurrence.
    static Tokenizer fit(const CleanCorpus& corpus);
    static Tokenizer load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    std::optional<std::int32_t> index_of(std::string_view word) const;
    std::optional<std::string_view> word_at(std::int64_t index) const;

    // Number of words + 1 (padding).
    std::size_t vocab_size() const { return index_to_word_.size() + 1; }
    std::size_t word_count() const { return index_to_word_.size(); }

    friend bool operator==(const Tokenizer&, const Tokenizer&) = default;

private:
    std::map<std::string, std::int32_t, std::less<>> word_to_index_;
    std::vector<std::string> index_to_word_;  // index_to_word_[i - 1] is the word for index i
};

enum class Truncation { keep_head, keep_tail };

// Row-major (rows x length) integer matrix of token indices.
struct VectorizedDataset {
    std::vector<std::int32_t> inputs;
    std::size_t rows = 0;
    std::size_t length = 0;
    std::size_t vocab_size = 0;

    std::span<const std::int32_t> row(std::size_t r) const { return {inputs.data() + r * length, length}; }
    void save(const std::filesystem::path& path) const;
    static VectorizedDataset load(const std::filesystem::path& path);

    friend bool operator==(const VectorizedDataset&, const VectorizedDataset&) = default;
};

// Y is row-major B x L x vocab_size, 0/1 entries.
struct LabeledBatch {
    std::vector<std::int32_t> X;
    std::vector<std::uint8_t> Y;
    std::size_t batch = 0;
    std::size_t length = 0;
    std::size_t vocab_size = 0;
};

RawDocument load_document(const std::filesystem::path& path);
// Newline-separated lines; a trailing newline does not add an empty line.
std::vector<std::string> document_lines(const RawDocument& doc);

// Cleans one line; exposed for the stub embedder, which tokenises with the same rules.
std::string standardize_sentence(std::string_view line);
CleanCorpus standardize(const RawDocument& doc);
// Drops empty sentences; the default pipeline keeps them.
CleanCorpus prune_empty(const CleanCorpus& corpus);

struct TrimResult {
    TrimmedVocabulary vocabulary;
    CleanCorpus corpus;
};
TrimResult trim_vocabulary(const CleanCorpus& corpus, std::size_t min_count);

struct DatasetSplit {
    CleanCorpus test;
    CleanCorpus train;
    CleanCorpus validation;
};
DatasetSplit split_dataset(const CleanCorpus& corpus, std::size_t test_n, std::size_t train_n, std::size_t val_n);

VectorizedDataset encode(const Tokenizer& tok, const CleanCorpus& corpus, std::size_t length,
                         Truncation truncation = Truncation::keep_head);

std::vector<std::uint8_t> one_hot_labels(std::span<const std::int32_t> X, std::size_t vocab_size);

// Streams shuffled (X, Y) batches. The final partial batch is dropped. Each epoch reshuffles
// the row order with a generator derived from (shuffle_seed, epoch), so two streams with the
// same seed yield identical sequences.
class BatchStream {
public:
    BatchStream(const VectorizedDataset& data, std::size_t batch_size, std::uint64_t shuffle_seed,
                bool shuffle = true);

    std::size_t batches_per_epoch() const { return data_->rows / batch_size_; }
    std::size_t batch_size() const { return batch_size_; }
    std::size_t length() const { return data_->length; }
    std::size_t vocab_size() const { return data_->vocab_size; }
    std::size_t epoch() const { return epoch_; }

    // Starts the next epoch (reshuffles). Called implicitly on first use.
    void begin_epoch();
    // Returns false once the epoch is exhausted; call begin_epoch() to continue.
    bool next(LabeledBatch& out);

private:
    const VectorizedDataset* data_;
    std::size_t batch_size_;
    std::uint64_t seed_;
    bool shuffle_;
    std::size_t epoch_ = 0;
    std::size_t cursor_ = 0;
    bool started_ = false;
    std::vector<std::size_t> order_;
};

void save_corpus(const CleanCorpus& corpus, const std::filesystem::path& path);
CleanCorpus load_corpus(const std::filesystem::path& path);

}  // namespace semcom
