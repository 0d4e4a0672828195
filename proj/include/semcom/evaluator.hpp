#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "semcom/channel.hpp"
#include "semcom/corpus.hpp"
#include "semcom/model.hpp"

namespace semcom {

struct EvaluationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class SentenceEmbedder {
public:
    virtual ~SentenceEmbedder() = default;
    virtual Eigen::VectorXd embed(std::string_view sentence) = 0;
    virtual std::size_t dimension() const = 0;
};

// Bag-of-words through a fixed random projection: every standardized word maps to a
// Gaussian vector seeded by a hash of the word, and a sentence is the sum of its words.
// Sentences with no words in common land near-orthogonal.
class HashProjectionEmbedder final : public SentenceEmbedder {
public:
    explicit HashProjectionEmbedder(std::size_t dimension = 384, std::uint64_t salt = 0);

    Eigen::VectorXd embed(std::string_view sentence) override;
    Eigen::VectorXd embed_const(std::string_view sentence) const;
    std::size_t dimension() const override { return dim_; }

private:
    std::size_t dim_;
    std::uint64_t salt_;
};

// Talks to an external encoder process over pipes: one sentence per line in, one line of
// whitespace-separated floats out. The process is started on construction and reaped on destruction.
class ProcessEmbedder final : public SentenceEmbedder {
public:
    explicit ProcessEmbedder(std::vector<std::string> argv);
    ~ProcessEmbedder() override;
    ProcessEmbedder(const ProcessEmbedder&) = delete;
    ProcessEmbedder& operator=(const ProcessEmbedder&) = delete;

    Eigen::VectorXd embed(std::string_view sentence) override;
    std::size_t dimension() const override { return dim_; }

private:
    int pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string pending_;
    std::size_t dim_ = 0;
};

std::optional<std::string> word_for_index(const Tokenizer& tok, std::int64_t index);

// Greedy recovery of one encoded row (1 x L): argmax per position, ties to the lowest index,
// stop at the first index without a word.
std::string predict_from_probabilities(const Tokenizer& tok, const Mat<float>& probabilities);

template <class View>
std::string predict_sentence(const View& view, const Tokenizer& tok, std::span<const std::int32_t> source) {
    return predict_from_probabilities(tok, view.forward(source, 1));
}

// Cosine similarity; 0 when either vector has zero norm.
double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);
double sentence_similarity(SentenceEmbedder& embedder, std::string_view s, std::string_view s_hat);

struct PssEstimate {
    double eta_min = 0.1;
    std::size_t N = 0;
    double p = 0;
    std::vector<double> similarities;
};

PssEstimate estimate_pss(std::vector<double> similarities, double eta_min);

// First max_words whitespace-separated words of a raw sentence, joined by single spaces.
// Sentences with at most max_words words are returned unchanged.
std::string truncate_words(std::string_view sentence, std::size_t max_words);

struct SweepOptions {
    double power = 10.0;
    ChannelNoise noise = ChannelNoise::frozen();
    std::size_t parallelism = 1;  // worker threads for the per-slot forward passes
};

struct SweepPoint {
    std::size_t U = 0;
    PssEstimate estimate;
    std::vector<std::string> recovered;  // per slot
};

struct SweepResult {
    std::uint64_t seed = 0;
    std::vector<SweepPoint> points;

    // Columns: U,eta_min,N,p,seed
    void save_csv(const std::filesystem::path& path) const;
    // Columns: U,slot,eta,recovered_sentence
    void save_trace_csv(const std::filesystem::path& path) const;
};

// For each U and each slot t in 1..N: draw the slot's interference, run the t-th test row through
// the injected view, and score the recovered sentence against the t-th raw sentence (truncated to L words).
SweepResult evaluate_sweep(const Model& model, const Tokenizer& tok, const VectorizedDataset& test_inputs,
                           const std::vector<std::string>& raw_sentences, const std::vector<std::size_t>& U_grid,
                           double eta_min, std::size_t N, std::uint64_t seed, SentenceEmbedder& embedder,
                           const SweepOptions& options = {});

}  // namespace semcom
