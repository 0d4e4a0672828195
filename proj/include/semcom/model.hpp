#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "semcom/layers.hpp"

namespace semcom {

struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ModelConfig {
    std::size_t K = 8;    // semantic symbols per word
    std::size_t H = 10;   // attention heads
    std::size_t V = 32;   // feedforward hidden width
    std::size_t E = 64;   // embedding width
    std::size_t L = 30;   // sentence length
    std::size_t vocab_size = 0;
    double sigma = 0.1;                 // channel noise stddev for resampled noise
    double awgn_bias_variance = 0.01;   // variance of the frozen channel-layer bias draw
    bool use_positional_encoding = false;
    std::size_t transformer_layers = 3;  // per stack
    std::size_t channel_hidden = 0;      // 0 means E
    std::size_t head_dim = 0;            // 0 means E / H, which must then divide exactly
    double dropout = 0.0;

    std::size_t symbols() const { return K * L; }
    std::size_t attention_head_dim() const { return head_dim == 0 ? E / H : head_dim; }
    std::size_t hidden_width() const { return channel_hidden == 0 ? E : channel_hidden; }
    // Throws ModelError on an invalid configuration.
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Published presets (K, H, V, E, L) = (8, 10, 32, 32, 30) and (8, 10, 32, 64, 30). H does not
// divide E, so they pin head_dim = floor(E / H) as keras_nlp does.
ModelConfig narrow_config(std::size_t vocab_size);
ModelConfig wide_config(std::size_t vocab_size);

// How the frozen channel layer perturbs symbols in a forward pass.
struct ChannelNoise {
    enum class Kind { frozen_bias, resampled };
    Kind kind = Kind::frozen_bias;
    std::uint64_t seed = 0;

    static ChannelNoise frozen() { return {}; }
    static ChannelNoise resampled(std::uint64_t seed) { return {Kind::resampled, seed}; }
};

// The DeepSC transceiver:
//   embedding -> semantic encoder -> channel encoder (Dense+ReLU x2, width K) -> reshape (B, KL)
//   -> channel layer (identity kernel, frozen bias) -> reshape (B, L, K)
//   -> channel decoder (Dense+ReLU x2, width E) -> semantic decoder -> softmax head.
// Rows of every activation matrix are the (batch * length) token positions.
template <class T>
class DeepSC {
public:
    struct Cache {
        std::vector<std::int32_t> tokens;
        std::size_t batch = 0;
        std::vector<typename TransformerBlock<T>::Cache> encoder, decoder;
        Mat<T> encoded, ce1, ce2, received, cd1, cd2, decoded;
    };

    DeepSC() = default;
    static DeepSC build(const ModelConfig& cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }

    // Channel-encoder output reshaped to (B x KL). Entries are >= 0 (ReLU).
    Mat<T> encode_to_symbols(std::span<const std::int32_t> tokens, std::size_t batch) const;
    // Channel output (B x KL) -> per-position probabilities ((B*L) x vocab).
    Mat<T> decode_symbols(const Mat<T>& received) const;
    // Bias row added by the channel layer for the given noise mode.
    RowVec<T> channel_bias(const ChannelNoise& noise) const;
    // Full pipeline; rows of the result are probability distributions.
    Mat<T> forward(std::span<const std::int32_t> tokens, std::size_t batch,
                   const ChannelNoise& noise = ChannelNoise::frozen()) const;

    // Training pass: returns logits and fills the cache for backward().
    Mat<T> forward_train(std::span<const std::int32_t> tokens, std::size_t batch, const RowVec<T>& channel_bias,
                         Cache& cache, const TrainContext<T>* ctx = nullptr) const;
    // Accumulates gradients of every trainable parameter from dL/dlogits.
    void backward(const Mat<T>& dlogits, const Cache& cache);

    std::vector<Param<T>*> trainable();
    std::vector<const Param<T>*> trainable() const;
    void zero_grad();

    const RowVec<T>& awgn_bias() const { return awgn_bias_; }
    // Channel-layer kernel. Always the identity; stored implicitly.
    Mat<T> awgn_kernel() const;

    std::uint64_t epochs_trained = 0;

    // FNV-1a over every parameter's bytes, frozen channel bias included.
    std::uint64_t checksum() const;

private:
    Mat<T> embed(std::span<const std::int32_t> tokens, std::size_t batch) const;
    Mat<T> positional(std::size_t batch) const;
    void check_tokens(std::span<const std::int32_t> tokens, std::size_t batch) const;

    ModelConfig cfg_;
    Param<T> embedding_;
    std::vector<TransformerBlock<T>> encoder_;
    Dense<T> ce1_, ce2_;
    RowVec<T> awgn_bias_;
    Dense<T> cd1_, cd2_;
    std::vector<TransformerBlock<T>> decoder_;
    Dense<T> head_;

    template <class U>
    friend void save_model(const DeepSC<U>&, const std::filesystem::path&);
    template <class U>
    friend DeepSC<U> load_model(const std::filesystem::path&, std::optional<std::size_t>);
};

using Model = DeepSC<float>;

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void save_model(const DeepSC<T>& model, const std::filesystem::path& path);

// Rejects corrupt files, format-version mismatches, and (when given) a vocab_size mismatch.
template <class T>
DeepSC<T> load_model(const std::filesystem::path& path, std::optional<std::size_t> expected_vocab = std::nullopt);

}  // namespace semcom
