#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "semcom/rng.hpp"

namespace semcom {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

template <class T>
struct Param {
    std::string name;
    std::string group;
    Mat<T> value;
    Mat<T> grad;

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// Truncated-normal He initialisation (stddev sqrt(2 / fan_in), redrawn beyond two stddevs).
template <class T>
void he_normal(Mat<T>& w, std::size_t fan_in, Rng& rng);

// Dropout state for a training forward pass; a null context or zero rate disables dropout.
template <class T>
struct TrainContext {
    Rng* rng = nullptr;
    T dropout = 0;

    bool active() const { return rng != nullptr && dropout > 0; }
};

// Fully-connected layer y = x W + b, no activation. Activations are applied by the caller.
template <class T>
class Dense {
public:
    Dense() = default;
    Dense(const std::string& name, const std::string& group, std::size_t in, std::size_t out);

    // fan_in defaults to the kernel's input width.
    void init(Rng& rng, std::size_t fan_in = 0);
    Mat<T> forward(const Mat<T>& x) const;
    // Accumulates parameter gradients and returns dL/dx.
    Mat<T> backward(const Mat<T>& x, const Mat<T>& dy);
    void collect(std::vector<Param<T>*>& out);
    void collect(std::vector<const Param<T>*>& out) const;

    std::size_t in() const { return static_cast<std::size_t>(W.value.rows()); }
    std::size_t out() const { return static_cast<std::size_t>(W.value.cols()); }

    Param<T> W;
    Param<T> b;
};

template <class T>
class LayerNorm {
public:
    struct Cache {
        Mat<T> xhat;
        Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std;
    };

    LayerNorm() = default;
    LayerNorm(const std::string& name, const std::string& group, std::size_t width);

    Mat<T> forward(const Mat<T>& x, Cache* cache) const;
    Mat<T> backward(const Mat<T>& dy, const Cache& cache);
    void collect(std::vector<Param<T>*>& out);
    void collect(std::vector<const Param<T>*>& out) const;

    Param<T> gamma;
    Param<T> beta;
    T epsilon = T(1e-5);
};

// Multi-head scaled dot-product self-attention over rows laid out as (batch * length) x width.
// Heads have head_dim columns each; the output projection maps heads * head_dim back to width.
template <class T>
class SelfAttention {
public:
    struct Cache {
        Mat<T> x, q, k, v, context;
        std::vector<Mat<T>> probs;  // one (length x length) matrix per (batch, head)
    };

    SelfAttention() = default;
    SelfAttention(const std::string& name, const std::string& group, std::size_t width, std::size_t heads,
                  std::size_t head_dim, bool causal);

    void init(Rng& rng);
    Mat<T> forward(const Mat<T>& x, std::size_t batch, std::size_t length, Cache* cache) const;
    Mat<T> backward(const Mat<T>& dy, std::size_t batch, std::size_t length, const Cache& cache);
    void collect(std::vector<Param<T>*>& out);
    void collect(std::vector<const Param<T>*>& out) const;

    Dense<T> query, key, value, output;
    std::size_t heads = 1;
    std::size_t head_dim = 1;
    bool causal = false;
};

// Post-norm Transformer block: x <- LN(x + attn(x)); x <- LN(x + W2(W1 x)) with a linear
// feedforward. With causal attention and no cross-attention it doubles as the decoder block.
template <class T>
class TransformerBlock {
public:
    struct Cache {
        typename SelfAttention<T>::Cache attn;
        typename LayerNorm<T>::Cache norm1, norm2;
        Mat<T> h1, f1;
        Mat<T> drop1, drop2;
    };

    TransformerBlock() = default;
    TransformerBlock(const std::string& name, const std::string& group, std::size_t width, std::size_t heads,
                     std::size_t head_dim, std::size_t hidden, bool causal);

    void init(Rng& rng);
    Mat<T> forward(const Mat<T>& x, std::size_t batch, std::size_t length, Cache* cache,
                   const TrainContext<T>* ctx = nullptr) const;
    Mat<T> backward(const Mat<T>& dy, std::size_t batch, std::size_t length, const Cache& cache);
    void collect(std::vector<Param<T>*>& out);
    void collect(std::vector<const Param<T>*>& out) const;

    SelfAttention<T> attention;
    LayerNorm<T> norm1;
    Dense<T> ff1, ff2;
    LayerNorm<T> norm2;
};

// Row-wise softmax, numerically stabilised.
template <class T>
Mat<T> softmax_rows(const Mat<T>& logits);

}  // namespace semcom
