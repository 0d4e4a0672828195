#include "semcom/layers.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace semcom {

template <class T>
void he_normal(Mat<T>& w, std::size_t fan_in, Rng& rng) {
    // Keras he_normal: truncated normal whose stddev is corrected for the truncation.
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in)) / 0.87962566103423978;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        double z = normal(rng);
        while (std::abs(z) > 2.0) {
            z = normal(rng);
        }
        w.data()[i] = static_cast<T>(z * stddev);
    }
}

template <class T>
Mat<T> softmax_rows(const Mat<T>& logits) {
    Mat<T> out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const T m = logits.row(r).maxCoeff();
        out.row(r) = (logits.row(r).array() - m).exp();
        out.row(r) /= out.row(r).sum();
    }
    return out;
}

// ---------------------------------------------------------------------------- Dense

template <class T>
Dense<T>::Dense(const std::string& name, const std::string& group, std::size_t in, std::size_t out) {
    W = {name + ".kernel", group, Mat<T>::Zero(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out)), {}};
    b = {name + ".bias", group, Mat<T>::Zero(1, static_cast<Eigen::Index>(out)), {}};
    W.zero_grad();
    b.zero_grad();
}

template <class T>
void Dense<T>::init(Rng& rng, std::size_t fan_in) {
    he_normal(W.value, fan_in == 0 ? in() : fan_in, rng);
    b.value.setZero();
}

template <class T>
Mat<T> Dense<T>::forward(const Mat<T>& x) const {
    Mat<T> y = x * W.value;
    y.rowwise() += b.value.row(0);
    return y;
}

template <class T>
Mat<T> Dense<T>::backward(const Mat<T>& x, const Mat<T>& dy) {
    W.grad.noalias() += x.transpose() * dy;
    b.grad.row(0) += dy.colwise().sum();
    return dy * W.value.transpose();
}

template <class T>
void Dense<T>::collect(std::vector<Param<T>*>& out) {
    out.push_back(&W);
    out.push_back(&b);
}

template <class T>
void Dense<T>::collect(std::vector<const Param<T>*>& out) const {
    out.push_back(&W);
    out.push_back(&b);
}

// ---------------------------------------------------------------------------- LayerNorm

template <class T>
LayerNorm<T>::LayerNorm(const std::string& name, const std::string& group, std::size_t width) {
    const auto n = static_cast<Eigen::Index>(width);
    gamma = {name + ".gamma", group, Mat<T>::Ones(1, n), {}};
    beta = {name + ".beta", group, Mat<T>::Zero(1, n), {}};
    gamma.zero_grad();
    beta.zero_grad();
}

template <class T>
Mat<T> LayerNorm<T>::forward(const Mat<T>& x, Cache* cache) const {
    const Eigen::Index n = x.rows();
    const T width = static_cast<T>(x.cols());
    Mat<T> xhat(n, x.cols());
    Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const T mean = x.row(r).sum() / width;
        const auto centered = (x.row(r).array() - mean).eval();
        const T var = centered.square().sum() / width;
        inv_std(r) = T(1) / std::sqrt(var + epsilon);
        xhat.row(r) = centered * inv_std(r);
    }
    Mat<T> y = (xhat.array().rowwise() * gamma.value.row(0).array()).matrix();
    y.rowwise() += beta.value.row(0);
    if (cache != nullptr) {
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
    }
    return y;
}

template <class T>
Mat<T> LayerNorm<T>::backward(const Mat<T>& dy, const Cache& cache) {
    gamma.grad.row(0) += (dy.array() * cache.xhat.array()).matrix().colwise().sum();
    beta.grad.row(0) += dy.colwise().sum();

    const T width = static_cast<T>(dy.cols());
    Mat<T> dxhat = (dy.array().rowwise() * gamma.value.row(0).array()).matrix();
    Mat<T> dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        const T mean_d = dxhat.row(r).sum() / width;
        const T mean_dx = dxhat.row(r).dot(cache.xhat.row(r)) / width;
        dx.row(r) = cache.inv_std(r) * (dxhat.row(r).array() - mean_d - cache.xhat.row(r).array() * mean_dx).matrix();
    }
    return dx;
}

template <class T>
void LayerNorm<T>::collect(std::vector<Param<T>*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
}

template <class T>
void LayerNorm<T>::collect(std::vector<const Param<T>*>& out) const {
    out.push_back(&gamma);
    out.push_back(&beta);
}

// ---------------------------------------------------------------------------- SelfAttention

template <class T>
SelfAttention<T>::SelfAttention(const std::string& name, const std::string& group, std::size_t width,
                                std::size_t heads_, std::size_t head_dim_, bool causal_)
    : query(name + ".query", group, width, heads_ * head_dim_),
      key(name + ".key", group, width, heads_ * head_dim_),
      value(name + ".value", group, width, heads_ * head_dim_),
      output(name + ".output", group, heads_ * head_dim_, width),
      heads(heads_),
      head_dim(head_dim_),
      causal(causal_) {}

template <class T>
void SelfAttention<T>::init(Rng& rng) {
    // Keras computes fans of the 3-D (width, heads, head_dim) projection kernels as width * heads.
    const std::size_t width = query.in();
    query.init(rng, width * heads);
    key.init(rng, width * heads);
    value.init(rng, width * heads);
    output.init(rng);
}

template <class T>
Mat<T> SelfAttention<T>::forward(const Mat<T>& x, std::size_t batch, std::size_t length, Cache* cache) const {
    const auto L = static_cast<Eigen::Index>(length);
    const auto dh = static_cast<Eigen::Index>(head_dim);
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));

    Mat<T> q = query.forward(x);
    Mat<T> k = key.forward(x);
    Mat<T> v = value.forward(x);
    Mat<T> context(x.rows(), q.cols());
    std::vector<Mat<T>> probs;
    if (cache != nullptr) {
        probs.reserve(batch * heads);
    }

    Mat<T> p(L, L);
    for (std::size_t b = 0; b < batch; ++b) {
        const Eigen::Index r0 = static_cast<Eigen::Index>(b) * L;
        for (std::size_t h = 0; h < heads; ++h) {
            const Eigen::Index c0 = static_cast<Eigen::Index>(h) * dh;
            p.noalias() = q.block(r0, c0, L, dh) * k.block(r0, c0, L, dh).transpose();
            p *= scale;
            for (Eigen::Index i = 0; i < L; ++i) {
                const Eigen::Index visible = causal ? i + 1 : L;
                const T m = p.row(i).head(visible).maxCoeff();
                T sum = 0;
                for (Eigen::Index j = 0; j < visible; ++j) {
                    p(i, j) = std::exp(p(i, j) - m);
                    sum += p(i, j);
                }
                p.row(i).head(visible) /= sum;
                for (Eigen::Index j = visible; j < L; ++j) {
                    p(i, j) = 0;
                }
            }
            context.block(r0, c0, L, dh).noalias() = p * v.block(r0, c0, L, dh);
            if (cache != nullptr) {
                probs.push_back(p);
            }
        }
    }

    Mat<T> y = output.forward(context);
    if (cache != nullptr) {
        cache->x = x;
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->context = std::move(context);
        cache->probs = std::move(probs);
    }
    return y;
}

template <class T>
Mat<T> SelfAttention<T>::backward(const Mat<T>& dy, std::size_t batch, std::size_t length, const Cache& cache) {
    const auto L = static_cast<Eigen::Index>(length);
    const auto dh = static_cast<Eigen::Index>(head_dim);
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));

    const Mat<T> dcontext = output.backward(cache.context, dy);
    Mat<T> dq(dy.rows(), dcontext.cols());
    Mat<T> dk(dy.rows(), dcontext.cols());
    Mat<T> dv(dy.rows(), dcontext.cols());
    Mat<T> dp(L, L);
    Mat<T> ds(L, L);
    for (std::size_t b = 0; b < batch; ++b) {
        const Eigen::Index r0 = static_cast<Eigen::Index>(b) * L;
        for (std::size_t h = 0; h < heads; ++h) {
            const Eigen::Index c0 = static_cast<Eigen::Index>(h) * dh;
            const Mat<T>& p = cache.probs[b * heads + h];
            const auto dctx = dcontext.block(r0, c0, L, dh);
            dp.noalias() = dctx * cache.v.block(r0, c0, L, dh).transpose();
            dv.block(r0, c0, L, dh).noalias() = p.transpose() * dctx;
            for (Eigen::Index i = 0; i < L; ++i) {
                const T dot = p.row(i).dot(dp.row(i));
                ds.row(i) = (p.row(i).array() * (dp.row(i).array() - dot)).matrix();
            }
            ds *= scale;
            dq.block(r0, c0, L, dh).noalias() = ds * cache.k.block(r0, c0, L, dh);
            dk.block(r0, c0, L, dh).noalias() = ds.transpose() * cache.q.block(r0, c0, L, dh);
        }
    }
    Mat<T> dx = query.backward(cache.x, dq);
    dx += key.backward(cache.x, dk);
    dx += value.backward(cache.x, dv);
    return dx;
}

template <class T>
void SelfAttention<T>::collect(std::vector<Param<T>*>& out) {
    query.collect(out);
    key.collect(out);
    value.collect(out);
    output.collect(out);
}

template <class T>
void SelfAttention<T>::collect(std::vector<const Param<T>*>& out) const {
    query.collect(out);
    key.collect(out);
    value.collect(out);
    output.collect(out);
}

// ---------------------------------------------------------------------------- TransformerBlock

namespace {

template <class T>
Mat<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, const TrainContext<T>& ctx) {
    std::bernoulli_distribution keep(1.0 - static_cast<double>(ctx.dropout));
    const T scale = T(1) / (T(1) - ctx.dropout);
    Mat<T> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = keep(*ctx.rng) ? scale : T(0);
    }
    return m;
}

}  // namespace

template <class T>
TransformerBlock<T>::TransformerBlock(const std::string& name, const std::string& group, std::size_t width,
                                      std::size_t heads, std::size_t head_dim, std::size_t hidden, bool causal)
    : attention(name + ".attention", group, width, heads, head_dim, causal),
      norm1(name + ".norm1", group, width),
      ff1(name + ".ff1", group, width, hidden),
      ff2(name + ".ff2", group, hidden, width),
      norm2(name + ".norm2", group, width) {}

template <class T>
void TransformerBlock<T>::init(Rng& rng) {
    attention.init(rng);
    ff1.init(rng);
    ff2.init(rng);
}

template <class T>
Mat<T> TransformerBlock<T>::forward(const Mat<T>& x, std::size_t batch, std::size_t length, Cache* cache,
                                    const TrainContext<T>* ctx) const {
    const bool drop = ctx != nullptr && ctx->active();
    Mat<T> a = attention.forward(x, batch, length, cache != nullptr ? &cache->attn : nullptr);
    Mat<T> drop1, drop2;
    if (drop) {
        drop1 = dropout_mask(a.rows(), a.cols(), *ctx);
        a.array() *= drop1.array();
    }
    a += x;
    Mat<T> h1 = norm1.forward(a, cache != nullptr ? &cache->norm1 : nullptr);
    Mat<T> f1 = ff1.forward(h1);
    Mat<T> f2 = ff2.forward(f1);
    if (drop) {
        drop2 = dropout_mask(f2.rows(), f2.cols(), *ctx);
        f2.array() *= drop2.array();
    }
    f2 += h1;
    Mat<T> y = norm2.forward(f2, cache != nullptr ? &cache->norm2 : nullptr);
    if (cache != nullptr) {
        cache->h1 = std::move(h1);
        cache->f1 = std::move(f1);
        cache->drop1 = std::move(drop1);
        cache->drop2 = std::move(drop2);
    }
    return y;
}

template <class T>
Mat<T> TransformerBlock<T>::backward(const Mat<T>& dy, std::size_t batch, std::size_t length, const Cache& cache) {
    const Mat<T> d2 = norm2.backward(dy, cache.norm2);
    Mat<T> df2 = d2;
    if (cache.drop2.size() != 0) {
        df2.array() *= cache.drop2.array();
    }
    const Mat<T> df1 = ff2.backward(cache.f1, df2);
    Mat<T> dh1 = ff1.backward(cache.h1, df1);
    dh1 += d2;

    const Mat<T> d1 = norm1.backward(dh1, cache.norm1);
    Mat<T> da = d1;
    if (cache.drop1.size() != 0) {
        da.array() *= cache.drop1.array();
    }
    Mat<T> dx = attention.backward(da, batch, length, cache.attn);
    dx += d1;
    return dx;
}

template <class T>
void TransformerBlock<T>::collect(std::vector<Param<T>*>& out) {
    attention.collect(out);
    norm1.collect(out);
    ff1.collect(out);
    ff2.collect(out);
    norm2.collect(out);
}

template <class T>
void TransformerBlock<T>::collect(std::vector<const Param<T>*>& out) const {
    attention.collect(out);
    norm1.collect(out);
    ff1.collect(out);
    ff2.collect(out);
    norm2.collect(out);
}

template void he_normal<float>(Mat<float>&, std::size_t, Rng&);
template void he_normal<double>(Mat<double>&, std::size_t, Rng&);
template Mat<float> softmax_rows<float>(const Mat<float>&);
template Mat<double> softmax_rows<double>(const Mat<double>&);
template class Dense<float>;
template class Dense<double>;
template class LayerNorm<float>;
template class LayerNorm<double>;
template class SelfAttention<float>;
template class SelfAttention<double>;
template class TransformerBlock<float>;
template class TransformerBlock<double>;

}  // namespace semcom
