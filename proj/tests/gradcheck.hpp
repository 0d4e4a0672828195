#pragma once

#include <cmath>
#include <map>
#include <string>

#include "semcom/corpus.hpp"
#include "semcom/model.hpp"
#include "semcom/trainer.hpp"

namespace gradcheck {

using namespace semcom;

struct GroupError {
    double diff2 = 0;
    double analytic2 = 0;
    double numeric2 = 0;
    double rel() const { return std::sqrt(diff2) / std::max(1e-12, std::sqrt(analytic2) + std::sqrt(numeric2)); }
};

inline const std::size_t B = 2;

inline std::vector<std::int32_t> inputs(const ModelConfig& cfg) {
    std::vector<std::int32_t> x{1, 2, 3, 0, 4, 5, 6, 2};
    x.resize(B * cfg.L, 0);
    return x;
}

// A row of zeros entering a bias-free Dense puts the next ReLU exactly on its kink, where
// central differences see half a slope. Such points are skipped rather than checked.
inline bool off_kinks(const ModelConfig& cfg, std::uint64_t seed) {
    const auto m = DeepSC<double>::build(cfg, seed);
    typename DeepSC<double>::Cache c;
    m.forward_train(inputs(cfg), B, m.awgn_bias(), c);
    for (const Mat<double>* a : {&c.ce1, &c.cd1, &c.cd2}) {
        for (Eigen::Index r = 0; r < a->rows(); ++r) {
            if (a->row(r).isZero(0)) return false;
        }
    }
    return true;
}

inline std::map<std::string, GroupError> check_model(const ModelConfig& cfg, std::uint64_t seed, bool mask) {
    DeepSC<double> m = DeepSC<double>::build(cfg, seed);
    const auto x = inputs(cfg);
    const auto y = one_hot_labels(x, cfg.vocab_size);
    const RowVec<double> bias = m.awgn_bias();

    auto loss = [&](const DeepSC<double>& model) {
        typename DeepSC<double>::Cache c;
        return cross_entropy<double>(model.forward_train(x, B, bias, c), y, mask, nullptr).loss;
    };

    typename DeepSC<double>::Cache cache;
    Mat<double> dlogits;
    cross_entropy<double>(m.forward_train(x, B, bias, cache), y, mask, &dlogits);
    m.zero_grad();
    m.backward(dlogits, cache);

    std::map<std::string, GroupError> out;
    const double h = 1e-6;
    for (auto* p : m.trainable()) {
        auto& e = out[p->group];
        for (Eigen::Index i = 0; i < p->value.size(); ++i) {
            double& w = p->value.data()[i];
            const double w0 = w;
            w = w0 + h;
            const double up = loss(m);
            w = w0 - h;
            const double down = loss(m);
            w = w0;
            const double numeric = (up - down) / (2 * h);
            const double analytic = p->grad.data()[i];
            e.diff2 += (numeric - analytic) * (numeric - analytic);
            e.analytic2 += analytic * analytic;
            e.numeric2 += numeric * numeric;
        }
    }
    return out;
}

inline ModelConfig tiny() {
    ModelConfig c;
    c.K = 2;
    c.H = 2;
    c.V = 6;
    c.E = 4;
    c.L = 4;
    c.vocab_size = 7;
    c.transformer_layers = 2;
    c.awgn_bias_variance = 0.01;
    return c;
}

}  // namespace gradcheck
