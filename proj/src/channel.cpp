#include "semcom/channel.hpp"

#include <cmath>
#include <random>
#include <string>

namespace semcom {

Eigen::RowVectorXd awgn_sample(double sigma, std::size_t n, Rng& rng) {
    if (sigma < 0) {
        throw ChannelError("awgn_sample: sigma must be >= 0");
    }
    Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(n));
    if (sigma == 0) {
        return out;
    }
    std::normal_distribution<double> normal(0.0, sigma);
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        out(i) = normal(rng);
    }
    return out;
}

SlotInterference total_rfi(const RfiSpec& spec, std::uint64_t slot, std::uint64_t seed) {
    if (spec.power <= 0) {
        throw ChannelError("total_rfi: interferer power must be > 0");
    }
    const auto n = static_cast<Eigen::Index>(spec.KL);
    SlotInterference out;
    out.slot = slot;
    out.total = Eigen::RowVectorXd::Zero(n);
    out.g.reserve(spec.U);
    out.v.reserve(spec.U);
    const double amplitude = std::sqrt(spec.power);
    for (std::size_t u = 0; u < spec.U; ++u) {
        auto rng = make_rng(seed, {stream::kRfi, slot, u});
        std::normal_distribution<double> normal(0.0, 1.0);
        const double g = normal(rng);
        Eigen::RowVectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            v(i) = amplitude * normal(rng);
        }
        out.total += g * v;
        out.g.push_back(g);
        out.v.push_back(std::move(v));
    }
    return out;
}

template <class T>
Mat<T> apply_channel(const Mat<T>& x, const Eigen::RowVectorXd& interference, const RowVec<T>& noise) {
    if (x.cols() != interference.size() || x.cols() != noise.size()) {
        throw ChannelError("apply_channel: symbol length " + std::to_string(x.cols()) + " vs interference " +
                           std::to_string(interference.size()) + " vs noise " + std::to_string(noise.size()));
    }
    Mat<T> y = x;
    y.rowwise() += interference.cast<T>();
    y.rowwise() += noise;
    return y;
}

template <class T>
InjectedView<T>::InjectedView(const DeepSC<T>& model, const SlotInterference& interference) : model_(&model) {
    set_interference(interference);
}

template <class T>
void InjectedView<T>::set_interference(const SlotInterference& interference) {
    if (static_cast<std::size_t>(interference.total.size()) != model_->config().symbols()) {
        throw ChannelError("inject_rfi: interference length " + std::to_string(interference.total.size()) +
                           " does not match model KL " + std::to_string(model_->config().symbols()));
    }
    rfi_ = interference.total.cast<T>();
}

template <class T>
Mat<T> InjectedView<T>::forward(std::span<const std::int32_t> tokens, std::size_t batch,
                                const ChannelNoise& noise) const {
    const Mat<T> symbols = model_->encode_to_symbols(tokens, batch);
    Mat<T> received = symbols;
    received.rowwise() += rfi_;
    received.rowwise() += model_->channel_bias(noise);
    return model_->decode_symbols(received);
}

template Mat<float> apply_channel<float>(const Mat<float>&, const Eigen::RowVectorXd&, const RowVec<float>&);
template Mat<double> apply_channel<double>(const Mat<double>&, const Eigen::RowVectorXd&, const RowVec<double>&);
template class InjectedView<float>;
template class InjectedView<double>;

}  // namespace semcom
