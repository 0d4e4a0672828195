#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "semcom/model.hpp"
#include "semcom/rng.hpp"

namespace semcom {

struct ChannelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// i.i.d. N(0, sigma^2) entries.
Eigen::RowVectorXd awgn_sample(double sigma, std::size_t n, Rng& rng);

// U Gaussian interferers of equal power received over flat fading.
struct RfiSpec {
    std::size_t U = 0;
    double power = 10.0;  // watts; variance of each interference sample
    std::size_t KL = 0;
};

struct SlotInterference {
    std::uint64_t slot = 0;
    std::vector<double> g;               // fading coefficient per interferer, constant over the slot
    std::vector<Eigen::RowVectorXd> v;   // interference vector per interferer, length KL
    Eigen::RowVectorXd total;            // sum_u g[u] * v[u]
};

// Draws every quantity for (seed, slot) from per-interferer streams keyed by (seed, slot, u):
// g_u ~ N(0, 1) and v_u ~ N(0, power I). The "Rayleigh" coefficient is a real N(0, 1) scalar.
SlotInterference total_rfi(const RfiSpec& spec, std::uint64_t slot, std::uint64_t seed);

// y = x + total + n, with total and n broadcast over the rows of x.
template <class T>
Mat<T> apply_channel(const Mat<T>& x, const Eigen::RowVectorXd& interference, const RowVec<T>& noise);

// A read-only evaluation view of a trained model whose forward pass adds the slot's total
// interference to the (B x KL) symbols after the channel encoder's reshape and before the
// frozen channel layer. The wrapped model is never modified.
template <class T>
class InjectedView {
public:
    InjectedView(const DeepSC<T>& model, const SlotInterference& interference);

    // Replaces the injected bias for the next slot.
    void set_interference(const SlotInterference& interference);

    Mat<T> forward(std::span<const std::int32_t> tokens, std::size_t batch,
                   const ChannelNoise& noise = ChannelNoise::frozen()) const;

    const DeepSC<T>& model() const { return *model_; }
    const RowVec<T>& injected() const { return rfi_; }

private:
    const DeepSC<T>* model_;
    RowVec<T> rfi_;
};

template <class T>
InjectedView<T> inject_rfi(const DeepSC<T>& model, const SlotInterference& interference) {
    return InjectedView<T>(model, interference);
}

}  // namespace semcom
