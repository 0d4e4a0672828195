#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "semcom/corpus.hpp"
#include "semcom/model.hpp"

namespace semcom {

struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    double learning_rate = 0.0002;
    std::size_t max_epochs = 100;
    std::size_t batch_size = 50;
    double lr_reduce_factor = 0.1;
    std::size_t lr_patience = 5;
    std::size_t early_stop_patience = 10;
    std::filesystem::path checkpoint_path;  // best-validation checkpoint; empty disables writing
    std::uint64_t seed = 0;

    ChannelNoise::Kind noise = ChannelNoise::Kind::frozen_bias;
    bool mask_padding = false;  // exclude padding positions from loss and accuracy
    double clip_norm = 0.0;     // global-norm gradient clipping; 0 disables

    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-7;

    void validate() const;
};

// Finetuning defaults: lr 0.0001, 50 epochs.
TrainConfig finetune_defaults();

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0;
    double train_acc = 0;
    double val_loss = 0;
    double val_acc = 0;
    double lr = 0;  // learning rate in effect during the epoch
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    bool early_stopped = false;

    double best_val_loss() const;
    // Columns: epoch,train_loss,train_acc,val_loss,val_acc,lr
    void save_csv(const std::filesystem::path& path) const;
};

// Learning-rate reduction and early stopping driven by the monitored validation loss.
// Improvement means a strict decrease below the best value seen so far.
class PlateauSchedule {
public:
    struct Step {
        bool improved = false;
        bool reduced = false;
        bool stop = false;
    };

    PlateauSchedule(double initial_lr, double factor, std::size_t lr_patience, std::size_t stop_patience);

    Step update(double monitored);
    double lr() const { return lr_; }
    std::size_t reductions() const { return reductions_; }

private:
    double initial_;
    double factor_;
    std::size_t lr_patience_;
    std::size_t stop_patience_;
    double best_;
    std::size_t lr_wait_ = 0;
    std::size_t stop_wait_ = 0;
    std::size_t reductions_ = 0;
    double lr_;
};

template <class T>
class Adam {
public:
    Adam(double beta1, double beta2, double epsilon) : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

    void step(const std::vector<Param<T>*>& params, double lr);
    std::size_t iterations() const { return t_; }

private:
    double beta1_, beta2_, epsilon_;
    std::size_t t_ = 0;
    std::vector<std::pair<Mat<T>, Mat<T>>> moments_;  // (m, v) per parameter, in call order
};

struct BatchMetrics {
    double loss = 0;
    double accuracy = 0;
};

// Mean categorical cross-entropy of softmax(logits) against one-hot labels, plus accuracy.
// When dlogits is given it receives dLoss/dlogits.
template <class T>
BatchMetrics cross_entropy(const Mat<T>& logits, std::span<const std::uint8_t> labels, bool mask_padding,
                           Mat<T>* dlogits);

// Fraction of positions whose prediction argmax equals the label argmax (ties -> lowest index).
double accuracy(const Mat<float>& predictions, std::span<const std::uint8_t> labels);

// Mean loss/accuracy over one pass of the stream, parameters untouched.
BatchMetrics evaluate(const Model& model, BatchStream& stream, const TrainConfig& cfg, std::size_t epoch);

// Runs one optimisation step on a batch; returns the batch metrics before the update.
BatchMetrics train_step(Model& model, Adam<float>& optimizer, const LabeledBatch& batch, const TrainConfig& cfg,
                        double lr, std::uint64_t step_index);

struct TrainResult {
    Model model;  // parameters of the best validation epoch
    TrainHistory history;
    Model last;   // parameters after the final completed epoch
};

// Adam over full passes of train_stream; validation after every epoch drives the plateau
// schedule. The channel layer stays frozen. Non-finite losses abort with the epoch and step.
TrainResult train(const Model& initial, BatchStream& train_stream, BatchStream& val_stream, const TrainConfig& cfg,
                  std::ostream* log = nullptr);

// Same loop, for a model that has already been trained.
TrainResult finetune(const Model& trained, BatchStream& train_stream, BatchStream& val_stream, const TrainConfig& cfg,
                     std::ostream* log = nullptr);

}  // namespace semcom
