#include "semcom/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

namespace semcom {

void TrainConfig::validate() const {
    if (!(learning_rate >= 0)) {
        throw TrainingError("learning_rate must be >= 0");
    }
    if (max_epochs == 0 || batch_size == 0) {
        throw TrainingError("max_epochs and batch_size must be >= 1");
    }
    if (!(lr_reduce_factor > 0 && lr_reduce_factor < 1)) {
        throw TrainingError("lr_reduce_factor must lie in (0, 1)");
    }
    if (lr_patience == 0 || early_stop_patience == 0) {
        throw TrainingError("patiences must be >= 1");
    }
    if (clip_norm < 0) {
        throw TrainingError("clip_norm must be >= 0");
    }
}

TrainConfig finetune_defaults() {
    TrainConfig cfg;
    cfg.learning_rate = 0.0001;
    cfg.max_epochs = 50;
    return cfg;
}

double TrainHistory::best_val_loss() const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : epochs) {
        best = std::min(best, e.val_loss);
    }
    return best;
}

void TrainHistory::save_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw TrainingError("cannot write history '" + path.string() + "'");
    }
    out << "epoch,train_loss,train_acc,val_loss,val_acc,lr\n";
    out << std::setprecision(9);
    for (const auto& e : epochs) {
        out << e.epoch << ',' << e.train_loss << ',' << e.train_acc << ',' << e.val_loss << ',' << e.val_acc << ','
            << e.lr << '\n';
    }
}

// ---------------------------------------------------------------------------- PlateauSchedule

PlateauSchedule::PlateauSchedule(double initial_lr, double factor, std::size_t lr_patience, std::size_t stop_patience)
    : initial_(initial_lr),
      factor_(factor),
      lr_patience_(lr_patience),
      stop_patience_(stop_patience),
      best_(std::numeric_limits<double>::infinity()),
      lr_(initial_lr) {}

PlateauSchedule::Step PlateauSchedule::update(double monitored) {
    Step s;
    if (monitored < best_) {
        best_ = monitored;
        lr_wait_ = 0;
        stop_wait_ = 0;
        s.improved = true;
        return s;
    }
    if (++lr_wait_ >= lr_patience_) {
        ++reductions_;
        lr_ = initial_ * std::pow(factor_, static_cast<double>(reductions_));
        lr_wait_ = 0;
        s.reduced = true;
    }
    if (++stop_wait_ >= stop_patience_) {
        s.stop = true;
    }
    return s;
}

// ---------------------------------------------------------------------------- Adam

template <class T>
void Adam<T>::step(const std::vector<Param<T>*>& params, double lr) {
    if (moments_.empty()) {
        moments_.reserve(params.size());
        for (const auto* p : params) {
            moments_.emplace_back(Mat<T>::Zero(p->value.rows(), p->value.cols()),
                                  Mat<T>::Zero(p->value.rows(), p->value.cols()));
        }
    }
    ++t_;
    const double t = static_cast<double>(t_);
    const T lr_t = static_cast<T>(lr * std::sqrt(1.0 - std::pow(beta2_, t)) / (1.0 - std::pow(beta1_, t)));
    const T b1 = static_cast<T>(beta1_);
    const T b2 = static_cast<T>(beta2_);
    const T eps = static_cast<T>(epsilon_);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& [m, v] = moments_[i];
        const Mat<T>& g = params[i]->grad;
        m = b1 * m + (T(1) - b1) * g;
        v = b2 * v + (T(1) - b2) * g.cwiseProduct(g);
        params[i]->value.array() -= lr_t * m.array() / (v.array().sqrt() + eps);
    }
}

template class Adam<float>;
template class Adam<double>;

// ---------------------------------------------------------------------------- metrics

namespace {

template <class S>
Eigen::Index argmax_row(const S& row) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < row.size(); ++j) {
        if (row(j) > row(best)) {
            best = j;
        }
    }
    return best;
}

Eigen::Index label_index(std::span<const std::uint8_t> labels, std::size_t position, std::size_t vocab) {
    const auto* row = labels.data() + position * vocab;
    for (std::size_t v = 0; v < vocab; ++v) {
        if (row[v] != 0) {
            return static_cast<Eigen::Index>(v);
        }
    }
    return 0;
}

}  // namespace

template <class T>
BatchMetrics cross_entropy(const Mat<T>& logits, std::span<const std::uint8_t> labels, bool mask_padding,
                           Mat<T>* dlogits) {
    const auto n = static_cast<std::size_t>(logits.rows());
    const auto vocab = static_cast<std::size_t>(logits.cols());
    if (labels.size() != n * vocab) {
        throw TrainingError("cross_entropy: label tensor size " + std::to_string(labels.size()) +
                            " does not match logits " + std::to_string(n) + "x" + std::to_string(vocab));
    }
    if (dlogits != nullptr) {
        dlogits->setZero(logits.rows(), logits.cols());
    }
    std::size_t counted = 0;
    std::size_t correct = 0;
    double loss = 0;
    std::vector<std::size_t> kept;
    kept.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Index target = label_index(labels, i, vocab);
        if (mask_padding && target == 0) {
            continue;
        }
        kept.push_back(i);
        const auto row = logits.row(static_cast<Eigen::Index>(i));
        const T m = row.maxCoeff();
        const T lse = m + std::log((row.array() - m).exp().sum());
        loss += static_cast<double>(lse - row(target));
        correct += argmax_row(row) == target ? 1 : 0;
        ++counted;
    }
    if (counted == 0) {
        return {};
    }
    if (dlogits != nullptr) {
        const T scale = T(1) / static_cast<T>(counted);
        for (std::size_t i : kept) {
            const auto r = static_cast<Eigen::Index>(i);
            const T m = logits.row(r).maxCoeff();
            auto p = (logits.row(r).array() - m).exp().eval();
            p /= p.sum();
            dlogits->row(r) = p.matrix() * scale;
            (*dlogits)(r, label_index(labels, i, vocab)) -= scale;
        }
    }
    return {loss / static_cast<double>(counted), static_cast<double>(correct) / static_cast<double>(counted)};
}

template BatchMetrics cross_entropy<float>(const Mat<float>&, std::span<const std::uint8_t>, bool, Mat<float>*);
template BatchMetrics cross_entropy<double>(const Mat<double>&, std::span<const std::uint8_t>, bool, Mat<double>*);

double accuracy(const Mat<float>& predictions, std::span<const std::uint8_t> labels) {
    const auto n = static_cast<std::size_t>(predictions.rows());
    const auto vocab = static_cast<std::size_t>(predictions.cols());
    if (labels.size() != n * vocab) {
        throw TrainingError("accuracy: label tensor size does not match predictions");
    }
    if (n == 0) {
        return 0;
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        correct += argmax_row(predictions.row(static_cast<Eigen::Index>(i))) == label_index(labels, i, vocab) ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------- loop

namespace {

constexpr std::uint64_t kValidationNoise = 1ULL << 40;

RowVec<float> step_bias(const Model& model, const TrainConfig& cfg, std::uint64_t counter) {
    if (cfg.noise == ChannelNoise::Kind::frozen_bias) {
        return model.awgn_bias();
    }
    return model.channel_bias(ChannelNoise::resampled(derive_seed(cfg.seed, {stream::kNoise, counter})));
}

void clip_gradients(const std::vector<Param<float>*>& params, double max_norm) {
    double sq = 0;
    for (const auto* p : params) {
        sq += static_cast<double>(p->grad.squaredNorm());
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const auto scale = static_cast<float>(max_norm / norm);
        for (auto* p : params) {
            p->grad *= scale;
        }
    }
}

}  // namespace

BatchMetrics evaluate(const Model& model, BatchStream& stream, const TrainConfig& cfg, std::size_t epoch) {
    stream.begin_epoch();
    LabeledBatch batch;
    Model::Cache cache;
    double loss = 0;
    double acc = 0;
    std::size_t batches = 0;
    while (stream.next(batch)) {
        const auto bias = step_bias(model, cfg, kValidationNoise + epoch * 1000003ULL + batches);
        const Mat<float> logits = model.forward_train(batch.X, batch.batch, bias, cache);
        const BatchMetrics m = cross_entropy<float>(logits, batch.Y, cfg.mask_padding, nullptr);
        loss += m.loss;
        acc += m.accuracy;
        ++batches;
    }
    if (batches == 0) {
        throw TrainingError("validation stream produced no batches");
    }
    return {loss / static_cast<double>(batches), acc / static_cast<double>(batches)};
}

BatchMetrics train_step(Model& model, Adam<float>& optimizer, const LabeledBatch& batch, const TrainConfig& cfg,
                        double lr, std::uint64_t step_index) {
    Model::Cache cache;
    Rng dropout_rng = make_rng(cfg.seed, {stream::kDropout, step_index});
    const TrainContext<float> ctx{&dropout_rng, static_cast<float>(model.config().dropout)};

    const Mat<float> logits = model.forward_train(batch.X, batch.batch, step_bias(model, cfg, step_index), cache, &ctx);
    Mat<float> dlogits;
    const BatchMetrics m = cross_entropy<float>(logits, batch.Y, cfg.mask_padding, &dlogits);
    if (!std::isfinite(m.loss)) {
        return m;
    }
    model.zero_grad();
    model.backward(dlogits, cache);
    auto params = model.trainable();
    if (cfg.clip_norm > 0) {
        clip_gradients(params, cfg.clip_norm);
    }
    optimizer.step(params, lr);
    return m;
}

namespace {

TrainResult run_loop(const Model& start, BatchStream& train_stream, BatchStream& val_stream, const TrainConfig& cfg,
                     std::ostream* log, const char* label) {
    cfg.validate();
    if (train_stream.length() != start.config().L || train_stream.vocab_size() != start.config().vocab_size ||
        val_stream.length() != start.config().L || val_stream.vocab_size() != start.config().vocab_size) {
        throw TrainingError("stream shape (L, vocab_size) does not match the model");
    }

    Model model = start;
    Adam<float> optimizer(cfg.beta1, cfg.beta2, cfg.epsilon);
    PlateauSchedule schedule(cfg.learning_rate, cfg.lr_reduce_factor, cfg.lr_patience, cfg.early_stop_patience);
    TrainResult result{model, {}, model};
    LabeledBatch batch;
    std::uint64_t step = 0;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const double lr = schedule.lr();
        train_stream.begin_epoch();
        double loss_sum = 0;
        double acc_sum = 0;
        std::size_t batches = 0;
        while (train_stream.next(batch)) {
            const BatchMetrics m = train_step(model, optimizer, batch, cfg, lr, step);
            if (!std::isfinite(m.loss)) {
                throw TrainingError(std::string(label) + ": non-finite loss at epoch " + std::to_string(epoch) +
                                    ", step " + std::to_string(batches + 1));
            }
            loss_sum += m.loss;
            acc_sum += m.accuracy;
            ++batches;
            ++step;
        }
        if (batches == 0) {
            throw TrainingError("training stream produced no batches");
        }
        ++model.epochs_trained;

        const BatchMetrics val = evaluate(model, val_stream, cfg, epoch);
        if (!std::isfinite(val.loss)) {
            throw TrainingError(std::string(label) + ": non-finite validation loss at epoch " + std::to_string(epoch));
        }
        EpochRecord rec{epoch, loss_sum / static_cast<double>(batches), acc_sum / static_cast<double>(batches),
                        val.loss, val.accuracy, lr};
        result.history.epochs.push_back(rec);

        const auto decision = schedule.update(val.loss);
        if (decision.improved) {
            result.model = model;
            result.history.best_epoch = epoch;
            if (!cfg.checkpoint_path.empty()) {
                save_model(model, cfg.checkpoint_path);
            }
        }
        if (log != nullptr) {
            std::ostringstream line;
            line << std::setprecision(6) << label << " epoch " << epoch << "/" << cfg.max_epochs
                 << " loss=" << rec.train_loss << " acc=" << rec.train_acc << " val_loss=" << rec.val_loss
                 << " val_acc=" << rec.val_acc << " lr=" << rec.lr;
            if (decision.improved) line << " [checkpoint]";
            if (decision.reduced) line << " [lr -> " << schedule.lr() << "]";
            if (decision.stop) line << " [early stop]";
            *log << line.str() << '\n';
        }
        if (decision.stop) {
            result.history.early_stopped = true;
            break;
        }
    }
    result.model.epochs_trained = model.epochs_trained;
    result.last = model;
    return result;
}

}  // namespace

TrainResult train(const Model& initial, BatchStream& train_stream, BatchStream& val_stream, const TrainConfig& cfg,
                  std::ostream* log) {
    return run_loop(initial, train_stream, val_stream, cfg, log, "train");
}

TrainResult finetune(const Model& trained, BatchStream& train_stream, BatchStream& val_stream, const TrainConfig& cfg,
                     std::ostream* log) {
    if (trained.epochs_trained == 0) {
        throw TrainingError("finetune: model has not been trained");
    }
    return run_loop(trained, train_stream, val_stream, cfg, log, "finetune");
}

}  // namespace semcom
