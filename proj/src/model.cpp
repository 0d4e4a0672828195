#include "semcom/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <string>

#include "semcom/channel.hpp"

namespace semcom {

void ModelConfig::validate() const {
    if (K == 0 || H == 0 || V == 0 || E == 0 || L == 0 || vocab_size == 0 || transformer_layers == 0) {
        throw ModelError("model config: every dimension must be >= 1");
    }
    if (head_dim == 0 && E % H != 0) {
        throw ModelError("model config: embedding width E=" + std::to_string(E) +
                         " is not divisible by head count H=" + std::to_string(H));
    }
    if (sigma < 0 || awgn_bias_variance < 0) {
        throw ModelError("model config: sigma and awgn_bias_variance must be >= 0");
    }
    if (dropout < 0 || dropout >= 1) {
        throw ModelError("model config: dropout must lie in [0, 1)");
    }
}

ModelConfig narrow_config(std::size_t vocab_size) {
    ModelConfig c;
    c.K = 8;
    c.H = 10;
    c.V = 32;
    c.E = 32;
    c.L = 30;
    c.vocab_size = vocab_size;
    c.head_dim = c.E / c.H;
    return c;
}

ModelConfig wide_config(std::size_t vocab_size) {
    ModelConfig c = narrow_config(vocab_size);
    c.E = 64;
    c.head_dim = c.E / c.H;
    return c;
}

template <class T>
DeepSC<T> DeepSC<T>::build(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    DeepSC m;
    m.cfg_ = cfg;
    const auto vocab = static_cast<Eigen::Index>(cfg.vocab_size);
    const auto E = static_cast<Eigen::Index>(cfg.E);
    auto rng = make_rng(seed, {stream::kInit});

    m.embedding_ = {"embedding", "embedding", Mat<T>(vocab, E), {}};
    std::uniform_real_distribution<double> uniform(-0.05, 0.05);
    for (Eigen::Index i = 0; i < m.embedding_.value.size(); ++i) {
        m.embedding_.value.data()[i] = static_cast<T>(uniform(rng));
    }
    m.embedding_.zero_grad();

    for (std::size_t i = 0; i < cfg.transformer_layers; ++i) {
        m.encoder_.emplace_back("encoder" + std::to_string(i), "semantic_encoder", cfg.E, cfg.H,
                                cfg.attention_head_dim(), cfg.V, false);
        m.encoder_.back().init(rng);
    }
    m.ce1_ = Dense<T>("channel_encoder.dense0", "channel_encoder", cfg.E, cfg.hidden_width());
    m.ce2_ = Dense<T>("channel_encoder.dense1", "channel_encoder", cfg.hidden_width(), cfg.K);
    m.ce1_.init(rng);
    m.ce2_.init(rng);

    auto bias_rng = make_rng(seed, {stream::kAwgnBias});
    m.awgn_bias_ = awgn_sample(std::sqrt(cfg.awgn_bias_variance), cfg.symbols(), bias_rng).cast<T>();

    m.cd1_ = Dense<T>("channel_decoder.dense0", "channel_decoder", cfg.K, cfg.hidden_width());
    m.cd2_ = Dense<T>("channel_decoder.dense1", "channel_decoder", cfg.hidden_width(), cfg.E);
    m.cd1_.init(rng);
    m.cd2_.init(rng);
    for (std::size_t i = 0; i < cfg.transformer_layers; ++i) {
        m.decoder_.emplace_back("decoder" + std::to_string(i), "semantic_decoder", cfg.E, cfg.H,
                                cfg.attention_head_dim(), cfg.V, true);
        m.decoder_.back().init(rng);
    }
    m.head_ = Dense<T>("head", "head", cfg.E, cfg.vocab_size);
    m.head_.init(rng);
    return m;
}

template <class T>
void DeepSC<T>::check_tokens(std::span<const std::int32_t> tokens, std::size_t batch) const {
    if (tokens.size() != batch * cfg_.L) {
        throw ModelError("input has " + std::to_string(tokens.size()) + " tokens, expected batch " +
                         std::to_string(batch) + " x L " + std::to_string(cfg_.L));
    }
    for (auto t : tokens) {
        if (t < 0 || static_cast<std::size_t>(t) >= cfg_.vocab_size) {
            throw ModelError("token index " + std::to_string(t) + " outside [0, " + std::to_string(cfg_.vocab_size) + ")");
        }
    }
}

template <class T>
Mat<T> DeepSC<T>::positional(std::size_t batch) const {
    const auto L = static_cast<Eigen::Index>(cfg_.L);
    const auto E = static_cast<Eigen::Index>(cfg_.E);
    Mat<T> pe(static_cast<Eigen::Index>(batch) * L, E);
    for (Eigen::Index pos = 0; pos < L; ++pos) {
        for (Eigen::Index i = 0; i < E; ++i) {
            const double angle = static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(2 * (i / 2)) / static_cast<double>(E));
            const T value = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
            for (std::size_t b = 0; b < batch; ++b) {
                pe(static_cast<Eigen::Index>(b) * L + pos, i) = value;
            }
        }
    }
    return pe;
}

template <class T>
Mat<T> DeepSC<T>::embed(std::span<const std::int32_t> tokens, std::size_t batch) const {
    Mat<T> x(static_cast<Eigen::Index>(tokens.size()), static_cast<Eigen::Index>(cfg_.E));
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        x.row(static_cast<Eigen::Index>(i)) = embedding_.value.row(tokens[i]);
    }
    if (cfg_.use_positional_encoding) {
        x += positional(batch);
    }
    return x;
}

namespace {

template <class T>
void relu_inplace(Mat<T>& x) {
    x = x.cwiseMax(T(0));
}

template <class T>
void relu_backward(Mat<T>& d, const Mat<T>& activated) {
    d = (activated.array() > T(0)).select(d, T(0));
}

// (B*L) x K  <->  B x KL: identical row-major storage.
template <class T>
Mat<T> reshape(const Mat<T>& x, Eigen::Index rows, Eigen::Index cols) {
    return Eigen::Map<const Mat<T>>(x.data(), rows, cols);
}

}  // namespace

template <class T>
Mat<T> DeepSC<T>::encode_to_symbols(std::span<const std::int32_t> tokens, std::size_t batch) const {
    check_tokens(tokens, batch);
    Mat<T> x = embed(tokens, batch);
    for (const auto& block : encoder_) {
        x = block.forward(x, batch, cfg_.L, nullptr);
    }
    Mat<T> h = ce1_.forward(x);
    relu_inplace(h);
    Mat<T> s = ce2_.forward(h);
    relu_inplace(s);
    return reshape(s, static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(cfg_.symbols()));
}

template <class T>
Mat<T> DeepSC<T>::decode_symbols(const Mat<T>& received) const {
    if (static_cast<std::size_t>(received.cols()) != cfg_.symbols()) {
        throw ModelError("received symbols have width " + std::to_string(received.cols()) + ", expected KL " +
                         std::to_string(cfg_.symbols()));
    }
    const std::size_t batch = static_cast<std::size_t>(received.rows());
    const auto positions = static_cast<Eigen::Index>(batch * cfg_.L);
    Mat<T> y = reshape(received, positions, static_cast<Eigen::Index>(cfg_.K));
    Mat<T> h = cd1_.forward(y);
    relu_inplace(h);
    Mat<T> x = cd2_.forward(h);
    relu_inplace(x);
    for (const auto& block : decoder_) {
        x = block.forward(x, batch, cfg_.L, nullptr);
    }
    return softmax_rows<T>(head_.forward(x));
}

template <class T>
RowVec<T> DeepSC<T>::channel_bias(const ChannelNoise& noise) const {
    if (noise.kind == ChannelNoise::Kind::frozen_bias) {
        return awgn_bias_;
    }
    auto rng = make_rng(noise.seed, {stream::kNoise});
    return awgn_sample(cfg_.sigma, cfg_.symbols(), rng).cast<T>();
}

template <class T>
Mat<T> DeepSC<T>::forward(std::span<const std::int32_t> tokens, std::size_t batch, const ChannelNoise& noise) const {
    Mat<T> received = encode_to_symbols(tokens, batch);
    received.rowwise() += channel_bias(noise);
    return decode_symbols(received);
}

template <class T>
Mat<T> DeepSC<T>::awgn_kernel() const {
    return Mat<T>::Identity(static_cast<Eigen::Index>(cfg_.symbols()), static_cast<Eigen::Index>(cfg_.symbols()));
}

template <class T>
Mat<T> DeepSC<T>::forward_train(std::span<const std::int32_t> tokens, std::size_t batch, const RowVec<T>& bias,
                                Cache& cache, const TrainContext<T>* ctx) const {
    check_tokens(tokens, batch);
    const std::size_t L = cfg_.L;
    cache.tokens.assign(tokens.begin(), tokens.end());
    cache.batch = batch;
    cache.encoder.resize(encoder_.size());
    cache.decoder.resize(decoder_.size());

    Mat<T> x = embed(tokens, batch);
    for (std::size_t i = 0; i < encoder_.size(); ++i) {
        x = encoder_[i].forward(x, batch, L, &cache.encoder[i], ctx);
    }
    cache.encoded = x;
    cache.ce1 = ce1_.forward(cache.encoded);
    relu_inplace(cache.ce1);
    cache.ce2 = ce2_.forward(cache.ce1);
    relu_inplace(cache.ce2);

    Mat<T> sent = reshape(cache.ce2, static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(cfg_.symbols()));
    sent.rowwise() += bias;
    cache.received = reshape(sent, static_cast<Eigen::Index>(batch * L), static_cast<Eigen::Index>(cfg_.K));

    cache.cd1 = cd1_.forward(cache.received);
    relu_inplace(cache.cd1);
    cache.cd2 = cd2_.forward(cache.cd1);
    relu_inplace(cache.cd2);
    x = cache.cd2;
    for (std::size_t i = 0; i < decoder_.size(); ++i) {
        x = decoder_[i].forward(x, batch, L, &cache.decoder[i], ctx);
    }
    cache.decoded = x;
    return head_.forward(cache.decoded);
}

template <class T>
void DeepSC<T>::backward(const Mat<T>& dlogits, const Cache& cache) {
    const std::size_t batch = cache.batch;
    const std::size_t L = cfg_.L;

    Mat<T> d = head_.backward(cache.decoded, dlogits);
    for (std::size_t i = decoder_.size(); i-- > 0;) {
        d = decoder_[i].backward(d, batch, L, cache.decoder[i]);
    }
    relu_backward(d, cache.cd2);
    d = cd2_.backward(cache.cd1, d);
    relu_backward(d, cache.cd1);
    // The channel layer has an identity kernel and a frozen bias: gradient passes through.
    d = cd1_.backward(cache.received, d);
    relu_backward(d, cache.ce2);
    d = ce2_.backward(cache.ce1, d);
    relu_backward(d, cache.ce1);
    d = ce1_.backward(cache.encoded, d);
    for (std::size_t i = encoder_.size(); i-- > 0;) {
        d = encoder_[i].backward(d, batch, L, cache.encoder[i]);
    }
    for (std::size_t i = 0; i < cache.tokens.size(); ++i) {
        embedding_.grad.row(cache.tokens[i]) += d.row(static_cast<Eigen::Index>(i));
    }
}

template <class T>
std::vector<Param<T>*> DeepSC<T>::trainable() {
    std::vector<Param<T>*> out{&embedding_};
    for (auto& b : encoder_) b.collect(out);
    ce1_.collect(out);
    ce2_.collect(out);
    cd1_.collect(out);
    cd2_.collect(out);
    for (auto& b : decoder_) b.collect(out);
    head_.collect(out);
    return out;
}

template <class T>
std::vector<const Param<T>*> DeepSC<T>::trainable() const {
    std::vector<const Param<T>*> out{&embedding_};
    for (const auto& b : encoder_) b.collect(out);
    ce1_.collect(out);
    ce2_.collect(out);
    cd1_.collect(out);
    cd2_.collect(out);
    for (const auto& b : decoder_) b.collect(out);
    head_.collect(out);
    return out;
}

template <class T>
void DeepSC<T>::zero_grad() {
    for (auto* p : trainable()) {
        p->zero_grad();
    }
}

template <class T>
std::uint64_t DeepSC<T>::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const T* data, Eigen::Index n) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < static_cast<std::size_t>(n) * sizeof(T); ++i) {
            h = (h ^ bytes[i]) * 0x100000001b3ULL;
        }
    };
    for (const auto* p : trainable()) {
        mix(p->value.data(), p->value.size());
    }
    mix(awgn_bias_.data(), awgn_bias_.size());
    return h;
}

// ---------------------------------------------------------------------------- checkpoints
//
// Little-endian layout:
//   "DSCK" | u32 version | config block | u64 epochs_trained | u64 tensor count |
//   per tensor: u32 name length, name bytes, u64 rows, u64 cols, u32 scalar bytes, payload

namespace {

constexpr char kMagic[4] = {'D', 'S', 'C', 'K'};

template <class V>
void put(std::ofstream& out, const V& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class V>
V get(std::ifstream& in, const std::filesystem::path& path) {
    V v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) {
        throw ModelError("checkpoint '" + path.string() + "' is truncated or corrupt");
    }
    return v;
}

template <class T>
void put_tensor(std::ofstream& out, const std::string& name, const T* data, Eigen::Index rows, Eigen::Index cols) {
    put(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put(out, static_cast<std::uint64_t>(rows));
    put(out, static_cast<std::uint64_t>(cols));
    put(out, static_cast<std::uint32_t>(sizeof(T)));
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(rows * cols * static_cast<Eigen::Index>(sizeof(T))));
}

template <class T>
void get_tensor(std::ifstream& in, const std::filesystem::path& path, const std::string& expected_name, T* data,
                Eigen::Index rows, Eigen::Index cols) {
    const auto len = get<std::uint32_t>(in, path);
    if (len > 4096) {
        throw ModelError("checkpoint '" + path.string() + "' is corrupt (tensor name length " + std::to_string(len) + ")");
    }
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto r = get<std::uint64_t>(in, path);
    const auto c = get<std::uint64_t>(in, path);
    const auto width = get<std::uint32_t>(in, path);
    if (!in || name != expected_name || r != static_cast<std::uint64_t>(rows) || c != static_cast<std::uint64_t>(cols) ||
        width != sizeof(T)) {
        throw ModelError("checkpoint '" + path.string() + "': tensor '" + name + "' does not match expected '" +
                         expected_name + "' " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(rows * cols * static_cast<Eigen::Index>(sizeof(T))));
    if (!in) {
        throw ModelError("checkpoint '" + path.string() + "' is truncated");
    }
}

}  // namespace

template <class T>
void save_model(const DeepSC<T>& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw ModelError("cannot write checkpoint '" + path.string() + "'");
    }
    const ModelConfig& c = model.cfg_;
    out.write(kMagic, sizeof kMagic);
    put(out, kCheckpointVersion);
    for (std::uint64_t v : {c.K, c.H, c.V, c.E, c.L, c.vocab_size, c.transformer_layers, c.channel_hidden, c.head_dim}) {
        put(out, v);
    }
    put(out, static_cast<std::uint8_t>(c.use_positional_encoding));
    put(out, c.sigma);
    put(out, c.awgn_bias_variance);
    put(out, c.dropout);
    put(out, model.epochs_trained);

    const auto params = model.trainable();
    put(out, static_cast<std::uint64_t>(params.size() + 1));
    for (const auto* p : params) {
        put_tensor(out, p->name, p->value.data(), p->value.rows(), p->value.cols());
    }
    put_tensor(out, std::string("channel.bias"), model.awgn_bias_.data(), 1, model.awgn_bias_.size());
    if (!out) {
        throw ModelError("write failed for checkpoint '" + path.string() + "'");
    }
}

template <class T>
DeepSC<T> load_model(const std::filesystem::path& path, std::optional<std::size_t> expected_vocab) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ModelError("cannot open checkpoint '" + path.string() + "'");
    }
    char magic[4] = {};
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
        throw ModelError("'" + path.string() + "' is not a checkpoint");
    }
    const auto version = get<std::uint32_t>(in, path);
    if (version != kCheckpointVersion) {
        throw ModelError("checkpoint '" + path.string() + "' has format version " + std::to_string(version) +
                         ", expected " + std::to_string(kCheckpointVersion));
    }
    ModelConfig c;
    for (std::size_t* field :
         {&c.K, &c.H, &c.V, &c.E, &c.L, &c.vocab_size, &c.transformer_layers, &c.channel_hidden, &c.head_dim}) {
        *field = static_cast<std::size_t>(get<std::uint64_t>(in, path));
    }
    c.use_positional_encoding = get<std::uint8_t>(in, path) != 0;
    c.sigma = get<double>(in, path);
    c.awgn_bias_variance = get<double>(in, path);
    c.dropout = get<double>(in, path);
    if (expected_vocab && *expected_vocab != c.vocab_size) {
        throw ModelError("checkpoint '" + path.string() + "' was built for vocab_size " + std::to_string(c.vocab_size) +
                         ", expected " + std::to_string(*expected_vocab));
    }
    try {
        c.validate();
    } catch (const ModelError& e) {
        throw ModelError("checkpoint '" + path.string() + "': " + e.what());
    }

    DeepSC<T> model = DeepSC<T>::build(c, 0);
    model.epochs_trained = get<std::uint64_t>(in, path);
    auto params = model.trainable();
    const auto count = get<std::uint64_t>(in, path);
    if (count != params.size() + 1) {
        throw ModelError("checkpoint '" + path.string() + "' holds " + std::to_string(count) + " tensors, expected " +
                         std::to_string(params.size() + 1));
    }
    for (auto* p : params) {
        get_tensor(in, path, p->name, p->value.data(), p->value.rows(), p->value.cols());
    }
    get_tensor(in, path, "channel.bias", model.awgn_bias_.data(), 1, model.awgn_bias_.size());
    if (in.peek() != std::char_traits<char>::eof()) {
        throw ModelError("checkpoint '" + path.string() + "' has trailing bytes");
    }
    return model;
}

template class DeepSC<float>;
template class DeepSC<double>;
template void save_model<float>(const DeepSC<float>&, const std::filesystem::path&);
template void save_model<double>(const DeepSC<double>&, const std::filesystem::path&);
template DeepSC<float> load_model<float>(const std::filesystem::path&, std::optional<std::size_t>);
template DeepSC<double> load_model<double>(const std::filesystem::path&, std::optional<std::size_t>);

}  // namespace semcom
