#include "semcom/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <csignal>
#include <sys/wait.h>
#include <unistd.h>

#include "semcom/rng.hpp"

namespace semcom {

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<std::string_view> split_words(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        std::size_t j = i;
        while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

std::string shortest(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\n\r") == std::string_view::npos) {
        return std::string(s);
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------- embedders

HashProjectionEmbedder::HashProjectionEmbedder(std::size_t dimension, std::uint64_t salt)
    : dim_(dimension), salt_(salt) {
    if (dim_ == 0) {
        throw EvaluationError("embedder dimension must be >= 1");
    }
}

Eigen::VectorXd HashProjectionEmbedder::embed_const(std::string_view sentence) const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim_));
    const std::string clean = standardize_sentence(sentence);
    for (std::string_view w : split_words(clean)) {
        Rng rng{derive_seed(salt_, {fnv1a(w)})};
        std::normal_distribution<double> normal(0.0, 1.0);
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            v(i) += normal(rng);
        }
    }
    return v;
}

Eigen::VectorXd HashProjectionEmbedder::embed(std::string_view sentence) { return embed_const(sentence); }

ProcessEmbedder::ProcessEmbedder(std::vector<std::string> argv) {
    if (argv.empty()) {
        throw EvaluationError("embedder command is empty");
    }
    int in_pipe[2];
    int out_pipe[2];
    if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0) {
        throw EvaluationError("cannot create pipes for embedder process");
    }
    const pid_t pid = fork();
    if (pid < 0) {
        throw EvaluationError("cannot fork embedder process");
    }
    if (pid == 0) {
        dup2(in_pipe[0], STDIN_FILENO);
        dup2(out_pipe[1], STDOUT_FILENO);
        close(in_pipe[0]);
        close(in_pipe[1]);
        close(out_pipe[0]);
        close(out_pipe[1]);
        std::vector<char*> args;
        for (auto& a : argv) args.push_back(a.data());
        args.push_back(nullptr);
        execvp(args[0], args.data());
        _exit(127);
    }
    close(in_pipe[0]);
    close(out_pipe[1]);
    pid_ = pid;
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
    std::signal(SIGPIPE, SIG_IGN);
}

ProcessEmbedder::~ProcessEmbedder() {
    if (to_child_ >= 0) close(to_child_);
    if (from_child_ >= 0) close(from_child_);
    if (pid_ > 0) {
        int status = 0;
        waitpid(pid_, &status, 0);
    }
}

Eigen::VectorXd ProcessEmbedder::embed(std::string_view sentence) {
    std::string line(sentence);
    std::replace(line.begin(), line.end(), '\n', ' ');
    line += '\n';
    for (std::size_t off = 0; off < line.size();) {
        const ssize_t n = write(to_child_, line.data() + off, line.size() - off);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) throw EvaluationError("embedder process closed its input");
        off += static_cast<std::size_t>(n);
    }
    std::size_t nl;
    while ((nl = pending_.find('\n')) == std::string::npos) {
        char buf[4096];
        const ssize_t n = read(from_child_, buf, sizeof buf);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) throw EvaluationError("embedder process exited before replying");
        pending_.append(buf, static_cast<std::size_t>(n));
    }
    const std::string reply = pending_.substr(0, nl);
    pending_.erase(0, nl + 1);

    std::vector<double> values;
    std::istringstream in(reply);
    double x;
    while (in >> x) values.push_back(x);
    if (values.empty()) {
        throw EvaluationError("embedder returned an empty vector");
    }
    if (dim_ == 0) {
        dim_ = values.size();
    } else if (values.size() != dim_) {
        throw EvaluationError("embedder dimension changed from " + std::to_string(dim_) + " to " +
                              std::to_string(values.size()));
    }
    return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

// ---------------------------------------------------------------------------- prediction

std::optional<std::string> word_for_index(const Tokenizer& tok, std::int64_t index) {
    if (auto w = tok.word_at(index)) {
        return std::string(*w);
    }
    return std::nullopt;
}

std::string predict_from_probabilities(const Tokenizer& tok, const Mat<float>& probabilities) {
    std::string out;
    for (Eigen::Index r = 0; r < probabilities.rows(); ++r) {
        Eigen::Index best = 0;
        for (Eigen::Index j = 1; j < probabilities.cols(); ++j) {
            if (probabilities(r, j) > probabilities(r, best)) best = j;
        }
        const auto word = tok.word_at(best);
        if (!word) break;
        if (!out.empty()) out += ' ';
        out += *word;
    }
    return out;
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size()) {
        throw EvaluationError("embedding dimensions differ");
    }
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0 || nb == 0) {
        return 0;
    }
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

double sentence_similarity(SentenceEmbedder& embedder, std::string_view s, std::string_view s_hat) {
    return cosine_similarity(embedder.embed(s), embedder.embed(s_hat));
}

PssEstimate estimate_pss(std::vector<double> similarities, double eta_min) {
    if (similarities.empty()) {
        throw EvaluationError("estimate_pss: no similarities");
    }
    const auto hits = std::count_if(similarities.begin(), similarities.end(), [&](double e) { return e >= eta_min; });
    PssEstimate est;
    est.eta_min = eta_min;
    est.N = similarities.size();
    est.p = static_cast<double>(hits) / static_cast<double>(similarities.size());
    est.similarities = std::move(similarities);
    return est;
}

std::string truncate_words(std::string_view sentence, std::size_t max_words) {
    const auto words = split_words(sentence);
    if (words.size() <= max_words) {
        return std::string(sentence);
    }
    std::string out;
    for (std::size_t i = 0; i < max_words; ++i) {
        if (i) out += ' ';
        out += words[i];
    }
    return out;
}

// ---------------------------------------------------------------------------- sweep

void SweepResult::save_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw EvaluationError("cannot write '" + path.string() + "'");
    }
    out << "U,eta_min,N,p,seed\n";
    for (const auto& pt : points) {
        out << pt.U << ',' << shortest(pt.estimate.eta_min) << ',' << pt.estimate.N << ',' << shortest(pt.estimate.p)
            << ',' << seed << '\n';
    }
}

void SweepResult::save_trace_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw EvaluationError("cannot write '" + path.string() + "'");
    }
    out << "U,slot,eta,recovered_sentence\n";
    for (const auto& pt : points) {
        for (std::size_t t = 0; t < pt.estimate.similarities.size(); ++t) {
            out << pt.U << ',' << t + 1 << ',' << shortest(pt.estimate.similarities[t]) << ','
                << csv_field(t < pt.recovered.size() ? pt.recovered[t] : "") << '\n';
        }
    }
}

SweepResult evaluate_sweep(const Model& model, const Tokenizer& tok, const VectorizedDataset& test_inputs,
                           const std::vector<std::string>& raw_sentences, const std::vector<std::size_t>& U_grid,
                           double eta_min, std::size_t N, std::uint64_t seed, SentenceEmbedder& embedder,
                           const SweepOptions& options) {
    const ModelConfig& cfg = model.config();
    if (U_grid.empty()) {
        throw EvaluationError("U grid is empty");
    }
    if (raw_sentences.size() != test_inputs.rows) {
        throw EvaluationError("raw sentences (" + std::to_string(raw_sentences.size()) +
                              ") are not aligned with test inputs (" + std::to_string(test_inputs.rows) + ")");
    }
    if (N == 0 || N > test_inputs.rows) {
        throw EvaluationError("N=" + std::to_string(N) + " must lie in [1, " + std::to_string(test_inputs.rows) + "]");
    }
    if (test_inputs.length != cfg.L || test_inputs.vocab_size != cfg.vocab_size) {
        throw EvaluationError("test inputs do not match the model's (L, vocab_size)");
    }

    std::vector<Eigen::VectorXd> references(N);
    for (std::size_t t = 0; t < N; ++t) {
        references[t] = embedder.embed(truncate_words(raw_sentences[t], cfg.L));
    }

    const std::size_t workers = std::max<std::size_t>(1, std::min(options.parallelism, N));
    SweepResult result;
    result.seed = seed;
    for (std::size_t U : U_grid) {
        const RfiSpec spec{U, options.power, cfg.symbols()};
        std::vector<std::string> recovered(N);
        std::atomic<std::size_t> next{0};
        auto work = [&] {
            InjectedView<float> view(model, total_rfi(spec, 1, seed));
            for (std::size_t t; (t = next.fetch_add(1)) < N;) {
                view.set_interference(total_rfi(spec, t + 1, seed));
                const auto row = std::span<const std::int32_t>(test_inputs.inputs).subspan(t * cfg.L, cfg.L);
                recovered[t] = predict_from_probabilities(tok, view.forward(row, 1, options.noise));
            }
        };
        if (workers == 1) {
            work();
        } else {
            std::vector<std::thread> pool;
            for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
            for (auto& th : pool) th.join();
        }

        std::vector<double> eta(N);
        for (std::size_t t = 0; t < N; ++t) {
            eta[t] = cosine_similarity(references[t], embedder.embed(recovered[t]));
        }
        result.points.push_back({U, estimate_pss(std::move(eta), eta_min), std::move(recovered)});
    }
    return result;
}

}  // namespace semcom
