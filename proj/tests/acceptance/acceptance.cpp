// Runs every acceptance criterion and prints one PASS/FAIL line per criterion.
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "../gradcheck.hpp"
#include "../oracles.hpp"
#include "../support.hpp"
#include "semcom/app.hpp"
#include "semcom/channel.hpp"
#include "semcom/evaluator.hpp"

using namespace semcom;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;
    std::ostringstream failures;

    void expect(bool ok, const std::string& what) {
        if (!ok) {
            failures << (pass ? "failed: " : "; ") << what;
            pass = false;
        }
    }
};

CleanCorpus corpus_of(const std::vector<std::string>& s) {
    CleanCorpus c;
    c.sentences = s;
    return c;
}

// ---------------------------------------------------------------- 1

void pipeline(Outcome& o) {
    std::mt19937_64 rng(101);
    std::size_t corpora = 0;
    for (int trial = 0; trial < 40; ++trial) {
        const auto sentences = oracle::random_corpus(rng, 1000);
        for (std::size_t mc : {1, 2, 3, 10, 100}) {
            const auto got = trim_vocabulary(corpus_of(sentences), mc);
            const auto want = oracle::trim(sentences, mc);
            o.expect(got.corpus.sentences == want.sentences, "trimmed corpus differs");
            o.expect(got.vocabulary.words == want.vocab, "trimmed vocabulary differs");

            if (std::all_of(want.sentences.begin(), want.sentences.end(), [](auto& s) { return s.empty(); })) continue;
            const Tokenizer tok = Tokenizer::fit(got.corpus);
            const auto index = oracle::tokenizer(want.sentences);
            o.expect(tok.vocab_size() == index.size(), "vocab_size differs");
            for (std::size_t i = 1; i < index.size() && i < tok.vocab_size(); ++i) {
                o.expect(tok.word_at(static_cast<std::int64_t>(i)) == std::optional<std::string_view>(index[i]),
                         "index " + std::to_string(i) + " differs");
            }
            const VectorizedDataset enc = encode(tok, got.corpus, 12);
            o.expect(enc.inputs == oracle::encode(index, want.sentences, 12), "encoding differs");

            // decode the rows that fit in L words
            for (std::size_t r = 0; r < enc.rows; ++r) {
                const auto& s = want.sentences[r];
                if (oracle::words(s).size() > 12) continue;
                std::vector<std::string> back;
                for (auto id : enc.row(r)) {
                    if (id == 0) break;
                    back.emplace_back(*tok.word_at(id));
                }
                o.expect(oracle::join(back) == s, "round trip of '" + s + "'");
            }
            ++corpora;
        }
    }
    o.detail << corpora << " corpora of <= 1000 words checked";
}

// ---------------------------------------------------------------- 2

void channel_statistics(Outcome& o) {
    Rng rng(derive_seed(2, {1}));
    const auto n = awgn_sample(0.1, 1'000'000, rng);
    const double v = oracle::variance(std::vector<double>(n.data(), n.data() + n.size()));
    o.expect(std::abs(v - 0.01) <= 0.05 * 0.01, "awgn variance " + std::to_string(v));
    o.detail << "awgn var " << v;

    // all 48 elements of every slot pooled
    for (std::size_t U : {1, 5, 50}) {
        std::vector<double> x;
        x.reserve(10'000 * 48);
        for (std::uint64_t t = 1; t <= 10'000; ++t) {
            const auto s = total_rfi(RfiSpec{U, 10.0, 48}, t, 77);
            x.insert(x.end(), s.total.data(), s.total.data() + s.total.size());
        }
        const double want = 10.0 * static_cast<double>(U);
        const double got = oracle::variance(x);
        o.expect(std::abs(got - want) <= 0.05 * want, "rfi U=" + std::to_string(U) + " var " + std::to_string(got));
        o.detail << ", U=" << U << " var " << got << " (want " << want << ")";
    }
}

// ---------------------------------------------------------------- 3

bool has_shape(const Mat<float>& m, std::size_t rows, std::size_t cols) {
    return static_cast<std::size_t>(m.rows()) == rows && static_cast<std::size_t>(m.cols()) == cols;
}

void architecture(Outcome& o) {
    std::mt19937_64 rng(303);
    std::uniform_int_distribution<std::size_t> small(1, 5);
    for (int trial = 0; trial < 10; ++trial) {
        ModelConfig c;
        c.H = small(rng);
        c.E = c.H * small(rng) * 2;
        c.K = small(rng);
        c.V = 8 * small(rng);
        c.L = 2 + small(rng);
        c.vocab_size = 5 + 3 * small(rng);
        c.use_positional_encoding = trial % 2 == 0;
        const Model m = Model::build(c, static_cast<std::uint64_t>(trial));
        const std::size_t B = small(rng);
        std::uniform_int_distribution<std::int32_t> tok(0, static_cast<std::int32_t>(c.vocab_size) - 1);
        std::vector<std::int32_t> x(B * c.L);
        for (auto& t : x) t = tok(rng);

        Model::Cache cache;
        const auto logits = m.forward_train(x, B, m.awgn_bias(), cache);
        const std::size_t BL = B * c.L;
        const std::string tag = "config " + std::to_string(trial) + ": ";
        o.expect(has_shape(cache.encoded, BL, c.E), tag + "semantic encoder output");
        o.expect(has_shape(cache.ce2, BL, c.K), tag + "channel encoder output");
        o.expect(has_shape(m.encode_to_symbols(x, B), B, c.K * c.L), tag + "symbol vector");
        o.expect(has_shape(cache.received, BL, c.K), tag + "channel output");
        o.expect(has_shape(cache.cd2, BL, c.E), tag + "channel decoder output");
        o.expect(has_shape(cache.decoded, BL, c.E), tag + "semantic decoder output");
        o.expect(has_shape(logits, BL, c.vocab_size), tag + "logits");
        const auto p = m.forward(x, B);
        o.expect(((p.rowwise().sum().array() - 1.0f).abs() < 1e-5f).all(), tag + "probability rows");
    }

    // 50 optimizer steps leave the channel layer bit-identical
    ModelConfig c;
    c.K = 4;
    c.H = 2;
    c.V = 32;
    c.E = 16;
    c.L = 12;
    c.vocab_size = 30;
    Model m = Model::build(c, 5);
    const RowVec<float> bias = m.awgn_bias();
    const Mat<float> kernel = m.awgn_kernel();
    const std::uint64_t start = m.checksum();
    TrainConfig t;
    t.learning_rate = 1e-3;
    t.seed = 5;
    Adam<float> adam(t.beta1, t.beta2, t.epsilon);
    std::mt19937_64 r(9);
    std::uniform_int_distribution<std::int32_t> tok(0, 29);
    for (std::uint64_t step = 0; step < 50; ++step) {
        LabeledBatch b;
        b.batch = 4;
        b.length = 12;
        b.vocab_size = 30;
        for (int i = 0; i < 48; ++i) b.X.push_back(tok(r));
        b.Y = one_hot_labels(b.X, 30);
        train_step(m, adam, b, t, t.learning_rate, step);
    }
    o.expect(m.checksum() != start, "training changed nothing");
    o.expect((m.awgn_bias().array() == bias.array()).all(), "channel bias moved");
    o.expect((m.awgn_kernel().array() == kernel.array()).all(), "channel kernel moved");

    // gradient check in double precision, away from ReLU kinks
    double worst = 0;
    int checked = 0;
    for (std::uint64_t seed = 1; seed <= 8 && checked < 3; ++seed) {
        if (!gradcheck::off_kinks(gradcheck::tiny(), seed)) continue;
        ++checked;
        for (const auto& [group, e] : gradcheck::check_model(gradcheck::tiny(), seed, false)) {
            worst = std::max(worst, e.rel());
            o.expect(e.rel() < 1e-3, "gradient group " + group + " rel " + std::to_string(e.rel()));
        }
    }
    o.expect(checked == 3, "too few kink-free seeds");
    o.detail << "10 configs, 50 steps, worst gradient rel error " << worst;
}

// ---------------------------------------------------------------- 4, 5

struct Memorized {
    Tokenizer tok;
    VectorizedDataset data;
    std::vector<std::string> raw;
    TrainResult result;
};

// Recipe: lr 2e-3, batch 8, clip 1.0, seed 3. The K=4 ReLU bottleneck is seed sensitive (see README).
Memorized memorize() {
    Memorized m;
    const auto doc = load_document(data_path("memorize.txt"));
    const CleanCorpus clean = standardize(doc);
    m.raw = document_lines(doc);
    m.tok = Tokenizer::fit(clean);
    m.data = encode(m.tok, clean, 12);
    ModelConfig cfg;
    cfg.K = 4;
    cfg.H = 2;
    cfg.V = 32;
    cfg.E = 16;
    cfg.L = 12;
    cfg.vocab_size = m.tok.vocab_size();
    cfg.sigma = 0;
    cfg.awgn_bias_variance = 0;
    const std::uint64_t seed = 3;
    BatchStream tr(m.data, 8, seed), va(m.data, 8, seed, false);
    TrainConfig t;
    t.learning_rate = 2e-3;
    t.batch_size = 8;
    t.max_epochs = 200;
    t.clip_norm = 1.0;
    t.seed = seed;
    m.result = train(Model::build(cfg, seed), tr, va, t);
    return m;
}

void memorization(Outcome& o, const Memorized& m) {
    o.expect(m.tok.vocab_size() <= 256, "vocab over 256");
    o.expect(m.data.rows <= 100, "more than 100 sentences");
    const auto& epochs = m.result.history.epochs;
    o.expect(epochs.size() <= 200, "more than 200 epochs");
    double best = 0;
    for (const auto& e : epochs) best = std::max(best, e.train_acc);

    // word positions only, recomputed from the returned model
    std::size_t words = 0, right = 0, verbatim = 0;
    for (std::size_t r = 0; r < m.data.rows; ++r) {
        const auto row = m.data.row(r);
        const auto p = m.result.model.forward(row, 1);
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (row[i] == 0) continue;
            Eigen::Index arg;
            p.row(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
            ++words;
            right += arg == row[i] ? 1 : 0;
        }
        std::vector<std::string> want;
        for (auto id : row) {
            if (id == 0) break;
            want.emplace_back(*m.tok.word_at(id));
        }
        verbatim += predict_sentence(m.result.model, m.tok, row) == oracle::join(want) ? 1 : 0;
    }
    const double word_acc = static_cast<double>(right) / static_cast<double>(words);
    const double recovered = static_cast<double>(verbatim) / static_cast<double>(m.data.rows);
    o.expect(best >= 0.95, "training accuracy " + std::to_string(best));
    o.expect(word_acc >= 0.95, "word accuracy " + std::to_string(word_acc));
    o.expect(recovered >= 0.90, "verbatim " + std::to_string(recovered));
    o.detail << epochs.size() << " epochs, train acc " << best << ", word acc " << word_acc << ", verbatim "
             << verbatim << "/" << m.data.rows;
}

void degradation(Outcome& o, const Memorized& m) {
    // 200 slots cycle through the memorized sentences
    const std::size_t N = 200;
    VectorizedDataset test;
    test.length = 12;
    test.vocab_size = m.data.vocab_size;
    std::vector<std::string> raw;
    for (std::size_t i = 0; i < N; ++i) {
        const auto r = m.data.row(i % m.data.rows);
        test.inputs.insert(test.inputs.end(), r.begin(), r.end());
        raw.push_back(m.raw[i % m.data.rows]);
    }
    test.rows = N;
    HashProjectionEmbedder embedder;
    const auto sweep = evaluate_sweep(m.result.model, m.tok, test, raw, {0, 1, 5, 10, 50}, 0.1, N, 2024, embedder);
    for (std::size_t i = 0; i < sweep.points.size(); ++i) {
        o.detail << (i ? ", " : "") << "p(U=" << sweep.points[i].U << ")=" << sweep.points[i].estimate.p;
        if (i > 0) {
            o.expect(sweep.points[i].estimate.p <= sweep.points[i - 1].estimate.p + 0.05,
                     "increase at U=" + std::to_string(sweep.points[i].U));
        }
    }
    const double gap = sweep.points.front().estimate.p - sweep.points.back().estimate.p;
    o.expect(gap >= 0.5, "gap " + std::to_string(gap));
    o.detail << ", gap " << gap;
}

// ---------------------------------------------------------------- 6

void estimator(Outcome& o) {
    std::mt19937_64 rng(606);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<std::size_t> n(1, 500);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> eta(n(rng));
        for (auto& x : eta) x = u(rng);
        // some exact ties with the thresholds
        if (trial % 3 == 0) eta[0] = 0.1;
        double last = 1.0;
        for (double th = -1.0; th <= 1.0001; th += 0.1) {
            const double p = estimate_pss(eta, th).p;
            o.expect(p == oracle::pss_count(eta, th), "count mismatch at trial " + std::to_string(trial));
            o.expect(p <= last, "not monotone at trial " + std::to_string(trial));
            last = p;
        }
        o.expect(estimate_pss(eta, -1.0).p == 1.0, "p(-1) != 1");
    }
    o.detail << "1000 lists, 21 thresholds each";
}

// ---------------------------------------------------------------- 7

// Closed form: with k epochs since the last strict improvement, the lr drops when k is a
// positive multiple of 5 and training stops when k reaches 10.
void callbacks(Outcome& o) {
    std::mt19937_64 rng(707);
    std::uniform_int_distribution<int> level(0, 6);
    std::size_t reductions_seen = 0, stops_seen = 0;
    for (int trial = 0; trial < 500; ++trial) {
        PlateauSchedule s(2e-4, 0.1, 5, 10);
        double best = std::numeric_limits<double>::infinity();
        std::size_t k = 0, drops = 0;
        for (int epoch = 1; epoch <= 60; ++epoch) {
            // coarse levels make ties common
            const double loss = 1.0 + 0.1 * level(rng) - 0.002 * (trial % 4 == 0 ? epoch : 0);
            const auto st = s.update(loss);
            if (loss < best) {
                best = loss;
                k = 0;
            } else {
                ++k;
            }
            const bool reduce = k > 0 && k % 5 == 0;
            drops += reduce ? 1 : 0;
            o.expect(st.improved == (k == 0), "improvement flag");
            o.expect(st.reduced == reduce, "reduction at epoch " + std::to_string(epoch));
            o.expect(st.stop == (k == 10), "stop at epoch " + std::to_string(epoch));
            o.expect(std::abs(s.lr() - 2e-4 * std::pow(0.1, static_cast<double>(drops))) <= 1e-18, "lr value");
            reductions_seen += reduce ? 1 : 0;
            if (st.stop) {
                ++stops_seen;
                break;
            }
        }
    }
    o.expect(reductions_seen > 0 && stops_seen > 0, "sequences never plateaued");
    o.detail << "500 sequences, " << reductions_seen << " reductions, " << stops_seen << " stops";
}

// ---------------------------------------------------------------- 8

void determinism(Outcome& o) {
    TempDir dir;
    {
        std::ofstream ini(dir / "run.ini");
        ini << "[data]\nraw_corpus = " << data_path("memorize.txt").string()
            << "\ntest_n = 16\ntrain_n = 40\nval_n = 8\nmin_count = 1\n"
            << "[model]\nK = 4\nH = 2\nV = 32\nE = 16\nL = 12\nawgn_bias_variance = 0.0001\n"
            << "[train]\nlearning_rate = 0.002\nmax_epochs = 15\nbatch_size = 8\nclip_norm = 1.0\n"
            << "[sweep]\nU_grid = 0,1,5,10,50\neta_min = 0.1\n"
            << "[run]\nseed = 11\n";
    }
    const std::vector<std::string> files{"prep/manifest.json", "prep/test.bin",   "train/history.csv",
                                         "train/best.ckpt",    "sweep/sweep.csv", "sweep/trace.csv"};
    std::vector<std::vector<std::string>> bytes(2);
    std::vector<Mat<float>> outputs;
    for (int run = 0; run < 2; ++run) {
        const RunConfig cfg = load_run_config(dir / "run.ini", {std::nullopt, dir / ("run" + std::to_string(run))});
        cmd_prep(cfg, {});
        cmd_train(cfg, {});
        CommandOptions sweep;
        sweep.parallelism = run == 0 ? 1 : 3;
        cmd_sweep(cfg, sweep);
        for (const auto& f : files) bytes[run].push_back(oracle::slurp(cfg.out / f));
        const Model m = load_model<float>(cfg.out / "train" / "best.ckpt");
        const auto test = VectorizedDataset::load(cfg.out / "prep" / "test.bin");
        outputs.push_back(m.forward(test.inputs, test.rows));
    }
    for (std::size_t i = 0; i < files.size(); ++i) {
        o.expect(!bytes[0][i].empty(), files[i] + " is empty");
        o.expect(bytes[0][i] == bytes[1][i], files[i] + " differs");
    }
    o.expect((outputs[0].array() == outputs[1].array()).all(), "checkpoint forward outputs differ");
    o.detail << files.size() << " artifacts byte-identical, forward outputs identical";
}

}  // namespace

int main() {
    int failed = 0;
    auto run = [&](int id, const std::string& name, double budget_s, const std::function<void(Outcome&)>& body) {
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            body(o);
        } catch (const std::exception& e) {
            o.expect(false, std::string("exception: ") + e.what());
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (budget_s > 0) o.expect(s <= budget_s, "over the " + std::to_string(budget_s) + " s budget");
        failed += o.pass ? 0 : 1;
        std::printf("%s [%d] %s (%.1f s) %s%s%s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), s,
                    o.failures.str().c_str(), o.pass ? "" : " | ", o.detail.str().c_str());
        std::fflush(stdout);
    };

    Memorized mem;
    run(1, "pipeline oracles", 10, pipeline);
    run(2, "channel statistics", 60, channel_statistics);
    run(3, "architecture shapes, freeze and gradients", 300, architecture);
    run(4, "memorization", 900, [&](Outcome& o) {
        mem = memorize();
        memorization(o, mem);
    });
    run(5, "degradation sweep", 600, [&](Outcome& o) {
        if (mem.data.rows == 0) throw std::runtime_error("no memorized model");
        degradation(o, mem);
    });
    run(6, "estimator", 0, estimator);
    run(7, "callback semantics", 0, callbacks);
    run(8, "determinism", 0, determinism);
    return failed == 0 ? 0 : 1;
}
