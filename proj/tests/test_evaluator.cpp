#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "semcom/evaluator.hpp"
#include "support.hpp"

using namespace semcom;

namespace {

Tokenizer small_tokenizer() {
    CleanCorpus c;
    c.sentences = {"a b c", "a b", "a"};
    return Tokenizer::fit(c);
}

// Puts all the mass on the source token at each position.
struct EchoView {
    std::size_t vocab;
    Mat<float> forward(std::span<const std::int32_t> tokens, std::size_t) const {
        Mat<float> p = Mat<float>::Zero(static_cast<Eigen::Index>(tokens.size()), static_cast<Eigen::Index>(vocab));
        for (std::size_t i = 0; i < tokens.size(); ++i) p(static_cast<Eigen::Index>(i), tokens[i]) = 1;
        return p;
    }
};

struct SweepFixture {
    Tokenizer tok;
    VectorizedDataset test;
    std::vector<std::string> raw;
    Model model;

    SweepFixture() {
        const auto doc = load_document(data_path("memorize.txt"));
        auto lines = document_lines(doc);
        lines.resize(10);
        raw = lines;
        CleanCorpus c;
        for (const auto& l : lines) c.sentences.push_back(standardize_sentence(l));
        tok = Tokenizer::fit(c);
        test = encode(tok, c, 12);
        ModelConfig cfg;
        cfg.K = 4;
        cfg.H = 2;
        cfg.V = 32;
        cfg.E = 16;
        cfg.L = 12;
        cfg.vocab_size = tok.vocab_size();
        model = Model::build(cfg, 7);
    }
};

}  // namespace

TEST_CASE("word_for_index") {
    const Tokenizer tok = small_tokenizer();
    CHECK(word_for_index(tok, 1) == "a");
    CHECK(word_for_index(tok, 3) == "c");
    CHECK(!word_for_index(tok, 0));
    CHECK(!word_for_index(tok, static_cast<std::int64_t>(tok.vocab_size()) + 5));
    CHECK(!word_for_index(tok, -1));
}

TEST_CASE("greedy prediction stops at the first index without a word") {
    const Tokenizer tok = small_tokenizer();
    const EchoView view{tok.vocab_size()};
    const std::vector<std::int32_t> x{1, 2, 0, 3};
    CHECK(predict_sentence(view, tok, x) == "a b");
    CHECK(predict_sentence(view, tok, std::vector<std::int32_t>(4, 0)).empty());
    CHECK(predict_sentence(view, tok, std::vector<std::int32_t>{3, 3, 1, 2}) == "c c a b");

    // ties go to the lowest index
    Mat<float> p = Mat<float>::Zero(2, 4);
    p(0, 2) = 0.5f;
    p(0, 3) = 0.5f;
    p.row(1).setConstant(0.25f);
    CHECK(predict_from_probabilities(tok, p) == "b");
}

TEST_CASE("cosine similarity") {
    Eigen::VectorXd a(2), b(2), z = Eigen::VectorXd::Zero(2);
    a << 1, 0;
    b << 1, 1;
    CHECK(cosine_similarity(a, a) == doctest::Approx(1.0));
    CHECK(cosine_similarity(a, b) == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(cosine_similarity(b, a) == cosine_similarity(a, b));
    CHECK(cosine_similarity(a, -a) == doctest::Approx(-1.0));
    CHECK(cosine_similarity(a, z) == 0.0);
    CHECK_THROWS_AS(cosine_similarity(a, Eigen::VectorXd::Ones(3)), EvaluationError);
}

TEST_CASE("stub embedder") {
    HashProjectionEmbedder e(64);
    CHECK(e.dimension() == 64);
    CHECK(e.embed("The Council, voted.").isApprox(e.embed("the council voted")));
    CHECK(sentence_similarity(e, "we must vote", "we must vote") == doctest::Approx(1.0));
    CHECK(e.embed("").isZero(0));
    CHECK(sentence_similarity(e, "the house", "") == 0.0);
    // shared words raise the similarity
    CHECK(sentence_similarity(e, "the council must vote", "the council must debate") >
          sentence_similarity(e, "the council must vote", "zeal quota rule"));
    HashProjectionEmbedder salted(64, 1);
    CHECK(!salted.embed("vote").isApprox(e.embed("vote")));
    CHECK_THROWS_AS(HashProjectionEmbedder(0), EvaluationError);
}

TEST_CASE("process embedder speaks the line protocol") {
    ProcessEmbedder e({"/bin/sh", "-c", "while IFS= read -r l; do echo \"${#l} 1\"; done"});
    const auto v = e.embed("abc");
    REQUIRE(v.size() == 2);
    CHECK(v(0) == 3);
    CHECK(v(1) == 1);
    CHECK(e.dimension() == 2);
    CHECK(e.embed("hello")(0) == 5);
    CHECK_THROWS_AS(ProcessEmbedder({}), EvaluationError);

    ProcessEmbedder dead({"/bin/sh", "-c", "exit 0"});
    CHECK_THROWS_AS(dead.embed("x"), EvaluationError);
}

TEST_CASE("estimate_pss worked examples") {
    CHECK(estimate_pss({0.2, 0.05, 0.1, 0.9}, 0.1).p == doctest::Approx(0.75));
    CHECK(estimate_pss({0.0}, 0.1).p == 0.0);
    CHECK(estimate_pss({-0.5, 0.3}, -1.0).p == 1.0);
    const auto e = estimate_pss({0.5, 0.5}, 0.5);
    CHECK(e.p == 1.0);
    CHECK(e.N == 2);
    CHECK(e.eta_min == 0.5);
    CHECK_THROWS_AS(estimate_pss({}, 0.1), EvaluationError);
}

TEST_CASE("estimate_pss agrees with a direct count and is monotone in the threshold") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<std::size_t> n(1, 300);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> eta(n(rng));
        for (auto& x : eta) x = u(rng);
        const double th = u(rng);
        const auto est = estimate_pss(eta, th);
        CHECK(est.p == oracle::pss_count(eta, th));
        CHECK(est.p >= 0.0);
        CHECK(est.p <= 1.0);
        CHECK(estimate_pss(eta, th + 0.1).p <= est.p);
        CHECK(estimate_pss(eta, -1.0).p == 1.0);
    }
}

TEST_CASE("truncate_words") {
    CHECK(truncate_words("one two three", 5) == "one two three");
    CHECK(truncate_words("one  two three four", 2) == "one two");
    CHECK(truncate_words("", 3).empty());
}

TEST_CASE("sweep is deterministic and keyed by slot") {
    SweepFixture f;
    HashProjectionEmbedder e;
    const auto a = evaluate_sweep(f.model, f.tok, f.test, f.raw, {0, 5, 50}, 0.1, 10, 42, e);
    const auto b = evaluate_sweep(f.model, f.tok, f.test, f.raw, {0, 5, 50}, 0.1, 10, 42, e);
    REQUIRE(a.points.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(a.points[i].estimate.p == b.points[i].estimate.p);
        CHECK(a.points[i].recovered == b.points[i].recovered);
        CHECK(a.points[i].estimate.similarities == b.points[i].estimate.similarities);
        CHECK(a.points[i].estimate.N == 10);
    }

    // a point does not depend on what was evaluated before it
    const auto alone = evaluate_sweep(f.model, f.tok, f.test, f.raw, {0}, 0.1, 10, 42, e);
    const auto after = evaluate_sweep(f.model, f.tok, f.test, f.raw, {50, 0}, 0.1, 10, 42, e);
    CHECK(alone.points[0].recovered == after.points[1].recovered);

    // U=0 is the plain model on every slot
    for (std::size_t t = 0; t < 10; ++t) {
        CHECK(alone.points[0].recovered[t] == predict_sentence(f.model, f.tok, f.test.row(t)));
    }

    SweepOptions par;
    par.parallelism = 4;
    const auto p = evaluate_sweep(f.model, f.tok, f.test, f.raw, {0, 5, 50}, 0.1, 10, 42, e, par);
    for (std::size_t i = 0; i < 3; ++i) CHECK(p.points[i].recovered == a.points[i].recovered);
}

TEST_CASE("sweep references are the raw sentences cut to L words") {
    SweepFixture f;
    HashProjectionEmbedder e;
    // an echo of the encoded row is the cleaned sentence, so similarity is 1 wherever nothing was cut away
    const auto r = evaluate_sweep(f.model, f.tok, f.test, f.raw, {0}, 0.1, 3, 1, e);
    for (std::size_t t = 0; t < 3; ++t) {
        const auto want = cosine_similarity(e.embed(truncate_words(f.raw[t], 12)), e.embed(r.points[0].recovered[t]));
        CHECK(r.points[0].estimate.similarities[t] == doctest::Approx(want));
    }
}

TEST_CASE("sweep input validation") {
    SweepFixture f;
    HashProjectionEmbedder e;
    CHECK_THROWS_AS(evaluate_sweep(f.model, f.tok, f.test, f.raw, {}, 0.1, 5, 1, e), EvaluationError);
    auto short_raw = f.raw;
    short_raw.pop_back();
    CHECK_THROWS_WITH_AS(evaluate_sweep(f.model, f.tok, f.test, short_raw, {0}, 0.1, 5, 1, e),
                         doctest::Contains("aligned"), EvaluationError);
    CHECK_THROWS_AS(evaluate_sweep(f.model, f.tok, f.test, f.raw, {0}, 0.1, 0, 1, e), EvaluationError);
    CHECK_THROWS_AS(evaluate_sweep(f.model, f.tok, f.test, f.raw, {0}, 0.1, 11, 1, e), EvaluationError);
    auto wrong = f.test;
    wrong.vocab_size += 1;
    CHECK_THROWS_AS(evaluate_sweep(f.model, f.tok, wrong, f.raw, {0}, 0.1, 5, 1, e), EvaluationError);
}

TEST_CASE("sweep csv formats") {
    TempDir dir;
    SweepResult r;
    r.seed = 9;
    SweepPoint pt;
    pt.U = 5;
    pt.estimate = estimate_pss({0.1, 0.75}, 0.1);
    pt.recovered = {"we must vote", "a, b"};
    r.points.push_back(pt);
    r.save_csv(dir / "s.csv");
    r.save_trace_csv(dir / "t.csv");
    CHECK(oracle::slurp(dir / "s.csv") == "U,eta_min,N,p,seed\n5,0.1,2,1,9\n");
    CHECK(oracle::slurp(dir / "t.csv") == "U,slot,eta,recovered_sentence\n5,1,0.1,we must vote\n5,2,0.75,\"a, b\"\n");
    CHECK_THROWS_AS(r.save_csv(dir / "missing" / "s.csv"), EvaluationError);
}
