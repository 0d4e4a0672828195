#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"
#include "semcom/app.hpp"
#include "support.hpp"

using namespace semcom;
namespace fs = std::filesystem;

namespace {

// Mini corpus: 20 sentences split 4/12/4.
std::string ini(const std::string& extra_data = "", const std::string& extra_sweep = "",
                const std::string& run = "seed = 5\nout = runs\n") {
    std::ostringstream s;
    s << "[data]\nraw_corpus = " << data_path("mini_corpus.txt").string()
      << "\ntest_n = 4\ntrain_n = 12\nval_n = 4\nmin_count = 2\n"
      << extra_data << "\n[model]\nK = 4\nH = 2\nV = 16\nE = 8\nL = 12\n"
      << "\n[train]\nlearning_rate = 0.002\nmax_epochs = 3\nbatch_size = 4\n"
      << "\n[finetune]\nmax_epochs = 2\n"
      << "\n[sweep]\nU_grid = 0,1,5,10,50\neta_min = 0.1\n" << extra_sweep << "\n[run]\n" << run;
    return s.str();
}

fs::path write(const TempDir& dir, const std::string& name, const std::string& text) {
    std::ofstream(dir / name) << text;
    return dir / name;
}

struct EnvGuard {
    EnvGuard() { unsetenv(kOutRootEnv); }
    ~EnvGuard() { unsetenv(kOutRootEnv); }
};

nlohmann::json manifest(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json");
    return nlohmann::json::parse(in);
}

int run_cli(const std::string& args) {
    const int status = std::system((std::string(SEMCOM_CLI) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config parsing") {
    EnvGuard env;
    TempDir dir;
    const RunConfig c = load_run_config(write(dir, "a.ini", ini()));
    CHECK(c.seed == 5);
    CHECK(c.out == dir.path() / "runs");
    CHECK(c.model.K == 4);
    CHECK(c.train.learning_rate == 0.002);
    CHECK(c.train.max_epochs == 3);
    // finetune inherits [train] except for its own defaults
    CHECK(c.finetune.batch_size == 4);
    CHECK(c.finetune.max_epochs == 2);
    CHECK(c.finetune.learning_rate == doctest::Approx(1e-4));
    CHECK(c.U_grid == std::vector<std::size_t>{0, 1, 5, 10, 50});
    CHECK(c.finetune_from == dir.path() / "runs" / "train" / "best.ckpt");
    CHECK(c.sweep_checkpoint == c.finetune_from);
    CHECK(c.config_sha256 == sha256_hex(ini()));

    CHECK_THROWS_WITH_AS(load_run_config(write(dir, "b.ini", ini("", "", "out = runs\n"))),
                         doctest::Contains("seed is mandatory"), UsageError);
    CHECK(load_run_config(dir / "b.ini", {7, std::nullopt}).seed == 7);
    CHECK_THROWS_WITH_AS(load_run_config(write(dir, "c.ini", ini("colour = red\n"))), doctest::Contains("colour"),
                         UsageError);
    CHECK_THROWS_AS(load_run_config(write(dir, "d.ini", ini() + "[extra]\nx = 1\n")), UsageError);
    CHECK_THROWS_AS(load_run_config(write(dir, "e.ini", ini("min_count = two\n"))), UsageError);
    CHECK_THROWS_AS(load_run_config(dir / "missing.ini"), UsageError);
}

TEST_CASE("output root precedence") {
    EnvGuard env;
    TempDir dir;
    const auto path = write(dir, "a.ini", ini());
    CHECK(load_run_config(path).out == dir.path() / "runs");
    setenv(kOutRootEnv, (dir / "env").c_str(), 1);
    CHECK(load_run_config(path).out == dir.path() / "env");
    CHECK(load_run_config(path, {std::nullopt, dir / "flag"}).out == dir.path() / "flag");
}

TEST_CASE("prep writes counted artifacts and refuses to overwrite") {
    EnvGuard env;
    TempDir dir;
    const RunConfig c = load_run_config(write(dir, "a.ini", ini()));
    cmd_prep(c, {});
    const fs::path prep = c.out / "prep";
    const auto m = manifest(prep);
    // counts from the independent counter in tests/data/count_mini.py
    CHECK(m["sentences"] == 20);
    CHECK(m["clean_words"] == 290);
    CHECK(m["trimmed_vocabulary"] == 46);
    CHECK(m["vocab_size"] == 47);
    CHECK(m["test_n"] == 4);
    CHECK(m["train_n"] == 12);
    CHECK(m["val_n"] == 4);
    CHECK(m["seed"] == 5);
    CHECK(m["config_sha256"] == c.config_sha256);
    for (const char* f : {"clean.txt", "trimmed.txt", "tokenizer.tsv", "train.bin", "val.bin", "test.bin",
                          "test_raw.txt"}) {
        INFO(f);
        REQUIRE(fs::exists(prep / f));
        CHECK(m["artifacts"][f] == sha256_file(prep / f));
    }
    CHECK(VectorizedDataset::load(prep / "test.bin").rows == 4);

    CHECK_THROWS_WITH(cmd_prep(c, {}), doctest::Contains("refusing to overwrite"));
    CommandOptions force;
    force.force = true;
    CHECK_NOTHROW(cmd_prep(c, force));
}

TEST_CASE("min_count 1 leaves the cleaned corpus untouched") {
    EnvGuard env;
    TempDir dir;
    std::string text = ini();
    text.replace(text.find("min_count = 2"), 13, "min_count = 1");
    const RunConfig c = load_run_config(write(dir, "a.ini", text));
    cmd_prep(c, {});
    CHECK(oracle::slurp(c.out / "prep" / "trimmed.txt") == oracle::slurp(c.out / "prep" / "clean.txt"));
    const auto m = manifest(c.out / "prep");
    CHECK(m["trimmed_vocabulary"] == 161);
    CHECK(m["vocab_size"] == 162);
}

TEST_CASE("train, finetune, sweep and plot end to end") {
    EnvGuard env;
    TempDir dir;
    const RunConfig c = load_run_config(write(dir, "a.ini", ini()));
    CHECK_THROWS_WITH(cmd_finetune(c, {}), doctest::Contains("best.ckpt"));

    cmd_prep(c, {});
    std::ostringstream log;
    CommandOptions opt;
    opt.log = &log;
    const TrainResult r = cmd_train(c, opt);
    const fs::path train = c.out / "train";
    for (const char* f : {"best.ckpt", "final.ckpt", "history.csv", "train.log", "manifest.json"}) {
        INFO(f);
        CHECK(fs::exists(train / f));
    }
    std::istringstream hist(oracle::slurp(train / "history.csv"));
    std::size_t rows = 0;
    for (std::string line; std::getline(hist, line);) ++rows;
    CHECK(rows == 1 + r.history.epochs.size());
    CHECK(r.history.epochs.size() == 3);

    const TrainResult f = cmd_finetune(c, {});
    CHECK(f.model.epochs_trained == r.model.epochs_trained + f.history.epochs.size());
    CHECK(fs::exists(c.out / "finetune" / "history.csv"));

    cmd_sweep(c, {});
    const std::string first = oracle::slurp(c.out / "sweep" / "sweep.csv");
    std::istringstream s(first);
    std::vector<std::string> lines;
    for (std::string line; std::getline(s, line);) lines.push_back(line);
    REQUIRE(lines.size() == 6);
    CHECK(lines[0] == "U,eta_min,N,p,seed");
    CHECK(lines[1].rfind("0,0.1,4,", 0) == 0);
    CHECK(fs::exists(c.out / "sweep" / "trace.csv"));

    CommandOptions again;
    again.force = true;
    again.parallelism = 3;
    cmd_sweep(c, again);
    CHECK(oracle::slurp(c.out / "sweep" / "sweep.csv") == first);

    cmd_plot(train / "history.csv", dir / "h.svg", false);
    cmd_plot(c.out / "sweep" / "sweep.csv", dir / "s.svg", false);
    CHECK(oracle::slurp(dir / "h.svg").find("<svg") != std::string::npos);
    CHECK(oracle::slurp(dir / "s.svg").find("<svg") != std::string::npos);
    CHECK_THROWS_WITH(cmd_plot(train / "history.csv", dir / "h.svg", false), doctest::Contains("refusing"));

    write(dir, "bad.csv", "U,eta_min,N,seed\n0,0.1,4,5\n");
    CHECK_THROWS_WITH_AS(cmd_plot(dir / "bad.csv", dir / "bad.svg", false), doctest::Contains("missing column 'p'"),
                         UsageError);
}

TEST_CASE("empty U grid is a usage error") {
    EnvGuard env;
    TempDir dir;
    std::string text = ini();
    text.replace(text.find("U_grid = 0,1,5,10,50"), 20, "U_grid =");
    const RunConfig c = load_run_config(write(dir, "a.ini", text));
    CHECK_THROWS_AS(cmd_sweep(c, {}), UsageError);
}

TEST_CASE("binary exit codes") {
    EnvGuard env;
    TempDir dir;
    const auto cfg = write(dir, "a.ini", ini()).string();
    CHECK(run_cli("prep --config " + cfg) == 0);
    CHECK(run_cli("prep --config " + cfg) == 1);  // existing outputs
    CHECK(run_cli("prep --config " + cfg + " --force") == 0);
    CHECK(run_cli("prep --config " + write(dir, "b.ini", ini("", "", "out = runs\n")).string()) == 2);
    CHECK(run_cli("prep --config " + cfg + " --seed 9 --out " + (dir / "other").string()) == 0);
    CHECK(manifest(dir / "other" / "prep")["seed"] == 9);
    CHECK(run_cli("sweep --config " + (dir / "missing.ini").string()) != 0);
    CHECK(run_cli("") != 0);
}
