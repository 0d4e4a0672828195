#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "semcom/corpus.hpp"
#include "semcom/model.hpp"
#include "semcom/trainer.hpp"

namespace semcom {

// Bad invocation or configuration; the CLI exits with status 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr const char* kOutRootEnv = "SEMCOM_OUT_ROOT";

struct RunConfig {
    std::filesystem::path config_path;
    std::string config_sha256;

    // [data]
    std::filesystem::path raw_corpus;
    std::size_t test_n = 0, train_n = 0, val_n = 0;
    std::size_t min_count = 1;
    Truncation truncation = Truncation::keep_head;
    bool prune_empty = false;

    ModelConfig model;     // [model]; vocab_size comes from the tokenizer
    TrainConfig train;     // [train]
    TrainConfig finetune;  // [finetune]; unset keys inherit [train], lr/epochs default to 1e-4/50
    std::filesystem::path finetune_from;  // default <out>/train/best.ckpt

    // [sweep]
    std::filesystem::path sweep_checkpoint;  // default <out>/train/best.ckpt
    std::vector<std::size_t> U_grid{0, 1, 5, 10, 50};
    double eta_min = 0.1;
    std::size_t N = 0;  // 0 means every test row
    double power = 10.0;
    bool trace = true;
    std::string embedder = "stub";         // stub | command
    std::vector<std::string> embedder_command;
    std::size_t embedder_dim = 384;

    // [run]
    std::uint64_t seed = 0;
    std::filesystem::path out;
};

struct ConfigOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out;
};

// INI file with sections [data] [model] [train] [finetune] [sweep] [run]. Relative paths resolve
// against the config file's directory. Output root precedence: --out, $SEMCOM_OUT_ROOT, [run] out.
RunConfig load_run_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

struct CommandOptions {
    bool force = false;
    std::size_t parallelism = 1;
    std::ostream* log = nullptr;
};

// <out>/prep: clean.txt trimmed.txt tokenizer.tsv train.bin val.bin test.bin test_raw.txt manifest.json
void cmd_prep(const RunConfig& cfg, const CommandOptions& opt);
// <out>/train: best.ckpt final.ckpt history.csv train.log manifest.json
TrainResult cmd_train(const RunConfig& cfg, const CommandOptions& opt);
// <out>/finetune: same files as train
TrainResult cmd_finetune(const RunConfig& cfg, const CommandOptions& opt);
// <out>/sweep: sweep.csv [trace.csv] manifest.json
void cmd_sweep(const RunConfig& cfg, const CommandOptions& opt);

// SVG line plot of a history CSV (loss and accuracy, train vs validation) or a sweep CSV (p vs U).
void cmd_plot(const std::filesystem::path& csv, const std::filesystem::path& image, bool force);

std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(std::string_view bytes);

}  // namespace semcom
