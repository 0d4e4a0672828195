#include "semcom/app.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <openssl/evp.h>

#include "json.hpp"
#include "semcom/evaluator.hpp"

namespace semcom {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------- hashing

std::string sha256_hex(std::string_view bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256 failed");
    }
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) {
        out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    }
    return out.str();
}

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read '" + path.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

// ---------------------------------------------------------------------------- config

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
    static const std::map<std::string, std::set<std::string>> keys{
        {"data", {"raw_corpus", "test_n", "train_n", "val_n", "min_count", "truncation", "prune_empty"}},
        {"model",
         {"K", "H", "V", "E", "L", "sigma", "awgn_bias_variance", "positional_encoding", "transformer_layers",
          "channel_hidden", "head_dim", "dropout"}},
        {"train",
         {"learning_rate", "max_epochs", "batch_size", "lr_reduce_factor", "lr_patience", "early_stop_patience",
          "noise", "mask_padding", "clip_norm"}},
        {"finetune",
         {"learning_rate", "max_epochs", "batch_size", "lr_reduce_factor", "lr_patience", "early_stop_patience",
          "noise", "mask_padding", "clip_norm", "from"}},
        {"sweep",
         {"checkpoint", "U_grid", "eta_min", "N", "power", "trace", "embedder", "embedder_command", "embedder_dim"}},
        {"run", {"seed", "out"}},
    };
    return keys;
}

class Ini {
public:
    explicit Ini(boost::property_tree::ptree tree) : tree_(std::move(tree)) {}

    std::optional<std::string> raw(const std::string& section, const std::string& key) const {
        auto sec = tree_.get_child_optional(section);
        if (!sec) return std::nullopt;
        auto v = sec->get_optional<std::string>(key);
        if (!v) return std::nullopt;
        return *v;
    }

    template <class T>
    void read(const std::string& section, const std::string& key, T& into) const {
        auto v = raw(section, key);
        if (!v) return;
        into = parse<T>(section, key, *v);
    }

    template <class T>
    static T parse(const std::string& section, const std::string& key, const std::string& text) {
        std::istringstream in(text);
        T value{};
        if constexpr (std::is_same_v<T, bool>) {
            std::string s;
            in >> s;
            if (s == "true" || s == "1" || s == "yes") return true;
            if (s == "false" || s == "0" || s == "no") return false;
            throw UsageError("[" + section + "] " + key + ": expected a boolean, got '" + text + "'");
        } else {
            if constexpr (std::is_unsigned_v<T>) {
                if (text.find('-') != std::string::npos) {
                    throw UsageError("[" + section + "] " + key + ": expected a non-negative integer, got '" + text +
                                     "'");
                }
            }
            in >> value;
            std::string rest;
            if (in.fail() || (in >> rest)) {
                throw UsageError("[" + section + "] " + key + ": cannot parse '" + text + "'");
            }
            return value;
        }
    }

    void check_known() const {
        for (const auto& [section, body] : tree_) {
            auto it = known_keys().find(section);
            if (it == known_keys().end()) {
                throw UsageError("unknown config section [" + section + "]");
            }
            for (const auto& [key, _] : body) {
                if (!it->second.count(key)) {
                    throw UsageError("unknown config key '" + key + "' in [" + section + "]");
                }
            }
        }
    }

private:
    boost::property_tree::ptree tree_;
};

void read_train(const Ini& ini, const std::string& section, TrainConfig& t) {
    ini.read(section, "learning_rate", t.learning_rate);
    ini.read(section, "max_epochs", t.max_epochs);
    ini.read(section, "batch_size", t.batch_size);
    ini.read(section, "lr_reduce_factor", t.lr_reduce_factor);
    ini.read(section, "lr_patience", t.lr_patience);
    ini.read(section, "early_stop_patience", t.early_stop_patience);
    ini.read(section, "mask_padding", t.mask_padding);
    ini.read(section, "clip_norm", t.clip_norm);
    if (auto noise = ini.raw(section, "noise")) {
        if (*noise == "frozen_bias") {
            t.noise = ChannelNoise::Kind::frozen_bias;
        } else if (*noise == "resampled") {
            t.noise = ChannelNoise::Kind::resampled;
        } else {
            throw UsageError("[" + section + "] noise must be frozen_bias or resampled");
        }
    }
}

std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) {
        cur.erase(0, cur.find_first_not_of(" \t"));
        cur.erase(cur.find_last_not_of(" \t") + 1);
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : base / p; }

}  // namespace

RunConfig load_run_config(const fs::path& path, const ConfigOverrides& overrides) {
    if (!fs::exists(path)) {
        throw UsageError("config file '" + path.string() + "' does not exist");
    }
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(path.string(), tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw UsageError("config: " + std::string(e.what()));
    }
    const Ini ini(tree);
    ini.check_known();
    const fs::path base = path.parent_path().empty() ? fs::path(".") : path.parent_path();

    RunConfig cfg;
    cfg.config_path = path;
    cfg.config_sha256 = sha256_file(path);

    if (auto raw = ini.raw("data", "raw_corpus")) cfg.raw_corpus = resolve(base, *raw);
    ini.read("data", "test_n", cfg.test_n);
    ini.read("data", "train_n", cfg.train_n);
    ini.read("data", "val_n", cfg.val_n);
    ini.read("data", "min_count", cfg.min_count);
    ini.read("data", "prune_empty", cfg.prune_empty);
    if (auto t = ini.raw("data", "truncation")) {
        if (*t == "keep_head") {
            cfg.truncation = Truncation::keep_head;
        } else if (*t == "keep_tail") {
            cfg.truncation = Truncation::keep_tail;
        } else {
            throw UsageError("[data] truncation must be keep_head or keep_tail");
        }
    }

    ModelConfig& m = cfg.model;
    ini.read("model", "K", m.K);
    ini.read("model", "H", m.H);
    ini.read("model", "V", m.V);
    ini.read("model", "E", m.E);
    ini.read("model", "L", m.L);
    ini.read("model", "sigma", m.sigma);
    ini.read("model", "awgn_bias_variance", m.awgn_bias_variance);
    ini.read("model", "positional_encoding", m.use_positional_encoding);
    ini.read("model", "transformer_layers", m.transformer_layers);
    ini.read("model", "channel_hidden", m.channel_hidden);
    ini.read("model", "head_dim", m.head_dim);
    ini.read("model", "dropout", m.dropout);

    read_train(ini, "train", cfg.train);
    cfg.finetune = cfg.train;
    const TrainConfig fd = finetune_defaults();
    cfg.finetune.learning_rate = fd.learning_rate;
    cfg.finetune.max_epochs = fd.max_epochs;
    read_train(ini, "finetune", cfg.finetune);

    if (auto s = ini.raw("sweep", "U_grid")) {
        cfg.U_grid.clear();
        for (const auto& item : split_on(*s, ',')) {
            cfg.U_grid.push_back(Ini::parse<std::size_t>("sweep", "U_grid", item));
        }
    }
    ini.read("sweep", "eta_min", cfg.eta_min);
    ini.read("sweep", "N", cfg.N);
    ini.read("sweep", "power", cfg.power);
    ini.read("sweep", "trace", cfg.trace);
    ini.read("sweep", "embedder", cfg.embedder);
    ini.read("sweep", "embedder_dim", cfg.embedder_dim);
    if (auto c = ini.raw("sweep", "embedder_command")) cfg.embedder_command = split_on(*c, ' ');
    if (cfg.embedder != "stub" && cfg.embedder != "command") {
        throw UsageError("[sweep] embedder must be stub or command");
    }
    if (cfg.embedder == "command" && cfg.embedder_command.empty()) {
        throw UsageError("[sweep] embedder = command needs embedder_command");
    }

    std::optional<std::uint64_t> seed = overrides.seed;
    if (!seed) {
        if (auto s = ini.raw("run", "seed")) seed = Ini::parse<std::uint64_t>("run", "seed", *s);
    }
    if (!seed) {
        throw UsageError("seed is mandatory: set [run] seed or pass --seed");
    }
    cfg.seed = *seed;
    cfg.train.seed = cfg.seed;
    cfg.finetune.seed = derive_seed(cfg.seed, {0x66696e65ULL});

    if (overrides.out) {
        cfg.out = *overrides.out;
    } else if (const char* env = std::getenv(kOutRootEnv); env != nullptr && *env != '\0') {
        cfg.out = env;
    } else if (auto o = ini.raw("run", "out")) {
        cfg.out = resolve(base, *o);
    } else {
        cfg.out = resolve(base, "runs");
    }

    cfg.finetune_from = cfg.out / "train" / "best.ckpt";
    if (auto f = ini.raw("finetune", "from")) cfg.finetune_from = resolve(base, *f);
    cfg.sweep_checkpoint = cfg.out / "train" / "best.ckpt";
    if (auto c = ini.raw("sweep", "checkpoint")) cfg.sweep_checkpoint = resolve(base, *c);
    return cfg;
}

// ---------------------------------------------------------------------------- commands

namespace {

fs::path prep_dir(const RunConfig& cfg) { return cfg.out / "prep"; }

void claim_dir(const fs::path& dir, bool force) {
    if (fs::exists(dir / "manifest.json") && !force) {
        throw std::runtime_error("refusing to overwrite existing outputs in '" + dir.string() +
                                 "' (pass --force to replace them)");
    }
    fs::create_directories(dir);
}

void require_file(const fs::path& p, const std::string& what) {
    if (!fs::is_regular_file(p)) {
        throw std::runtime_error(what + " '" + p.string() + "' does not exist");
    }
}

ordered_json manifest_base(const RunConfig& cfg, const std::string& command) {
    ordered_json j;
    j["command"] = command;
    j["config_sha256"] = cfg.config_sha256;
    j["seed"] = cfg.seed;
    return j;
}

void write_manifest(ordered_json j, const fs::path& dir, const std::vector<std::string>& artifacts) {
    ordered_json files = ordered_json::object();
    for (const auto& name : artifacts) {
        files[name] = sha256_file(dir / name);
    }
    j["artifacts"] = files;
    std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
    out << j.dump(2) << '\n';
    if (!out) {
        throw std::runtime_error("cannot write manifest in '" + dir.string() + "'");
    }
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    for (const auto& l : lines) out << l << '\n';
    if (!out) {
        throw std::runtime_error("cannot write '" + path.string() + "'");
    }
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read '" + path.string() + "'");
    }
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    return lines;
}

std::size_t word_total(const CleanCorpus& c) {
    std::size_t n = 0;
    for (const auto& s : c.sentences) {
        std::istringstream in(s);
        for (std::string w; in >> w;) ++n;
    }
    return n;
}

// Forwards each line both to the run log file and the caller's stream.
class TeeBuf : public std::streambuf {
public:
    TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

protected:
    int overflow(int c) override {
        if (c == EOF) return 0;
        if (a_ && a_->sputc(static_cast<char>(c)) == EOF) return EOF;
        if (b_ && b_->sputc(static_cast<char>(c)) == EOF) return EOF;
        return c;
    }
    int sync() override {
        if (a_) a_->pubsync();
        if (b_) b_->pubsync();
        return 0;
    }

private:
    std::streambuf* a_;
    std::streambuf* b_;
};

TrainResult run_training(const RunConfig& cfg, const CommandOptions& opt, const std::string& name,
                         const TrainConfig& tc, const Model* start) {
    const fs::path prep = prep_dir(cfg);
    for (const char* f : {"tokenizer.tsv", "train.bin", "val.bin"}) {
        require_file(prep / f, "prepared artifact");
    }
    const fs::path dir = cfg.out / name;
    claim_dir(dir, opt.force);

    const Tokenizer tok = Tokenizer::load(prep / "tokenizer.tsv");
    const VectorizedDataset train_set = VectorizedDataset::load(prep / "train.bin");
    const VectorizedDataset val_set = VectorizedDataset::load(prep / "val.bin");

    TrainConfig run = tc;
    run.checkpoint_path = dir / "best.ckpt";
    if (fs::exists(run.checkpoint_path)) fs::remove(run.checkpoint_path);
    BatchStream train_stream(train_set, run.batch_size, run.seed);
    BatchStream val_stream(val_set, std::min(run.batch_size, val_set.rows), run.seed, false);

    std::ofstream log_file(dir / (name + ".log"), std::ios::binary | std::ios::trunc);
    TeeBuf tee(log_file.rdbuf(), opt.log ? opt.log->rdbuf() : nullptr);
    std::ostream log(&tee);

    TrainResult result;
    if (start == nullptr) {
        ModelConfig mc = cfg.model;
        mc.vocab_size = tok.vocab_size();
        try {
            mc.validate();
        } catch (const ModelError& e) {
            throw UsageError(std::string("[model] ") + e.what());
        }
        log << "building model vocab_size=" << mc.vocab_size << " seed=" << cfg.seed << '\n';
        result = train(Model::build(mc, cfg.seed), train_stream, val_stream, run, &log);
    } else {
        log << "finetuning from epoch " << start->epochs_trained << '\n';
        result = finetune(*start, train_stream, val_stream, run, &log);
    }
    log.flush();
    save_model(result.last, dir / "final.ckpt");
    result.history.save_csv(dir / "history.csv");

    ordered_json j = manifest_base(cfg, name);
    j["epochs_completed"] = result.history.epochs.size();
    j["best_epoch"] = result.history.best_epoch;
    j["best_val_loss"] = result.history.best_val_loss();
    j["early_stopped"] = result.history.early_stopped;
    write_manifest(j, dir, {"best.ckpt", "final.ckpt", "history.csv", name + ".log"});
    return result;
}

}  // namespace

void cmd_prep(const RunConfig& cfg, const CommandOptions& opt) {
    if (cfg.raw_corpus.empty()) {
        throw UsageError("[data] raw_corpus is required");
    }
    require_file(cfg.raw_corpus, "raw corpus");
    const fs::path dir = prep_dir(cfg);
    claim_dir(dir, opt.force);

    const RawDocument doc = load_document(cfg.raw_corpus);
    std::vector<std::string> raw_lines = document_lines(doc);
    CleanCorpus clean = standardize(doc);
    if (cfg.prune_empty) {
        std::vector<std::string> kept;
        for (std::size_t i = 0; i < clean.sentences.size(); ++i) {
            if (!clean.sentences[i].empty()) kept.push_back(raw_lines[i]);
        }
        raw_lines = std::move(kept);
        clean = prune_empty(clean);
    }
    const TrimResult trimmed = trim_vocabulary(clean, cfg.min_count);
    const Tokenizer tok = Tokenizer::fit(trimmed.corpus);
    const DatasetSplit split = split_dataset(trimmed.corpus, cfg.test_n, cfg.train_n, cfg.val_n);
    const std::size_t L = cfg.model.L;

    save_corpus(clean, dir / "clean.txt");
    save_corpus(trimmed.corpus, dir / "trimmed.txt");
    tok.save(dir / "tokenizer.tsv");
    encode(tok, split.train, L, cfg.truncation).save(dir / "train.bin");
    encode(tok, split.validation, L, cfg.truncation).save(dir / "val.bin");
    encode(tok, split.test, L, cfg.truncation).save(dir / "test.bin");
    write_lines(dir / "test_raw.txt",
                std::vector<std::string>(raw_lines.begin(), raw_lines.begin() + static_cast<std::ptrdiff_t>(cfg.test_n)));

    ordered_json j = manifest_base(cfg, "prep");
    j["sentences"] = clean.size();
    j["clean_words"] = word_total(clean);
    j["min_count"] = cfg.min_count;
    j["trimmed_vocabulary"] = trimmed.vocabulary.words.size();
    j["vocab_size"] = tok.vocab_size();
    j["L"] = L;
    j["test_n"] = split.test.size();
    j["train_n"] = split.train.size();
    j["val_n"] = split.validation.size();
    write_manifest(j, dir,
                   {"clean.txt", "trimmed.txt", "tokenizer.tsv", "train.bin", "val.bin", "test.bin", "test_raw.txt"});
    if (opt.log) {
        *opt.log << "prep: " << clean.size() << " sentences, vocab_size " << tok.vocab_size() << " -> " << dir.string()
                 << '\n';
    }
}

TrainResult cmd_train(const RunConfig& cfg, const CommandOptions& opt) {
    return run_training(cfg, opt, "train", cfg.train, nullptr);
}

TrainResult cmd_finetune(const RunConfig& cfg, const CommandOptions& opt) {
    require_file(cfg.finetune_from, "checkpoint");
    const Tokenizer tok = Tokenizer::load(prep_dir(cfg) / "tokenizer.tsv");
    const Model start = load_model<float>(cfg.finetune_from, tok.vocab_size());
    return run_training(cfg, opt, "finetune", cfg.finetune, &start);
}

void cmd_sweep(const RunConfig& cfg, const CommandOptions& opt) {
    if (cfg.U_grid.empty()) {
        throw UsageError("[sweep] U_grid is empty");
    }
    const fs::path prep = prep_dir(cfg);
    for (const char* f : {"tokenizer.tsv", "test.bin", "test_raw.txt"}) {
        require_file(prep / f, "prepared artifact");
    }
    require_file(cfg.sweep_checkpoint, "checkpoint");
    const fs::path dir = cfg.out / "sweep";
    claim_dir(dir, opt.force);

    const Tokenizer tok = Tokenizer::load(prep / "tokenizer.tsv");
    const Model model = load_model<float>(cfg.sweep_checkpoint, tok.vocab_size());
    const VectorizedDataset test = VectorizedDataset::load(prep / "test.bin");
    const std::vector<std::string> raw = read_lines(prep / "test_raw.txt");
    const std::size_t N = cfg.N == 0 ? test.rows : cfg.N;

    std::unique_ptr<SentenceEmbedder> embedder;
    if (cfg.embedder == "stub") {
        embedder = std::make_unique<HashProjectionEmbedder>(cfg.embedder_dim);
    } else {
        embedder = std::make_unique<ProcessEmbedder>(cfg.embedder_command);
    }
    SweepOptions so;
    so.power = cfg.power;
    so.parallelism = opt.parallelism;
    const SweepResult result =
        evaluate_sweep(model, tok, test, raw, cfg.U_grid, cfg.eta_min, N, cfg.seed, *embedder, so);

    std::vector<std::string> artifacts{"sweep.csv"};
    result.save_csv(dir / "sweep.csv");
    if (cfg.trace) {
        result.save_trace_csv(dir / "trace.csv");
        artifacts.push_back("trace.csv");
    } else if (fs::exists(dir / "trace.csv")) {
        fs::remove(dir / "trace.csv");
    }
    ordered_json j = manifest_base(cfg, "sweep");
    j["checkpoint_sha256"] = sha256_file(cfg.sweep_checkpoint);
    j["N"] = N;
    j["eta_min"] = cfg.eta_min;
    j["embedder"] = cfg.embedder;
    write_manifest(j, dir, artifacts);
    if (opt.log) {
        for (const auto& pt : result.points) {
            *opt.log << "U=" << pt.U << " p(" << cfg.eta_min << ")=" << pt.estimate.p << '\n';
        }
    }
}

// ---------------------------------------------------------------------------- plot

namespace {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::vector<double> column(const std::string& name, const fs::path& src) const {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            throw UsageError("schema error in '" + src.string() + "': missing column '" + name + "'");
        }
        const auto idx = static_cast<std::size_t>(it - header.begin());
        std::vector<double> out;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const std::string& cell = idx < rows[r].size() ? rows[r][idx] : std::string();
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (cell.empty() || *end != '\0' || !std::isfinite(v)) {
                throw UsageError("schema error in '" + src.string() + "': column '" + name + "' row " +
                                 std::to_string(r + 1) + " is not a finite number");
            }
            out.push_back(v);
        }
        return out;
    }
    bool has(const std::string& name) const { return std::find(header.begin(), header.end(), name) != header.end(); }
};

Table read_csv(const fs::path& path) {
    const auto lines = read_lines(path);
    if (lines.empty()) {
        throw UsageError("schema error in '" + path.string() + "': empty file");
    }
    Table t;
    t.header = split_on(lines[0], ',');
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream in(lines[i]);
        while (std::getline(in, cell, ',')) cells.push_back(cell);
        t.rows.push_back(std::move(cells));
    }
    return t;
}

struct Series {
    std::string name;
    std::string color;
    std::vector<double> x, y;
};

std::string fmt(double v) {
    std::ostringstream o;
    o << std::setprecision(4) << v;
    return o.str();
}

// One panel of width w, height h at (ox, oy).
void panel(std::ostream& svg, double ox, double oy, double w, double h, const std::string& title,
           const std::string& xlabel, const std::string& ylabel, const std::vector<Series>& series) {
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : series) {
        for (double v : s.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
        for (double v : s.y) y0 = std::min(y0, v), y1 = std::max(y1, v);
    }
    if (!(x1 > x0)) x0 -= 0.5, x1 += 0.5;
    if (!(y1 > y0)) y0 -= 0.5, y1 += 0.5;
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    const double l = ox + 60, r = ox + w - 20, t = oy + 30, b = oy + h - 45;
    auto X = [&](double v) { return l + (v - x0) / (x1 - x0) * (r - l); };
    auto Y = [&](double v) { return b - (v - y0) / (y1 - y0) * (b - t); };

    svg << "<text x=\"" << (l + r) / 2 << "\" y=\"" << oy + 18 << "\" text-anchor=\"middle\" font-size=\"14\">"
        << title << "</text>\n";
    svg << "<rect x=\"" << l << "\" y=\"" << t << "\" width=\"" << r - l << "\" height=\"" << b - t
        << "\" fill=\"none\" stroke=\"#333\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = x0 + (x1 - x0) * i / 4.0;
        const double yv = y0 + (y1 - y0) * i / 4.0;
        svg << "<text x=\"" << X(xv) << "\" y=\"" << b + 15 << "\" text-anchor=\"middle\" font-size=\"10\">"
            << fmt(xv) << "</text>\n";
        svg << "<text x=\"" << l - 5 << "\" y=\"" << Y(yv) + 3 << "\" text-anchor=\"end\" font-size=\"10\">"
            << fmt(yv) << "</text>\n";
        svg << "<line x1=\"" << l << "\" x2=\"" << r << "\" y1=\"" << Y(yv) << "\" y2=\"" << Y(yv)
            << "\" stroke=\"#ddd\"/>\n";
    }
    svg << "<text x=\"" << (l + r) / 2 << "\" y=\"" << b + 35 << "\" text-anchor=\"middle\" font-size=\"12\">"
        << xlabel << "</text>\n";
    svg << "<text transform=\"translate(" << ox + 14 << ',' << (t + b) / 2
        << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"12\">" << ylabel << "</text>\n";
    double ly = t + 14;
    for (const auto& s : series) {
        svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) svg << X(s.x[i]) << ',' << Y(s.y[i]) << ' ';
        svg << "\"/>\n";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            svg << "<circle cx=\"" << X(s.x[i]) << "\" cy=\"" << Y(s.y[i]) << "\" r=\"2.5\" fill=\"" << s.color
                << "\"/>\n";
        }
        svg << "<text x=\"" << r - 8 << "\" y=\"" << ly << "\" text-anchor=\"end\" font-size=\"11\" fill=\""
            << s.color << "\">" << s.name << "</text>\n";
        ly += 14;
    }
}

}  // namespace

void cmd_plot(const fs::path& csv, const fs::path& image, bool force) {
    require_file(csv, "CSV");
    if (fs::exists(image) && !force) {
        throw std::runtime_error("refusing to overwrite '" + image.string() + "' (pass --force)");
    }
    const Table t = read_csv(csv);
    std::ostringstream body;
    double height = 0;
    const double width = 640;
    if (t.has("epoch")) {
        const auto epoch = t.column("epoch", csv);
        panel(body, 0, 0, width, 320, "Training and validation loss", "epoch", "loss",
              {{"train", "#1f77b4", epoch, t.column("train_loss", csv)},
               {"validation", "#d62728", epoch, t.column("val_loss", csv)}});
        panel(body, 0, 320, width, 320, "Training and validation accuracy", "epoch", "accuracy",
              {{"train", "#1f77b4", epoch, t.column("train_acc", csv)},
               {"validation", "#d62728", epoch, t.column("val_acc", csv)}});
        height = 640;
    } else if (t.has("U")) {
        const auto U = t.column("U", csv);
        const auto p = t.column("p", csv);
        std::string title = "p vs U";
        if (t.has("eta_min") && !t.rows.empty()) title = "p(" + fmt(t.column("eta_min", csv)[0]) + ") vs U";
        panel(body, 0, 0, width, 360, title, "U (interferers)", "p", {{"p", "#2ca02c", U, p}});
        height = 360;
    } else {
        throw UsageError("schema error in '" + csv.string() + "': missing column 'epoch' or 'U'");
    }
    if (!image.parent_path().empty()) fs::create_directories(image.parent_path());
    std::ofstream out(image, std::ios::binary | std::ios::trunc);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << body.str() << "</svg>\n";
    if (!out) {
        throw std::runtime_error("cannot write '" + image.string() + "'");
    }
}

}  // namespace semcom
