#include "semcom/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "semcom/rng.hpp"

namespace semcom {

namespace {

const icu::Normalizer2& nfc() {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* n = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status) || n == nullptr) {
        throw CorpusError("unicode: NFC normalizer unavailable");
    }
    return *n;
}

icu::UnicodeString normalized(const icu::UnicodeString& s) {
    UErrorCode status = U_ZERO_ERROR;
    icu::UnicodeString out = nfc().normalize(s, status);
    if (U_FAILURE(status)) {
        throw CorpusError("unicode: normalization failed");
    }
    return out;
}

bool is_separator(UChar32 c) { return u_isUWhiteSpace(c) || u_isWhitespace(c); }

// Punctuation, symbols, and control/format/unassigned code points are stripped from tokens.
bool is_stripped(UChar32 c) {
    const auto mask = U_GET_GC_MASK(c);
    return (mask & (U_GC_P_MASK | U_GC_S_MASK | U_GC_C_MASK)) != 0;
}

// Returns the cleaned token, or empty when the token must be dropped.
std::string clean_token(const icu::UnicodeString& raw) {
    icu::UnicodeString lowered(raw);
    lowered.toLower(icu::Locale::getRoot());
    lowered = normalized(lowered);

    icu::UnicodeString kept;
    for (int32_t i = 0; i < lowered.length();) {
        const UChar32 c = lowered.char32At(i);
        if (!is_stripped(c)) {
            kept.append(c);
        }
        i += U16_LENGTH(c);
    }
    for (int32_t i = 0; i < kept.length();) {
        const UChar32 c = kept.char32At(i);
        if ((U_GET_GC_MASK(c) & U_GC_N_MASK) != 0 || !u_isalpha(c)) {
            return {};
        }
        i += U16_LENGTH(c);
    }
    std::string out;
    kept.toUTF8String(out);
    return out;
}

std::vector<std::string_view> split_words(std::string_view sentence) {
    std::vector<std::string_view> words;
    std::size_t pos = 0;
    while (pos < sentence.size()) {
        const auto end = sentence.find(' ', pos);
        const auto stop = end == std::string_view::npos ? sentence.size() : end;
        if (stop > pos) {
            words.push_back(sentence.substr(pos, stop - pos));
        }
        pos = stop + 1;
    }
    return words;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        if (nl == std::string::npos) {
            if (pos < text.size()) {
                lines.push_back(text.substr(pos));
            }
            break;
        }
        lines.push_back(text.substr(pos, nl - pos));
        pos = nl + 1;
    }
    return lines;
}

constexpr char kDatasetMagic[4] = {'S', 'C', 'D', 'S'};
constexpr std::uint32_t kDatasetVersion = 1;

}  // namespace

RawDocument load_document(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CorpusError("cannot open document '" + path.string() + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) {
        throw CorpusError("read failed for '" + path.string() + "'");
    }
    RawDocument doc{buf.str()};
    if (doc.text.empty()) {
        throw CorpusError("empty document '" + path.string() + "'");
    }
    return doc;
}

std::string standardize_sentence(std::string_view line) {
    const icu::UnicodeString text =
        normalized(icu::UnicodeString::fromUTF8(icu::StringPiece(line.data(), static_cast<int32_t>(line.size()))));

    std::string out;
    icu::UnicodeString token;
    auto flush = [&] {
        if (token.isEmpty()) {
            return;
        }
        std::string cleaned = clean_token(token);
        token.remove();
        if (cleaned.empty()) {
            return;
        }
        if (!out.empty()) {
            out.push_back(' ');
        }
        out += cleaned;
    };
    for (int32_t i = 0; i < text.length();) {
        const UChar32 c = text.char32At(i);
        if (is_separator(c)) {
            flush();
        } else {
            token.append(c);
        }
        i += U16_LENGTH(c);
    }
    flush();
    return out;
}

std::vector<std::string> document_lines(const RawDocument& doc) { return split_lines(doc.text); }

CleanCorpus standardize(const RawDocument& doc) {
    CleanCorpus corpus;
    for (const auto& line : split_lines(doc.text)) {
        corpus.sentences.push_back(standardize_sentence(line));
    }
    return corpus;
}

CleanCorpus prune_empty(const CleanCorpus& corpus) {
    CleanCorpus out;
    std::copy_if(corpus.sentences.begin(), corpus.sentences.end(), std::back_inserter(out.sentences),
                 [](const std::string& s) { return !s.empty(); });
    return out;
}

TrimResult trim_vocabulary(const CleanCorpus& corpus, std::size_t min_count) {
    if (min_count < 1) {
        throw CorpusError("min_count must be >= 1");
    }
    std::unordered_map<std::string_view, std::size_t> counts;
    for (const auto& s : corpus.sentences) {
        for (auto w : split_words(s)) {
            ++counts[w];
        }
    }

    TrimResult result;
    result.vocabulary.min_count = min_count;
    for (const auto& [word, n] : counts) {
        if (n >= min_count) {
            result.vocabulary.words.emplace(word);
        }
    }

    bool replaced = false;
    result.corpus.sentences.reserve(corpus.size());
    for (const auto& s : corpus.sentences) {
        std::string trimmed;
        for (auto w : split_words(s)) {
            if (!trimmed.empty()) {
                trimmed.push_back(' ');
            }
            if (counts[w] >= min_count) {
                trimmed += w;
            } else {
                trimmed += result.vocabulary.unk_token;
                replaced = true;
            }
        }
        result.corpus.sentences.push_back(std::move(trimmed));
    }
    if (replaced) {
        result.vocabulary.words.insert(result.vocabulary.unk_token);
    }
    return result;
}

DatasetSplit split_dataset(const CleanCorpus& corpus, std::size_t test_n, std::size_t train_n, std::size_t val_n) {
    const std::size_t need = test_n + train_n + val_n;
    if (need > corpus.size()) {
        throw CorpusError("split needs " + std::to_string(need) + " sentences but corpus has " +
                          std::to_string(corpus.size()));
    }
    auto slice = [&](std::size_t from, std::size_t n) {
        CleanCorpus c;
        c.sentences.assign(corpus.sentences.begin() + static_cast<std::ptrdiff_t>(from),
                           corpus.sentences.begin() + static_cast<std::ptrdiff_t>(from + n));
        return c;
    };
    return {slice(0, test_n), slice(test_n, train_n), slice(test_n + train_n, val_n)};
}

Tokenizer Tokenizer::fit(const CleanCorpus& corpus) {
    struct Stat {
        std::size_t count = 0;
        std::size_t first = 0;
    };
    std::unordered_map<std::string_view, Stat> stats;
    std::size_t seen = 0;
    for (const auto& s : corpus.sentences) {
        for (auto w : split_words(s)) {
            auto [it, inserted] = stats.try_emplace(w, Stat{0, seen});
            ++it->second.count;
            ++seen;
        }
    }
    if (stats.empty()) {
        throw CorpusError("cannot fit tokenizer on a corpus with no words");
    }

    std::vector<std::pair<std::string_view, Stat>> ordered(stats.begin(), stats.end());
    std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
        if (a.second.count != b.second.count) {
            return a.second.count > b.second.count;
        }
        return a.second.first < b.second.first;
    });

    Tokenizer tok;
    tok.index_to_word_.reserve(ordered.size());
    for (const auto& [word, stat] : ordered) {
        tok.index_to_word_.emplace_back(word);
        tok.word_to_index_.emplace(std::string(word), static_cast<std::int32_t>(tok.index_to_word_.size()));
    }
    return tok;
}

std::optional<std::int32_t> Tokenizer::index_of(std::string_view word) const {
    auto it = word_to_index_.find(word);
    if (it == word_to_index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::optional<std::string_view> Tokenizer::word_at(std::int64_t index) const {
    if (index < 1 || static_cast<std::size_t>(index) > index_to_word_.size()) {
        return std::nullopt;
    }
    return index_to_word_[static_cast<std::size_t>(index - 1)];
}

void Tokenizer::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw CorpusError("cannot write tokenizer '" + path.string() + "'");
    }
    out << "vocab_size\t" << vocab_size() << '\n';
    for (std::size_t i = 0; i < index_to_word_.size(); ++i) {
        out << index_to_word_[i] << '\t' << (i + 1) << '\n';
    }
    if (!out) {
        throw CorpusError("write failed for tokenizer '" + path.string() + "'");
    }
}

Tokenizer Tokenizer::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CorpusError("cannot open tokenizer '" + path.string() + "'");
    }
    std::string line;
    if (!std::getline(in, line) || line.rfind("vocab_size\t", 0) != 0) {
        throw CorpusError("tokenizer '" + path.string() + "': missing vocab_size header");
    }
    const std::size_t declared = std::stoull(line.substr(11));

    Tokenizer tok;
    while (std::getline(in, line)) {
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw CorpusError("tokenizer '" + path.string() + "': malformed entry '" + line + "'");
        }
        const std::string word = line.substr(0, tab);
        const long long index = std::stoll(line.substr(tab + 1));
        if (index != static_cast<long long>(tok.index_to_word_.size() + 1)) {
            throw CorpusError("tokenizer '" + path.string() + "': non-contiguous index " + std::to_string(index));
        }
        tok.index_to_word_.push_back(word);
        if (!tok.word_to_index_.emplace(word, static_cast<std::int32_t>(index)).second) {
            throw CorpusError("tokenizer '" + path.string() + "': duplicate word '" + word + "'");
        }
    }
    if (tok.vocab_size() != declared) {
        throw CorpusError("tokenizer '" + path.string() + "': header vocab_size " + std::to_string(declared) +
                          " but " + std::to_string(tok.word_count()) + " entries");
    }
    return tok;
}

VectorizedDataset encode(const Tokenizer& tok, const CleanCorpus& corpus, std::size_t length, Truncation truncation) {
    if (length == 0) {
        throw CorpusError("sentence length L must be >= 1");
    }
    VectorizedDataset ds;
    ds.rows = corpus.size();
    ds.length = length;
    ds.vocab_size = tok.vocab_size();
    ds.inputs.assign(ds.rows * length, 0);

    std::vector<std::int32_t> seq;
    for (std::size_t r = 0; r < corpus.size(); ++r) {
        seq.clear();
        for (auto w : split_words(corpus.sentences[r])) {
            auto idx = tok.index_of(w);
            if (!idx) {
                throw CorpusError("encode: word '" + std::string(w) + "' is not in the tokenizer");
            }
            seq.push_back(*idx);
        }
        std::size_t from = 0;
        if (seq.size() > length && truncation == Truncation::keep_tail) {
            from = seq.size() - length;
        }
        const std::size_t n = std::min(seq.size(), length);
        std::copy_n(seq.begin() + static_cast<std::ptrdiff_t>(from), n, ds.inputs.begin() + static_cast<std::ptrdiff_t>(r * length));
    }
    return ds;
}

std::vector<std::uint8_t> one_hot_labels(std::span<const std::int32_t> X, std::size_t vocab_size) {
    std::vector<std::uint8_t> Y(X.size() * vocab_size, 0);
    for (std::size_t i = 0; i < X.size(); ++i) {
        if (X[i] < 0 || static_cast<std::size_t>(X[i]) >= vocab_size) {
            throw CorpusError("one_hot_labels: index " + std::to_string(X[i]) + " outside [0, " +
                              std::to_string(vocab_size) + ")");
        }
        Y[i * vocab_size + static_cast<std::size_t>(X[i])] = 1;
    }
    return Y;
}

void VectorizedDataset::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw CorpusError("cannot write dataset '" + path.string() + "'");
    }
    const std::uint64_t header[3] = {rows, length, vocab_size};
    out.write(kDatasetMagic, sizeof kDatasetMagic);
    out.write(reinterpret_cast<const char*>(&kDatasetVersion), sizeof kDatasetVersion);
    out.write(reinterpret_cast<const char*>(header), sizeof header);
    out.write(reinterpret_cast<const char*>(inputs.data()), static_cast<std::streamsize>(inputs.size() * sizeof(std::int32_t)));
    if (!out) {
        throw CorpusError("write failed for dataset '" + path.string() + "'");
    }
}

VectorizedDataset VectorizedDataset::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CorpusError("cannot open dataset '" + path.string() + "'");
    }
    char magic[4] = {};
    std::uint32_t version = 0;
    std::uint64_t header[3] = {};
    in.read(magic, sizeof magic);
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    in.read(reinterpret_cast<char*>(header), sizeof header);
    if (!in || !std::equal(std::begin(magic), std::end(magic), std::begin(kDatasetMagic))) {
        throw CorpusError("dataset '" + path.string() + "': bad header");
    }
    if (version != kDatasetVersion) {
        throw CorpusError("dataset '" + path.string() + "': unsupported version " + std::to_string(version));
    }
    VectorizedDataset ds;
    ds.rows = header[0];
    ds.length = header[1];
    ds.vocab_size = header[2];
    ds.inputs.resize(ds.rows * ds.length);
    in.read(reinterpret_cast<char*>(ds.inputs.data()), static_cast<std::streamsize>(ds.inputs.size() * sizeof(std::int32_t)));
    if (!in || in.peek() != std::char_traits<char>::eof()) {
        throw CorpusError("dataset '" + path.string() + "': payload size does not match header");
    }
    return ds;
}

BatchStream::BatchStream(const VectorizedDataset& data, std::size_t batch_size, std::uint64_t shuffle_seed, bool shuffle)
    : data_(&data), batch_size_(batch_size), seed_(shuffle_seed), shuffle_(shuffle) {
    if (batch_size == 0) {
        throw CorpusError("batch size must be >= 1");
    }
    if (batch_size > data.rows) {
        throw CorpusError("batch size " + std::to_string(batch_size) + " exceeds dataset size " +
                          std::to_string(data.rows));
    }
}

void BatchStream::begin_epoch() {
    if (started_) {
        ++epoch_;
    }
    started_ = true;
    cursor_ = 0;
    order_.resize(data_->rows);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (shuffle_) {
        auto rng = make_rng(seed_, {stream::kShuffle, epoch_});
        std::shuffle(order_.begin(), order_.end(), rng);
    }
}

bool BatchStream::next(LabeledBatch& out) {
    if (!started_) {
        begin_epoch();
    }
    if (cursor_ + batch_size_ > order_.size()) {
        return false;
    }
    const std::size_t L = data_->length;
    out.batch = batch_size_;
    out.length = L;
    out.vocab_size = data_->vocab_size;
    out.X.resize(batch_size_ * L);
    for (std::size_t b = 0; b < batch_size_; ++b) {
        auto r = data_->row(order_[cursor_ + b]);
        std::copy(r.begin(), r.end(), out.X.begin() + static_cast<std::ptrdiff_t>(b * L));
    }
    out.Y = one_hot_labels(out.X, data_->vocab_size);
    cursor_ += batch_size_;
    return true;
}

void save_corpus(const CleanCorpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw CorpusError("cannot write corpus '" + path.string() + "'");
    }
    for (const auto& s : corpus.sentences) {
        out << s << '\n';
    }
}

CleanCorpus load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CorpusError("cannot open corpus '" + path.string() + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return CleanCorpus{split_lines(buf.str())};
}

}  // namespace semcom
