#include "tbeam/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "tbeam/kernels.hpp"

namespace tbeam {

double SplitMix64::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0.0) {
        u1 = 0x1.0p-53;
    }
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::int64_t SplitMix64::range(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<std::int64_t>(next() % span);
}

// --- Vocabulary -------------------------------------------------------------

Vocabulary::Vocabulary(std::vector<std::string> tokens)
    : tokens_(std::move(tokens)) {
    if (tokens_.empty()) {
        throw std::invalid_argument("Vocabulary: empty token table");
    }
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        index_.emplace(tokens_[i], static_cast<TokenId>(i));
    }
}

TokenId Vocabulary::find(const std::string& text) const {
    const auto it = index_.find(text);
    return it == index_.end() ? kNoToken : it->second;
}

Vocabulary Vocabulary::synthetic(int size) {
    if (size < 1) {
        throw std::invalid_argument("Vocabulary::synthetic: size must be >= 1");
    }
    std::vector<std::string> tokens;
    tokens.reserve(size);
    for (int i = 0; i < size; ++i) {
        std::string body;
        int v = i;
        do {
            body.push_back(static_cast<char>('a' + v % 26));
            v /= 26;
        } while (v > 0);
        if (i % 3 == 0) {
            tokens.push_back("▁" + body);  // word-starting piece
        } else {
            tokens.push_back(body + std::to_string(i % 10));
        }
    }
    return Vocabulary(std::move(tokens));
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError(path.string(), 0, "cannot open token table");
    }
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        tokens.push_back(line);
    }
    if (tokens.empty()) {
        throw ParseError(path.string(), 0, "empty token table");
    }
    return Vocabulary(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    for (const auto& t : tokens_) {
        out << t << "\n";
    }
}

// --- context windows --------------------------------------------------------

void init_state(std::span<TokenId> window) {
    std::fill(window.begin(), window.end(), kNoToken);
}

void advance_state(std::span<TokenId> window, TokenId token, int vocab_size) {
    if (token < 0 || token >= vocab_size) {
        throw std::invalid_argument(
            "advance_state: blank or out-of-range token cannot advance the context");
    }
    if (window.empty()) {
        return;
    }
    for (std::size_t i = 0; i + 1 < window.size(); ++i) {
        window[i] = window[i + 1];
    }
    window.back() = token;
}

std::vector<TokenId> advance_state(std::vector<TokenId> window, TokenId token,
                                   int vocab_size) {
    advance_state(std::span<TokenId>(window), token, vocab_size);
    return window;
}

// --- batched scoring --------------------------------------------------------

void score_batch(const EmissionModel& model, std::span<const std::int32_t> frames,
                 std::span<const TokenId> windows, std::span<const std::uint8_t> live,
                 int beam, std::span<double> out) {
    const int n = model.context_order();
    const int row = model.vocab().size() + 1;
    const int batch = static_cast<int>(frames.size());
    if (windows.size() != static_cast<std::size_t>(batch) * beam * n ||
        live.size() != static_cast<std::size_t>(batch) * beam ||
        out.size() != static_cast<std::size_t>(batch) * beam * row) {
        throw std::invalid_argument("score_batch: inconsistent argument shapes");
    }
    for (int b = 0; b < batch; ++b) {
        for (int i = 0; i < beam; ++i) {
            const std::size_t slot = static_cast<std::size_t>(b) * beam + i;
            auto dst = out.subspan(slot * row, row);
            if (!live[slot]) {
                std::fill(dst.begin(), dst.end(), 0.0);
                continue;
            }
            if (frames[b] < 0 || frames[b] >= model.num_frames()) {
                throw std::invalid_argument("score_batch: frame index out of range");
            }
            model.score_row(frames[b], windows.subspan(slot * n, n), dst);
        }
    }
}

// --- LatticeModel -----------------------------------------------------------

std::size_t LatticeModel::KeyHash::operator()(
    const std::vector<std::int32_t>& key) const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const std::int32_t v : key) {
        h ^= static_cast<std::uint32_t>(v);
        h *= 0x100000001b3ull;
    }
    return static_cast<std::size_t>(h);
}

LatticeModel::LatticeModel(int num_frames, Vocabulary vocab, int context_order,
                           bool strict)
    : num_frames_(num_frames),
      vocab_(std::move(vocab)),
      context_order_(context_order),
      strict_(strict) {
    if (num_frames_ < 1 || context_order_ < 0) {
        throw std::invalid_argument("LatticeModel: bad dimensions");
    }
    const int row = vocab_.size() + 1;
    uniform_row_.assign(row, -std::log(static_cast<double>(row)));
}

void LatticeModel::add_row(int frame, std::span<const TokenId> window,
                           std::vector<double> log_probs) {
    if (frame < 0 || frame >= num_frames_) {
        throw ValidationError("LatticeModel::add_row: frame out of range");
    }
    if (static_cast<int>(window.size()) != context_order_) {
        throw ValidationError("LatticeModel::add_row: context size != order");
    }
    if (static_cast<int>(log_probs.size()) != vocab_.size() + 1) {
        throw ValidationError("LatticeModel::add_row: row size != |V|+1");
    }
    const double lse =
        kernels::scalar_ops().logsumexp(log_probs.data(), log_probs.size());
    if (!(std::abs(lse) <= 1e-6)) {
        throw ValidationError("LatticeModel::add_row: row is not normalized");
    }
    std::vector<std::int32_t> key;
    key.reserve(1 + window.size());
    key.push_back(frame);
    key.insert(key.end(), window.begin(), window.end());
    rows_[std::move(key)] = std::move(log_probs);
}

void LatticeModel::score_row(int frame, std::span<const TokenId> window,
                             std::span<double> out) const {
    std::vector<std::int32_t> key;
    key.reserve(1 + window.size());
    key.push_back(frame);
    key.insert(key.end(), window.begin(), window.end());
    const auto it = rows_.find(key);
    if (it == rows_.end()) {
        if (strict_) {
            std::ostringstream oss;
            oss << "LatticeModel: no row for frame " << frame << " context [";
            for (std::size_t i = 0; i < window.size(); ++i) {
                oss << (i ? " " : "") << window[i];
            }
            oss << "]";
            throw ValidationError(oss.str());
        }
        std::copy(uniform_row_.begin(), uniform_row_.end(), out.begin());
        return;
    }
    std::copy(it->second.begin(), it->second.end(), out.begin());
}

LatticeModel LatticeModel::from_json_text(const std::string& text,
                                          const std::string& source_name,
                                          bool strict) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(source_name, e.byte, std::string("bad lattice JSON: ") + e.what());
    }
    try {
        const int num_frames = doc.at("num_frames").get<int>();
        const int vocab_size = doc.at("vocab_size").get<int>();
        const int order = doc.at("context_order").get<int>();
        LatticeModel model(num_frames, Vocabulary::synthetic(vocab_size), order,
                           strict);
        std::size_t entry_no = 0;
        for (const auto& entry : doc.at("entries")) {
            ++entry_no;
            const int frame = entry.at("frame").get<int>();
            const auto context = entry.at("context").get<std::vector<std::int32_t>>();
            auto log_probs = entry.at("logprobs").get<std::vector<double>>();
            try {
                model.add_row(frame, context, std::move(log_probs));
            } catch (const ValidationError& e) {
                throw ParseError(source_name, entry_no, e.what());
            }
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(source_name, 0, std::string("bad lattice JSON: ") + e.what());
    }
}

LatticeModel LatticeModel::load(const std::filesystem::path& path, bool strict) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError(path.string(), 0, "cannot open lattice file");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str(), path.string(), strict);
}

std::string LatticeModel::to_json_text() const {
    nlohmann::json doc;
    doc["num_frames"] = num_frames_;
    doc["vocab_size"] = vocab_.size();
    doc["context_order"] = context_order_;
    auto entries = nlohmann::json::array();
    // deterministic output order for byte-stable fixtures
    std::vector<const std::vector<std::int32_t>*> keys;
    keys.reserve(rows_.size());
    for (const auto& [key, row] : rows_) {
        keys.push_back(&key);
    }
    std::sort(keys.begin(), keys.end(),
              [](const auto* a, const auto* b) { return *a < *b; });
    for (const auto* key : keys) {
        nlohmann::json entry;
        entry["frame"] = (*key)[0];
        entry["context"] =
            std::vector<std::int32_t>(key->begin() + 1, key->end());
        entry["logprobs"] = rows_.at(*key);
        entries.push_back(std::move(entry));
    }
    doc["entries"] = std::move(entries);
    return doc.dump(2) + "\n";
}

void LatticeModel::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    out << to_json_text();
}

// --- ToyModel ---------------------------------------------------------------

ToyModel::ToyModel(std::uint64_t seed, int context_order, int vocab_size,
                   int max_frames, double blank_bias)
    : seed_(seed),
      context_order_(context_order),
      max_frames_(max_frames),
      blank_bias_(blank_bias),
      vocab_(Vocabulary::synthetic(vocab_size)) {
    if (context_order < 0 || vocab_size < 1 || max_frames < 1) {
        throw std::invalid_argument("ToyModel: bad dimensions");
    }
    emb_dim_ = 16;
    hidden_dim_ = 24;
    const int rows = vocab_size + 1;

    SplitMix64 rng(seed ^ 0x7b0c8c5a9d3f2e11ull);
    const auto fill = [&rng](std::vector<double>& v, std::size_t n, double scale) {
        v.resize(n);
        for (auto& x : v) {
            x = rng.normal() * scale;
        }
    };
    fill(frame_emb_, static_cast<std::size_t>(max_frames_) * emb_dim_, 1.0);
    fill(tok_emb_, static_cast<std::size_t>(vocab_size + 1) * emb_dim_, 1.0);
    fill(w1_, static_cast<std::size_t>(hidden_dim_) * emb_dim_,
         1.0 / std::sqrt(static_cast<double>(emb_dim_)));
    fill(b1_, hidden_dim_, 0.1);
    fill(w2_, static_cast<std::size_t>(rows) * hidden_dim_,
         1.0 / std::sqrt(static_cast<double>(hidden_dim_)));
    fill(b2_, rows, 0.1);
    b2_[rows - 1] += blank_bias_;
}

void ToyModel::score_row(int frame, std::span<const TokenId> window,
                         std::span<double> out) const {
    if (frame < 0 || frame >= max_frames_) {
        throw std::invalid_argument("ToyModel::score_row: frame out of range");
    }
    if (static_cast<int>(window.size()) != context_order_) {
        throw std::invalid_argument("ToyModel::score_row: window size != order");
    }
    const auto& ops = kernels::active();
    double emb[64];
    double hidden[64];
    const double* frow = frame_emb_.data() + static_cast<std::size_t>(frame) * emb_dim_;
    std::copy_n(frow, emb_dim_, emb);
    if (context_order_ > 0) {
        const double inv = 1.0 / context_order_;
        for (const TokenId t : window) {
            const int row = (t == kNoToken) ? vocab_.size() : t;
            const double* trow = tok_emb_.data() + static_cast<std::size_t>(row) * emb_dim_;
            for (int i = 0; i < emb_dim_; ++i) {
                emb[i] += inv * trow[i];
            }
        }
    }
    ops.matvec(w1_.data(), emb, b1_.data(), hidden, hidden_dim_, emb_dim_);
    for (int i = 0; i < hidden_dim_; ++i) {
        hidden[i] = std::tanh(hidden[i]);
    }
    ops.matvec(w2_.data(), hidden, b2_.data(), out.data(), vocab_.size() + 1,
               hidden_dim_);
    ops.log_softmax(out.data(), out.size());
}

}  // namespace tbeam
