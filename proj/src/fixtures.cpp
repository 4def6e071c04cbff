#include "tbeam/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "tbeam/kernels.hpp"

namespace tbeam {

namespace {

// Every context window reachable from a fresh BOS state: fewer than n tokens
// emitted pads the front with kNoToken.
void enumerate_windows(int vocab_size, int order,
                       std::vector<std::vector<TokenId>>& out) {
    out.clear();
    for (int used = 0; used <= order; ++used) {
        std::vector<TokenId> window(order, kNoToken);
        const std::function<void(int)> rec = [&](int pos) {
            if (pos == used) {
                out.push_back(window);
                return;
            }
            for (TokenId t = 0; t < vocab_size; ++t) {
                window[order - used + pos] = t;
                rec(pos + 1);
            }
        };
        rec(0);
    }
}

}  // namespace

LatticeModel make_random_lattice(std::uint64_t seed, int frames, int vocab_size,
                                 int context_order, double peak) {
    LatticeModel model(frames, Vocabulary::synthetic(vocab_size), context_order);
    SplitMix64 rng(seed ^ 0x51c3a1ef00d5ull);
    std::vector<std::vector<TokenId>> windows;
    enumerate_windows(vocab_size, context_order, windows);
    const int row_len = vocab_size + 1;
    std::vector<double> row(row_len);
    for (int t = 0; t < frames; ++t) {
        for (const auto& window : windows) {
            for (auto& x : row) {
                x = rng.normal() * peak;
            }
            kernels::scalar_ops().log_softmax(row.data(), row.size());
            model.add_row(t, window, row);
        }
    }
    return model;
}

LatticeModel make_blank_heavy_lattice(std::uint64_t seed, int frames,
                                      int vocab_size, int context_order,
                                      double token_mass) {
    LatticeModel model(frames, Vocabulary::synthetic(vocab_size), context_order);
    SplitMix64 rng(seed ^ 0x00b1a2c3d4e5ull);
    std::vector<std::vector<TokenId>> windows;
    enumerate_windows(vocab_size, context_order, windows);
    std::vector<double> row(vocab_size + 1);
    for (int t = 0; t < frames; ++t) {
        for (const auto& window : windows) {
            const double mass = token_mass * (0.4 + 0.6 * rng.uniform());
            double rest = 0.0;
            for (int k = 0; k < vocab_size; ++k) {
                row[k] = rng.uniform() + 0.05;
                rest += row[k];
            }
            for (int k = 0; k < vocab_size; ++k) {
                row[k] = std::log(row[k] * mass / rest);
            }
            row[vocab_size] = std::log(1.0 - mass);
            kernels::scalar_ops().log_softmax(row.data(), row.size());
            model.add_row(t, window, row);
        }
    }
    return model;
}

// --- consistent random ARPA ---------------------------------------------------

namespace {

struct ArpaBuilder {
    int vocab_size = 0;
    std::vector<std::string> names;  // internal id -> string
    int eos_id = 0;
    int bos_id = 0;

    struct Entry {
        double prob = 0.0;     // linear probability
        double backoff = 1.0;  // linear backoff weight
        bool has_backoff = false;
    };
    // levels[k-1] holds the k-grams, keyed by internal-id sequences
    std::vector<std::map<std::vector<int>, Entry>> levels;

    // fully backoff-resolved P(word | ctx) of the model built so far
    double score(const std::vector<int>& ctx, int word) const {
        std::vector<int> key = ctx;
        key.push_back(word);
        const auto& level = levels[key.size() - 1];
        const auto it = level.find(key);
        if (it != level.end()) {
            return it->second.prob;
        }
        if (ctx.empty()) {
            return 0.0;
        }
        const auto& ctx_level = levels[ctx.size() - 1];
        const auto bit = ctx_level.find(ctx);
        const double bo = bit != ctx_level.end() ? bit->second.backoff : 1.0;
        return bo * score(std::vector<int>(ctx.begin() + 1, ctx.end()), word);
    }

    std::string render() const {
        std::ostringstream out;
        out.precision(12);
        out << "\\data\\\n";
        for (std::size_t k = 0; k < levels.size(); ++k) {
            out << "ngram " << (k + 1) << "=" << levels[k].size() << "\n";
        }
        out << "\n";
        for (std::size_t k = 0; k < levels.size(); ++k) {
            out << "\\" << (k + 1) << "-grams:\n";
            for (const auto& [key, e] : levels[k]) {
                if (key.size() == 1 && key.front() == bos_id) {
                    out << "-99";
                } else {
                    out << std::log10(e.prob);
                }
                for (std::size_t i = 0; i < key.size(); ++i) {
                    out << (i == 0 ? "\t" : " ") << names[key[i]];
                }
                if (e.has_backoff) {
                    out << "\t" << std::log10(e.backoff);
                }
                out << "\n";
            }
            out << "\n";
        }
        out << "\\end\\\n";
        return out.str();
    }
};

}  // namespace

std::string make_random_consistent_arpa(std::uint64_t seed, const Vocabulary& vocab,
                                        int order, bool with_eos) {
    if (order < 1) {
        throw std::invalid_argument("make_random_consistent_arpa: order must be >= 1");
    }
    SplitMix64 rng(seed ^ 0xa1b2c3d4e5f6ull);
    ArpaBuilder b;
    b.vocab_size = vocab.size();
    b.names = vocab.tokens();
    b.eos_id = vocab.size();
    b.bos_id = vocab.size() + 1;
    b.names.push_back("</s>");
    b.names.push_back("<s>");
    b.levels.resize(order);

    std::vector<int> events;
    for (int w = 0; w < b.vocab_size; ++w) {
        events.push_back(w);
    }
    if (with_eos) {
        events.push_back(b.eos_id);
    }

    // unigrams: a full random distribution; <s> carries only a backoff
    {
        std::vector<double> mass(events.size());
        double total = 0.0;
        for (auto& m : mass) {
            m = 0.2 + rng.uniform();
            total += m;
        }
        for (std::size_t i = 0; i < events.size(); ++i) {
            ArpaBuilder::Entry e;
            e.prob = mass[i] / total;
            e.has_backoff = order > 1 && events[i] != b.eos_id;
            b.levels[0][{events[i]}] = e;
        }
        if (order > 1) {
            ArpaBuilder::Entry e;
            e.prob = 1.0;  // rendered as -99
            e.has_backoff = true;
            b.levels[0][{b.bos_id}] = e;
        }
    }

    for (int k = 2; k <= order; ++k) {
        std::vector<std::vector<int>> contexts;
        for (const auto& [key, e] : b.levels[k - 2]) {
            if (key.back() != b.eos_id) {
                contexts.push_back(key);
            }
        }
        for (const auto& ctx : contexts) {
            if (rng.uniform() > 0.75 && ctx.front() != b.bos_id) {
                continue;  // leave some contexts backoff-only
            }
            std::vector<int> chosen;
            const int subset = 1 + static_cast<int>(rng.range(0, 2));
            for (int s = 0; s < subset; ++s) {
                const int w = events[static_cast<std::size_t>(
                    rng.range(0, static_cast<std::int64_t>(events.size()) - 1))];
                if (std::find(chosen.begin(), chosen.end(), w) == chosen.end()) {
                    chosen.push_back(w);
                }
            }
            const std::vector<int> suffix(ctx.begin() + 1, ctx.end());
            double lower_total = 0.0;
            std::vector<double> raw(chosen.size());
            double raw_total = 0.0;
            for (std::size_t i = 0; i < chosen.size(); ++i) {
                const double lower = b.score(suffix, chosen[i]);
                lower_total += lower;
                raw[i] = (0.5 + rng.uniform()) * lower;
                raw_total += raw[i];
            }
            if (lower_total >= 0.999 || raw_total <= 0.0) {
                continue;
            }
            const double mass = 0.3 + 0.5 * rng.uniform();
            auto& ctx_entry = b.levels[ctx.size() - 1][ctx];
            ctx_entry.backoff = (1.0 - mass) / (1.0 - lower_total);
            ctx_entry.has_backoff = true;
            for (std::size_t i = 0; i < chosen.size(); ++i) {
                ArpaBuilder::Entry e;
                e.prob = mass * raw[i] / raw_total;
                e.has_backoff = k < order && chosen[i] != b.eos_id;
                std::vector<int> key = ctx;
                key.push_back(chosen[i]);
                b.levels[k - 1][key] = e;
            }
        }
    }
    return b.render();
}

// --- deletion-trend suite -----------------------------------------------------

DeletionTrendSuite make_deletion_trend_suite() {
    // Eight streams over eight tokens; stream i alternates a token pair, and
    // the bigram LM puts 0.65 on the partner token.  Frame f's margin
    // between the correct token and the blank is staggered so that omit-mode
    // fusion tips to blank at lambda thresholds {2.6, 1.6, 0.8, 0.3},
    // ordered so deletions cascade from the back of the utterance.
    constexpr int kVocab = 8;
    constexpr int kFrames = 6;
    constexpr double kBlank = 0.22;
    constexpr double kLmPair = 0.65;
    const double ln_lm = -std::log(kLmPair);

    DeletionTrendSuite suite{Vocabulary::synthetic(kVocab), {}, {}, {}};
    const std::vector<double> lambda_star = {-1.0, 2.6, 1.6, 0.8, 0.3, 0.3};

    for (int s = 0; s < 8; ++s) {
        const int base = 2 * (s % 4);
        const TokenId w1 = s < 4 ? base : base + 1;
        const TokenId w2 = s < 4 ? base + 1 : base;

        LatticeModel lattice(kFrames, Vocabulary::synthetic(kVocab), 1);
        std::vector<TokenId> ref;
        for (int f = 0; f < kFrames; ++f) {
            const TokenId expect = (f % 2 == 0) ? w1 : w2;
            const TokenId prev = (f % 2 == 0) ? w2 : w1;
            ref.push_back(expect);

            double pc, pb;
            if (f == 0) {
                pc = 0.60;  // the <s> context margin survives the whole sweep
                pb = 0.002;
            } else {
                pb = kBlank;
                pc = pb * std::exp(ln_lm * lambda_star[f]);
            }
            const double other = (1.0 - pc - pb) / kVocab;
            std::vector<double> row(kVocab + 1, std::log(other));
            row[expect] = std::log(pc);
            row[kVocab] = std::log(pb);
            kernels::scalar_ops().log_softmax(row.data(), row.size());

            lattice.add_row(f, std::vector<TokenId>(1, f == 0 ? kNoToken : prev),
                            row);

            // once the frame's token is out, the row turns blank-heavy
            std::vector<double> done(kVocab + 1, std::log(0.1 / kVocab));
            done[kVocab] = std::log(0.9);
            kernels::scalar_ops().log_softmax(done.data(), done.size());
            lattice.add_row(f, std::vector<TokenId>(1, expect), done);
        }
        suite.lattices.push_back(std::move(lattice));
        suite.ref_tokens.push_back(std::move(ref));
    }

    // bigram LM: P(partner | token) = 0.65, P(w | <s>) = 0.1, consistent
    // backoff weights by construction
    std::ostringstream arpa;
    arpa.precision(12);
    const double p1_tok = 0.1125;  // 8 tokens + </s> at 0.1 sum to 1
    const double p1_eos = 0.1;
    const double bo_tok = (1.0 - kLmPair) / (1.0 - p1_tok);
    const double bo_bos = (1.0 - 8 * 0.1) / (1.0 - 8 * p1_tok);
    const auto& vocab = suite.vocab;
    arpa << "\\data\\\n"
         << "ngram 1=" << (kVocab + 2) << "\n"
         << "ngram 2=" << (kVocab + 8) << "\n\n";
    arpa << "\\1-grams:\n";
    for (int w = 0; w < kVocab; ++w) {
        arpa << std::log10(p1_tok) << "\t" << vocab.token(w) << "\t"
             << std::log10(bo_tok) << "\n";
    }
    arpa << std::log10(p1_eos) << "\t</s>\n";
    arpa << "-99\t<s>\t" << std::log10(bo_bos) << "\n";
    arpa << "\n\\2-grams:\n";
    for (int i = 0; i < 4; ++i) {
        const int a = 2 * i;
        const int b = 2 * i + 1;
        arpa << std::log10(kLmPair) << "\t" << vocab.token(a) << " "
             << vocab.token(b) << "\n";
        arpa << std::log10(kLmPair) << "\t" << vocab.token(b) << " "
             << vocab.token(a) << "\n";
    }
    for (int w = 0; w < kVocab; ++w) {
        arpa << std::log10(0.1) << "\t<s> " << vocab.token(w) << "\n";
    }
    arpa << "\n\\end\\\n";
    suite.arpa_text = arpa.str();
    return suite;
}

// --- early vs late pruning fixture ---------------------------------------------

EarlyLateFixture make_early_late_fixture() {
    EarlyLateFixture fx{Vocabulary::synthetic(2),
                        LatticeModel(1, Vocabulary::synthetic(2), 1),
                        "",
                        1.0,
                        {0},
                        {1}};
    // ASR ranks a > b > blank; the LM strongly prefers b.
    std::vector<double> start = {std::log(0.55), std::log(0.35), std::log(0.10)};
    kernels::scalar_ops().log_softmax(start.data(), start.size());
    fx.lattice.add_row(0, std::vector<TokenId>(1, kNoToken), start);
    for (TokenId t = 0; t < 2; ++t) {
        std::vector<double> done = {std::log(0.015), std::log(0.015), std::log(0.97)};
        kernels::scalar_ops().log_softmax(done.data(), done.size());
        fx.lattice.add_row(0, std::vector<TokenId>(1, t), done);
    }
    std::ostringstream arpa;
    arpa.precision(12);
    arpa << "\\data\\\nngram 1=4\n\n\\1-grams:\n";
    arpa << std::log10(0.05) << "\t" << fx.vocab.token(0) << "\n";
    arpa << std::log10(0.90) << "\t" << fx.vocab.token(1) << "\n";
    arpa << std::log10(0.05) << "\t</s>\n";
    arpa << "-99\t<s>\n";
    arpa << "\n\\end\\\n";
    fx.arpa_text = arpa.str();
    return fx;
}

}  // namespace tbeam
