#include "tbeam/decoder.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "tbeam/hyp_store.hpp"
#include "tbeam/kernels.hpp"
#include "tbeam/parallel.hpp"

namespace tbeam {

namespace {

void validate_streams(std::span<const StreamInput> streams,
                      const DecodeConfig& cfg) {
    if (streams.empty()) {
        throw std::invalid_argument("decode: no streams");
    }
    for (const auto& s : streams) {
        if (s.model == nullptr || s.num_frames < 1 ||
            s.num_frames > s.model->num_frames()) {
            throw std::invalid_argument("decode: bad stream input");
        }
    }
    if (cfg.beam < 1 || cfg.max_symbols_per_frame < 1 ||
        cfg.aes_expansions_per_frame < 0 || cfg.max_len < 1 ||
        cfg.return_nbest < 1) {
        throw std::invalid_argument("decode: bad config");
    }
    if (cfg.fusion.lambda < 0.0) {
        throw std::invalid_argument("decode: negative LM weight");
    }
    if (cfg.fusion.lambda > 0.0 && cfg.lm == nullptr) {
        throw std::invalid_argument("decode: LM weight set but no LM given");
    }
}

bool uses_lm(const DecodeConfig& cfg) {
    return cfg.lm != nullptr && cfg.fusion.lambda > 0.0;
}

// Selection-stage row: the late schedule fuses the full LM row in before
// pruning; the early schedule keeps token entries ASR-only (the per-token LM
// terms join after selection) but still applies the LM-free blank scoring.
void selection_row(std::span<const double> asr, std::span<const double> lm_row,
                   const DecodeConfig& cfg, std::span<double> out) {
    if (!uses_lm(cfg)) {
        std::copy(asr.begin(), asr.end(), out.begin());
        return;
    }
    if (cfg.fusion.pruning == PruneMode::kLate) {
        fuse_row(asr, lm_row, cfg.fusion, out);
        return;
    }
    std::copy(asr.begin(), asr.end(), out.begin());
    if (cfg.fusion.blank_mode == BlankMode::kScored) {
        out.back() = (1.0 + cfg.fusion.lambda) * asr.back();
    }
}

// LM term a token expansion earns after early-schedule selection.
double early_token_lm_term(const NGramLm& lm, NGramLm::State state, TokenId token,
                           double asr_blank, const FusionConfig& cfg) {
    double term = lm.score_token(state, token);
    if (cfg.blank_mode == BlankMode::kScored) {
        term += log1mexp(asr_blank);
    }
    return cfg.lambda * term;
}

// --- batched beam engine ----------------------------------------------------

class BeamEngine {
public:
    BeamEngine(std::span<const StreamInput> streams, const DecodeConfig& cfg,
               bool aes)
        : streams_(streams),
          cfg_(cfg),
          aes_(aes),
          batch_(static_cast<int>(streams.size())),
          store_(batch_, cfg.beam, cfg.max_len, cfg.hash_params) {}

    DecodeResult run() {
        DecodeResult result;
        result.streams.resize(batch_);
        const auto start = std::chrono::steady_clock::now();
        parallel_for(batch_, [this, &result](int b) { run_lane(b, result.streams[b]); });
        result.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                .count();
        return result;
    }

private:
    void run_lane(int b, StreamResult& out);

    std::span<const StreamInput> streams_;
    const DecodeConfig& cfg_;
    bool aes_;
    int batch_;
    BatchedBeamHyps store_;
};

void BeamEngine::run_lane(int b, StreamResult& out) {
    const EmissionModel& model = *streams_[b].model;
    const int frames = streams_[b].num_frames;
    const int beam = cfg_.beam;
    const int v = model.vocab().size();
    const int row_len = v + 1;
    const int n = model.context_order();
    const bool with_lm = uses_lm(cfg_);
    const bool late = with_lm && cfg_.fusion.pruning == PruneMode::kLate;
    const bool early = with_lm && cfg_.fusion.pruning == PruneMode::kEarly;
    const NGramLm* lm = cfg_.lm;
    const auto& ops = kernels::active();
    Counters& ctr = out.counters;

    std::vector<TokenId> win(static_cast<std::size_t>(beam) * n, kNoToken);
    std::vector<TokenId> new_win(win.size());
    std::vector<std::uint8_t> complete(beam, 0);
    std::vector<std::uint8_t> new_complete(beam, 0);
    std::vector<std::uint8_t> donated(beam, 0);
    LmStateBatch lm_states(beam, with_lm ? lm->initial_state() : 0);
    LmStateBatch new_lm_states(beam, 0);
    NGramLm::Scratch lm_scratch;

    std::vector<double> emis(static_cast<std::size_t>(beam) * row_len);
    std::vector<double> lm_rows(late ? static_cast<std::size_t>(beam) * v : 0);
    std::vector<double> fused(static_cast<std::size_t>(beam) * row_len);
    std::vector<double> cand(static_cast<std::size_t>(beam) * row_len);
    std::vector<std::int32_t> sel_idx(beam);
    std::vector<double> sel_scores(beam);
    std::vector<std::int32_t> parents(beam);
    std::vector<TokenId> tokens(beam);
    std::vector<double> deltas(beam);

    const int rounds_per_frame =
        aes_ ? cfg_.aes_expansions_per_frame + 1 : cfg_.max_symbols_per_frame;
    const int token_rounds = rounds_per_frame - 1;

    for (int t = 0; t < frames; ++t) {
        std::fill(complete.begin(), complete.end(), 0);
        std::fill(donated.begin(), donated.end(), 0);
        for (int r = 0; r < rounds_per_frame; ++r) {
            bool any_active = false;
            for (int i = 0; i < beam; ++i) {
                if (store_.alive(b, i) && !complete[i]) {
                    any_active = true;
                    break;
                }
            }
            if (!any_active) {
                break;
            }
            const bool tokens_allowed = r < token_rounds;

            // score + selection rows for mid-frame slots
            for (int i = 0; i < beam; ++i) {
                if (!store_.alive(b, i) || complete[i]) {
                    continue;
                }
                const auto asr = std::span<double>(emis).subspan(
                    static_cast<std::size_t>(i) * row_len, row_len);
                model.score_row(t, std::span<const TokenId>(win).subspan(
                                       static_cast<std::size_t>(i) * n, n),
                                asr);
                ++ctr.scored_slots;
                std::span<const double> lm_row;
                if (late) {
                    const auto dst = std::span<double>(lm_rows).subspan(
                        static_cast<std::size_t>(i) * v, v);
                    lm->score_vocab(lm_states[i], dst, lm_scratch);
                    ++ctr.lm_vocab_queries;
                    lm_row = dst;
                }
                selection_row(asr, lm_row, cfg_,
                              std::span<double>(fused).subspan(
                                  static_cast<std::size_t>(i) * row_len, row_len));
            }
            ++ctr.scoring_rounds;

            // maximum-length prefix combination, once per frame before the
            // first expansion
            if (aes_ && cfg_.aes_prefix_search && r == 0) {
                struct Edge {
                    std::int32_t donor;
                    std::int32_t receiver;
                };
                std::vector<Edge> edges;
                for (int a = 0; a < beam; ++a) {
                    if (!store_.alive(b, a)) continue;
                    for (int c = 0; c < beam; ++c) {
                        if (c == a || !store_.alive(b, c)) continue;
                        if (store_.length(b, c) != store_.length(b, a) + 1) continue;
                        const TokenId last = store_.last_token(b, c);
                        const HypKey extended{
                            update_hash(store_.hash(b, a), last, store_.hash_params()),
                            store_.length(b, a) + 1, last};
                        if (extended == store_.key(b, c)) {
                            edges.push_back({a, c});
                        }
                    }
                }
                std::sort(edges.begin(), edges.end(), [&](const Edge& x, const Edge& y) {
                    const auto kx = std::make_tuple(store_.length(b, x.receiver),
                                                    x.receiver, x.donor);
                    const auto ky = std::make_tuple(store_.length(b, y.receiver),
                                                    y.receiver, y.donor);
                    return kx < ky;
                });
                for (const Edge& e : edges) {
                    const TokenId last = store_.last_token(b, e.receiver);
                    double donation =
                        store_.score(b, e.donor) +
                        fused[static_cast<std::size_t>(e.donor) * row_len + last];
                    if (early) {
                        donation += early_token_lm_term(
                            *lm, lm_states[e.donor], last,
                            emis[static_cast<std::size_t>(e.donor) * row_len + v],
                            cfg_.fusion);
                        ++ctr.lm_token_queries;
                    }
                    store_.set_score(b, e.receiver,
                                     logadd(store_.score(b, e.receiver), donation));
                    donated[e.donor] = 1;
                }
            }

            // candidate scores: slot-major, blank (= carry) last per slot
            for (int i = 0; i < beam; ++i) {
                const auto c = std::span<double>(cand).subspan(
                    static_cast<std::size_t>(i) * row_len, row_len);
                if (!store_.alive(b, i)) {
                    std::fill(c.begin(), c.end(), kNegInf);
                    continue;
                }
                const double base = store_.score(b, i);
                if (complete[i]) {
                    std::fill(c.begin(), c.end(), kNegInf);
                    c[v] = base;
                    continue;
                }
                const bool allow_tokens = tokens_allowed && !donated[i] &&
                                          store_.length(b, i) < cfg_.max_len;
                if (allow_tokens) {
                    ops.add_scalar(&fused[static_cast<std::size_t>(i) * row_len], base,
                                   c.data(), v);
                } else {
                    std::fill(c.begin(), c.begin() + v, kNegInf);
                }
                c[v] = base + fused[static_cast<std::size_t>(i) * row_len + v];
            }

            // merge: a hypothesis that finishes this frame with transcript X
            // collides only with another one finishing with transcript X, so
            // the blank/carry column pairs up by HypKey in Beam x Beam
            // integer comparisons
            for (int i = 0; i < beam; ++i) {
                if (!store_.alive(b, i) ||
                    cand[static_cast<std::size_t>(i) * row_len + v] == kNegInf) {
                    continue;
                }
                for (int j = i + 1; j < beam; ++j) {
                    if (!store_.alive(b, j) ||
                        cand[static_cast<std::size_t>(j) * row_len + v] == kNegInf) {
                        continue;
                    }
                    if (store_.key(b, i) == store_.key(b, j)) {
                        auto& left = cand[static_cast<std::size_t>(i) * row_len + v];
                        auto& right = cand[static_cast<std::size_t>(j) * row_len + v];
                        left = logadd(left, right);
                        right = kNegInf;
                    }
                }
            }

            prune_topk(cand, beam, sel_idx, sel_scores);

            // turn the selection into an expansion step + aux permutation
            for (int j = 0; j < beam; ++j) {
                const std::int32_t idx = sel_idx[j];
                const int p = idx / row_len;
                const int k = idx % row_len;
                double s = sel_scores[j];
                parents[j] = p;
                const auto src_win = std::span<const TokenId>(win).subspan(
                    static_cast<std::size_t>(p) * n, n);
                const auto dst_win = std::span<TokenId>(new_win).subspan(
                    static_cast<std::size_t>(j) * n, n);
                if (s == kNegInf) {
                    tokens[j] = kNoToken;
                    deltas[j] = kNegInf;
                    new_complete[j] = 1;
                    std::copy(src_win.begin(), src_win.end(), dst_win.begin());
                    new_lm_states[j] = lm_states[p];
                    continue;
                }
                if (k == v) {
                    tokens[j] = kNoToken;
                    new_complete[j] = 1;
                    std::copy(src_win.begin(), src_win.end(), dst_win.begin());
                    new_lm_states[j] = lm_states[p];
                } else {
                    tokens[j] = static_cast<TokenId>(k);
                    new_complete[j] = 0;
                    if (early) {
                        s += early_token_lm_term(
                            *lm, lm_states[p], k,
                            emis[static_cast<std::size_t>(p) * row_len + v],
                            cfg_.fusion);
                        ++ctr.lm_token_queries;
                    }
                    std::copy(src_win.begin(), src_win.end(), dst_win.begin());
                    advance_state(dst_win, k, v);
                    new_lm_states[j] = with_lm ? lm->advance(lm_states[p], k) : 0;
                }
                deltas[j] = s - store_.score(b, p);
            }
            store_.expand_stream(b, parents, tokens, deltas);
            win.swap(new_win);
            complete.swap(new_complete);
            lm_states.swap(new_lm_states);
        }
        ++ctr.frames;
    }

    if (with_lm && cfg_.fusion.eos_enabled) {
        for (int i = 0; i < beam; ++i) {
            if (store_.alive(b, i)) {
                store_.set_score(b, i, store_.score(b, i) +
                                           cfg_.fusion.lambda *
                                               lm->score_eos(lm_states[i]));
                ++ctr.lm_token_queries;
            }
        }
    }

    std::vector<std::pair<double, int>> ranked;
    for (int i = 0; i < beam; ++i) {
        if (store_.alive(b, i)) {
            ranked.emplace_back(store_.score(b, i), i);
        }
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& c) {
        if (a.first != c.first) return a.first > c.first;
        return a.second < c.second;
    });
    const int take = std::min<int>(cfg_.return_nbest, static_cast<int>(ranked.size()));
    out.nbest.reserve(take);
    for (int r = 0; r < take; ++r) {
        out.nbest.push_back(
            {store_.retrieve_transcript(b, ranked[r].second), ranked[r].first});
    }
}

// --- greedy -----------------------------------------------------------------

void greedy_lane(const StreamInput& stream, const DecodeConfig& cfg,
                 StreamResult& out) {
    const EmissionModel& model = *stream.model;
    const int v = model.vocab().size();
    const int row_len = v + 1;
    const int n = model.context_order();
    const bool with_lm = uses_lm(cfg);
    const bool late = with_lm && cfg.fusion.pruning == PruneMode::kLate;
    const bool early = with_lm && cfg.fusion.pruning == PruneMode::kEarly;
    const NGramLm* lm = cfg.lm;
    const auto& ops = kernels::active();
    Counters& ctr = out.counters;

    std::vector<TokenId> win(n, kNoToken);
    NGramLm::State lm_state = with_lm ? lm->initial_state() : 0;
    NGramLm::Scratch lm_scratch;
    std::vector<double> emis(row_len);
    std::vector<double> lm_row(late ? v : 0);
    std::vector<double> fused(row_len);
    std::vector<double> cand(row_len);

    std::vector<TokenId> transcript;
    double total = 0.0;
    const int token_rounds = cfg.max_symbols_per_frame - 1;

    for (int t = 0; t < stream.num_frames; ++t) {
        for (int r = 0; r < cfg.max_symbols_per_frame; ++r) {
            model.score_row(t, win, emis);
            ++ctr.scored_slots;
            ++ctr.scoring_rounds;
            if (late) {
                lm->score_vocab(lm_state, lm_row, lm_scratch);
                ++ctr.lm_vocab_queries;
            }
            selection_row(emis, lm_row, cfg, fused);
            ops.add_scalar(fused.data(), total, cand.data(), row_len);
            const bool tokens_allowed =
                r < token_rounds && static_cast<int>(transcript.size()) < cfg.max_len;
            const int k = tokens_allowed
                              ? static_cast<int>(ops.argmax(cand.data(), row_len))
                              : v;
            // the same base + (s - base) arithmetic the beam engine applies
            double s = cand[k];
            if (k == v) {
                total = total + (s - total);
                break;
            }
            if (early) {
                s += early_token_lm_term(*lm, lm_state, k, emis[v], cfg.fusion);
                ++ctr.lm_token_queries;
            }
            total = total + (s - total);
            transcript.push_back(static_cast<TokenId>(k));
            advance_state(std::span<TokenId>(win), k, v);
            if (with_lm) {
                lm_state = lm->advance(lm_state, k);
            }
        }
        ++ctr.frames;
    }
    if (with_lm && cfg.fusion.eos_enabled) {
        total += cfg.fusion.lambda * lm->score_eos(lm_state);
        ++ctr.lm_token_queries;
    }
    out.nbest.push_back({std::move(transcript), total});
}

}  // namespace

DecodeResult greedy_batched(std::span<const StreamInput> streams,
                            const DecodeConfig& cfg) {
    validate_streams(streams, cfg);
    DecodeResult result;
    result.streams.resize(streams.size());
    const auto start = std::chrono::steady_clock::now();
    parallel_for(static_cast<int>(streams.size()), [&](int b) {
        greedy_lane(streams[b], cfg, result.streams[b]);
    });
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    return result;
}

DecodeResult alsd_pp(std::span<const StreamInput> streams, const DecodeConfig& cfg) {
    validate_streams(streams, cfg);
    BeamEngine engine(streams, cfg, /*aes=*/false);
    return engine.run();
}

DecodeResult aes_pp(std::span<const StreamInput> streams, const DecodeConfig& cfg) {
    validate_streams(streams, cfg);
    BeamEngine engine(streams, cfg, /*aes=*/true);
    return engine.run();
}

std::map<std::vector<TokenId>, double> enumerate_alignments(
    const EmissionModel& model, int num_frames, int u_max) {
    if (num_frames > 6 || model.vocab().size() > 4 || u_max > 6) {
        throw std::invalid_argument(
            "enumerate_alignments: instance too large for exhaustive enumeration");
    }
    if (num_frames < 1 || num_frames > model.num_frames() || u_max < 0) {
        throw std::invalid_argument("enumerate_alignments: bad arguments");
    }
    const int v = model.vocab().size();
    const int row_len = v + 1;
    const int n = model.context_order();

    std::map<std::vector<TokenId>, double> totals;
    std::vector<TokenId> transcript;
    std::vector<double> row(row_len);

    const std::function<void(int, std::vector<TokenId>, double)> walk =
        [&](int t, std::vector<TokenId> window, double logp) {
            model.score_row(t, window, row);
            const std::vector<double> local(row.begin(), row.end());
            // blank: consume the frame
            const double blank_logp = logp + local[v];
            if (t + 1 == num_frames) {
                totals[transcript] += std::exp(blank_logp);
            } else {
                walk(t + 1, window, blank_logp);
            }
            if (static_cast<int>(transcript.size()) < u_max) {
                for (TokenId k = 0; k < v; ++k) {
                    transcript.push_back(k);
                    walk(t, advance_state(window, k, v), logp + local[k]);
                    transcript.pop_back();
                }
            }
        };
    walk(0, std::vector<TokenId>(n, kNoToken), 0.0);
    return totals;
}

}  // namespace tbeam
