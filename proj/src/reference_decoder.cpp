#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "tbeam/decoder.hpp"
#include "tbeam/hyp_store.hpp"
#include "tbeam/kernels.hpp"

namespace tbeam {

namespace {

// Object-per-hypothesis state: the transcript is materialized and every
// comparison is token-by-token.  This is the slow mirror of the batched
// engine, kept in lockstep semantically (same candidate layout, same
// tie-breaks, same arithmetic) so results must agree to rounding.
struct RefHyp {
    bool alive = false;
    bool complete = false;
    bool donated = false;
    double score = kNegInf;
    std::vector<TokenId> tokens;
    std::vector<TokenId> window;
    NGramLm::State lm_state = 0;
};

bool uses_lm(const DecodeConfig& cfg) {
    return cfg.lm != nullptr && cfg.fusion.lambda > 0.0;
}

void ref_selection_row(std::span<const double> asr, std::span<const double> lm_row,
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

double ref_early_lm_term(const NGramLm& lm, NGramLm::State state, TokenId token,
                         double asr_blank, const FusionConfig& cfg) {
    double term = lm.score_token(state, token);
    if (cfg.blank_mode == BlankMode::kScored) {
        term += log1mexp(asr_blank);
    }
    return cfg.lambda * term;
}

void reference_lane(const StreamInput& stream, const DecodeConfig& cfg, bool aes,
                    StreamResult& out) {
    const EmissionModel& model = *stream.model;
    const int v = model.vocab().size();
    const int row_len = v + 1;
    const int n = model.context_order();
    const int beam = cfg.beam;
    const bool with_lm = uses_lm(cfg);
    const bool late = with_lm && cfg.fusion.pruning == PruneMode::kLate;
    const bool early = with_lm && cfg.fusion.pruning == PruneMode::kEarly;
    const NGramLm* lm = cfg.lm;
    Counters& ctr = out.counters;

    std::vector<RefHyp> hyps(beam);
    hyps[0].alive = true;
    hyps[0].score = 0.0;
    hyps[0].window.assign(n, kNoToken);
    hyps[0].lm_state = with_lm ? lm->initial_state() : 0;

    NGramLm::Scratch lm_scratch;
    std::vector<double> emis(static_cast<std::size_t>(beam) * row_len);
    std::vector<double> lm_rows(late ? static_cast<std::size_t>(beam) * v : 0);
    std::vector<double> fused(static_cast<std::size_t>(beam) * row_len);
    std::vector<double> cand(static_cast<std::size_t>(beam) * row_len);
    std::vector<std::int32_t> sel_idx(beam);
    std::vector<double> sel_scores(beam);

    const int rounds_per_frame =
        aes ? cfg.aes_expansions_per_frame + 1 : cfg.max_symbols_per_frame;
    const int token_rounds = rounds_per_frame - 1;

    for (int t = 0; t < stream.num_frames; ++t) {
        for (auto& h : hyps) {
            h.complete = false;
            h.donated = false;
        }
        for (int r = 0; r < rounds_per_frame; ++r) {
            bool any_active = false;
            for (const auto& h : hyps) {
                if (h.alive && !h.complete) {
                    any_active = true;
                    break;
                }
            }
            if (!any_active) {
                break;
            }
            const bool tokens_allowed = r < token_rounds;

            for (int i = 0; i < beam; ++i) {
                if (!hyps[i].alive || hyps[i].complete) {
                    continue;
                }
                const auto asr = std::span<double>(emis).subspan(
                    static_cast<std::size_t>(i) * row_len, row_len);
                model.score_row(t, hyps[i].window, asr);
                ++ctr.scored_slots;
                std::span<const double> lm_row;
                if (late) {
                    const auto dst = std::span<double>(lm_rows).subspan(
                        static_cast<std::size_t>(i) * v, v);
                    lm->score_vocab(hyps[i].lm_state, dst, lm_scratch);
                    ++ctr.lm_vocab_queries;
                    lm_row = dst;
                }
                ref_selection_row(asr, lm_row, cfg,
                                  std::span<double>(fused).subspan(
                                      static_cast<std::size_t>(i) * row_len, row_len));
            }
            ++ctr.scoring_rounds;

            if (aes && cfg.aes_prefix_search && r == 0) {
                struct Edge {
                    int donor;
                    int receiver;
                };
                std::vector<Edge> edges;
                for (int a = 0; a < beam; ++a) {
                    if (!hyps[a].alive) continue;
                    for (int c = 0; c < beam; ++c) {
                        if (c == a || !hyps[c].alive) continue;
                        const auto& ta = hyps[a].tokens;
                        const auto& tc = hyps[c].tokens;
                        if (tc.size() != ta.size() + 1) continue;
                        if (!std::equal(ta.begin(), ta.end(), tc.begin())) continue;
                        edges.push_back({a, c});
                    }
                }
                std::sort(edges.begin(), edges.end(), [&](const Edge& x, const Edge& y) {
                    return std::make_tuple(hyps[x.receiver].tokens.size(), x.receiver,
                                           x.donor) <
                           std::make_tuple(hyps[y.receiver].tokens.size(), y.receiver,
                                           y.donor);
                });
                for (const Edge& e : edges) {
                    const TokenId last = hyps[e.receiver].tokens.back();
                    double donation =
                        hyps[e.donor].score +
                        fused[static_cast<std::size_t>(e.donor) * row_len + last];
                    if (early) {
                        donation += ref_early_lm_term(
                            *lm, hyps[e.donor].lm_state, last,
                            emis[static_cast<std::size_t>(e.donor) * row_len + v],
                            cfg.fusion);
                        ++ctr.lm_token_queries;
                    }
                    hyps[e.receiver].score = logadd(hyps[e.receiver].score, donation);
                    hyps[e.donor].donated = true;
                }
            }

            for (int i = 0; i < beam; ++i) {
                const auto c = std::span<double>(cand).subspan(
                    static_cast<std::size_t>(i) * row_len, row_len);
                if (!hyps[i].alive) {
                    std::fill(c.begin(), c.end(), kNegInf);
                    continue;
                }
                const double base = hyps[i].score;
                if (hyps[i].complete) {
                    std::fill(c.begin(), c.end(), kNegInf);
                    c[v] = base;
                    continue;
                }
                const bool allow_tokens =
                    tokens_allowed && !hyps[i].donated &&
                    static_cast<int>(hyps[i].tokens.size()) < cfg.max_len;
                if (allow_tokens) {
                    kernels::active().add_scalar(
                        &fused[static_cast<std::size_t>(i) * row_len], base, c.data(),
                        v);
                } else {
                    std::fill(c.begin(), c.begin() + v, kNegInf);
                }
                c[v] = base + fused[static_cast<std::size_t>(i) * row_len + v];
            }

            // full token-by-token duplicate detection on the frame-finishing
            // column; no hashing anywhere
            for (int i = 0; i < beam; ++i) {
                if (!hyps[i].alive ||
                    cand[static_cast<std::size_t>(i) * row_len + v] == kNegInf) {
                    continue;
                }
                for (int j = i + 1; j < beam; ++j) {
                    if (!hyps[j].alive ||
                        cand[static_cast<std::size_t>(j) * row_len + v] == kNegInf) {
                        continue;
                    }
                    if (hyps[i].tokens == hyps[j].tokens) {
                        auto& left = cand[static_cast<std::size_t>(i) * row_len + v];
                        auto& right = cand[static_cast<std::size_t>(j) * row_len + v];
                        left = logadd(left, right);
                        right = kNegInf;
                    }
                }
            }

            prune_topk(cand, beam, sel_idx, sel_scores);

            std::vector<RefHyp> next(beam);
            for (int j = 0; j < beam; ++j) {
                const std::int32_t idx = sel_idx[j];
                const int p = idx / row_len;
                const int k = idx % row_len;
                double s = sel_scores[j];
                RefHyp& dst = next[j];
                if (s == kNegInf) {
                    dst.alive = false;
                    dst.score = kNegInf;
                    dst.complete = true;
                    continue;
                }
                dst = hyps[p];  // naive: copies the whole transcript
                dst.alive = true;
                dst.donated = false;
                if (k == v) {
                    dst.complete = true;
                } else {
                    dst.complete = false;
                    if (early) {
                        s += ref_early_lm_term(
                            *lm, hyps[p].lm_state, k,
                            emis[static_cast<std::size_t>(p) * row_len + v],
                            cfg.fusion);
                        ++ctr.lm_token_queries;
                    }
                    dst.tokens.push_back(static_cast<TokenId>(k));
                    advance_state(std::span<TokenId>(dst.window), k, v);
                    if (with_lm) {
                        dst.lm_state = lm->advance(hyps[p].lm_state, k);
                    }
                }
                dst.score = hyps[p].score + (s - hyps[p].score);
            }
            hyps.swap(next);
        }
        ++ctr.frames;
    }

    if (with_lm && cfg.fusion.eos_enabled) {
        for (auto& h : hyps) {
            if (h.alive) {
                h.score += cfg.fusion.lambda * lm->score_eos(h.lm_state);
                ++ctr.lm_token_queries;
            }
        }
    }

    std::vector<std::pair<double, int>> ranked;
    for (int i = 0; i < beam; ++i) {
        if (hyps[i].alive) {
            ranked.emplace_back(hyps[i].score, i);
        }
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    const int take = std::min<int>(cfg.return_nbest, static_cast<int>(ranked.size()));
    for (int r = 0; r < take; ++r) {
        out.nbest.push_back({hyps[ranked[r].second].tokens, ranked[r].first});
    }
}

}  // namespace

DecodeResult reference_beam(std::span<const StreamInput> streams,
                            const DecodeConfig& cfg, RefAlgo algo) {
    if (streams.empty()) {
        throw std::invalid_argument("reference_beam: no streams");
    }
    DecodeResult result;
    result.streams.resize(streams.size());
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t b = 0; b < streams.size(); ++b) {
        reference_lane(streams[b], cfg, algo == RefAlgo::kAes, result.streams[b]);
    }
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    return result;
}

}  // namespace tbeam
