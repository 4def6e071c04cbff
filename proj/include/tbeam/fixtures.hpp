#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tbeam/model.hpp"
#include "tbeam/types.hpp"

namespace tbeam {

// Random emission table covering every reachable (frame, context) key, rows
// normalized by construction.  Deterministic in the seed.
LatticeModel make_random_lattice(std::uint64_t seed, int frames, int vocab_size,
                                 int context_order, double peak = 1.5);

// Random lattice whose rows give tokens at most token_mass of the
// probability.  Alignments beyond a handful of tokens then carry negligible
// mass, which keeps exhaustive enumeration complete to tight tolerances and
// modest beams optimal.
LatticeModel make_blank_heavy_lattice(std::uint64_t seed, int frames,
                                      int vocab_size, int context_order,
                                      double token_mass = 0.06);

// Random ARPA text whose conditional distributions sum to one by
// construction: explicit continuations get a slice of the mass and the
// backoff weight redistributes the remainder over the lower order.
std::string make_random_consistent_arpa(std::uint64_t seed, const Vocabulary& vocab,
                                        int order, bool with_eos = true);

// Low-confidence streams where the correct token and the blank compete at
// margins staggered across frames.  Raising the LM weight under blank-omit
// fusion tips later frames to blank one by one (deletions grow with lambda);
// blank-penalized fusion keeps every frame on the token.
struct DeletionTrendSuite {
    Vocabulary vocab;
    std::vector<LatticeModel> lattices;          // one stream each
    std::vector<std::vector<TokenId>> ref_tokens;
    std::string arpa_text;
};
DeletionTrendSuite make_deletion_trend_suite();

// One-frame lattice where the LM-favored token is ranked below the beam cut
// by ASR alone: late pruning selects it, early pruning cannot.
struct EarlyLateFixture {
    Vocabulary vocab;
    LatticeModel lattice;
    std::string arpa_text;
    double lambda = 1.0;
    std::vector<TokenId> early_top1;
    std::vector<TokenId> late_top1;
};
EarlyLateFixture make_early_late_fixture();

}  // namespace tbeam
