#pragma once

#include <span>

#include "tbeam/types.hpp"

namespace tbeam {

// How the blank entry is treated during shallow fusion: kOmit leaves the
// blank score untouched and applies the LM to tokens only; kScored folds the
// blank mass into the LM side so that q[k] = (1-p_blank) * p_lm[k],
// q[blank] = p_blank stays a distribution, penalizing blanks at high lambda.
enum class BlankMode { kOmit, kScored };

// Whether top-k selection happens before (early) or after (late) the LM
// terms join the candidate scores.
enum class PruneMode { kEarly, kLate };

struct FusionConfig {
    double lambda = 0.0;
    BlankMode blank_mode = BlankMode::kOmit;
    PruneMode pruning = PruneMode::kLate;
    bool eos_enabled = false;
};

// ln(1 - e^x) for x <= 0, computed stably; -inf at x == 0.
double log1mexp(double x);

// Fuse one emission row with one LM row.  asr has |V|+1 entries (blank
// last), lm has |V|; out has |V|+1.  lambda == 0 reproduces asr exactly.
// Under kScored with p_blank == 1 every token entry becomes -inf (documented
// behaviour, not an error).
void fuse_row(std::span<const double> asr, std::span<const double> lm,
              const FusionConfig& cfg, std::span<double> out);

}  // namespace tbeam
