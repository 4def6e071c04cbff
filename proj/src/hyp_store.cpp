#include "tbeam/hyp_store.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tbeam {

namespace {

constexpr std::uint64_t kMersenne61 = (std::uint64_t{1} << 61) - 1;

std::uint64_t mod_mersenne61(unsigned __int128 x) {
    std::uint64_t r = static_cast<std::uint64_t>(x & kMersenne61) +
                      static_cast<std::uint64_t>(x >> 61);
    r = (r & kMersenne61) + (r >> 61);
    if (r >= kMersenne61) {
        r -= kMersenne61;
    }
    return r;
}

}  // namespace

std::uint64_t update_hash(std::uint64_t h_prev, TokenId token,
                          const HashParams& params) {
    if (token < 0) {
        throw std::invalid_argument("update_hash: blank or invalid token");
    }
    const unsigned __int128 x =
        static_cast<unsigned __int128>(h_prev) * params.base +
        static_cast<std::uint64_t>(token) + 1;
    if (params.modulus == kMersenne61) {
        return mod_mersenne61(x);
    }
    return static_cast<std::uint64_t>(x % params.modulus);
}

double logadd(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(std::min(a, b) - m));
}

BatchedBeamHyps::BatchedBeamHyps(int batch, int beam, int max_len,
                                 HashParams params)
    : batch_(batch), beam_(beam), max_len_(max_len), params_(params) {
    if (batch < 1 || beam < 1 || max_len < 1) {
        throw std::invalid_argument("BatchedBeamHyps: dimensions must be >= 1");
    }
    capacity_ = std::max(16, max_len_);
    steps_.assign(batch_, 0);
    tok_.assign(static_cast<std::size_t>(batch_) * beam_ * capacity_, kNoToken);
    ptr_.assign(static_cast<std::size_t>(batch_) * beam_ * capacity_, 0);
    scores_.assign(static_cast<std::size_t>(batch_) * beam_, kDeadScore);
    lengths_.assign(static_cast<std::size_t>(batch_) * beam_, 0);
    hashes_.assign(static_cast<std::size_t>(batch_) * beam_, 0);
    last_.assign(static_cast<std::size_t>(batch_) * beam_, kNoToken);
    for (int b = 0; b < batch_; ++b) {
        scores_[slot(b, 0)] = 0.0;
    }
    tmp_scores_.resize(beam_);
    tmp_lengths_.resize(beam_);
    tmp_hashes_.resize(beam_);
    tmp_last_.resize(beam_);
}

void BatchedBeamHyps::grow() {
    const int new_capacity = capacity_ * 2;
    std::vector<TokenId> tok(static_cast<std::size_t>(batch_) * beam_ * new_capacity,
                             kNoToken);
    std::vector<std::int32_t> ptr(
        static_cast<std::size_t>(batch_) * beam_ * new_capacity, 0);
    for (int b = 0; b < batch_; ++b) {
        for (int i = 0; i < beam_; ++i) {
            const std::size_t src = cell(b, i, 0);
            const std::size_t dst =
                (static_cast<std::size_t>(b) * beam_ + i) * new_capacity;
            std::copy_n(tok_.begin() + src, capacity_, tok.begin() + dst);
            std::copy_n(ptr_.begin() + src, capacity_, ptr.begin() + dst);
        }
    }
    tok_ = std::move(tok);
    ptr_ = std::move(ptr);
    capacity_ = new_capacity;
}

void BatchedBeamHyps::expand_stream(int b, std::span<const std::int32_t> parents,
                                    std::span<const TokenId> tokens,
                                    std::span<const double> deltas) {
    if (static_cast<int>(parents.size()) != beam_ ||
        static_cast<int>(tokens.size()) != beam_ ||
        static_cast<int>(deltas.size()) != beam_) {
        throw std::invalid_argument("expand_stream: argument size != beam");
    }
    if (steps_[b] == capacity_) {
        grow();
    }
    const int c = steps_[b];
    for (int j = 0; j < beam_; ++j) {
        const std::int32_t p = parents[j];
        if (p < 0 || p >= beam_) {
            throw std::invalid_argument("expand_stream: parent index out of range");
        }
        const double parent_score = scores_[slot(b, p)];
        if (parent_score == kDeadScore && deltas[j] != kNegInf) {
            throw std::invalid_argument(
                "expand_stream: dead parent requires a -inf delta");
        }
        const TokenId t = tokens[j];
        if (t != kNoToken) {
            if (lengths_[slot(b, p)] >= max_len_) {
                throw CapacityError("expand_stream: transcript at max_len");
            }
            tmp_lengths_[j] = lengths_[slot(b, p)] + 1;
            tmp_hashes_[j] = update_hash(hashes_[slot(b, p)], t, params_);
            tmp_last_[j] = t;
        } else {
            tmp_lengths_[j] = lengths_[slot(b, p)];
            tmp_hashes_[j] = hashes_[slot(b, p)];
            tmp_last_[j] = last_[slot(b, p)];
        }
        tmp_scores_[j] = parent_score + deltas[j];
        tok_[cell(b, j, c)] = t;
        ptr_[cell(b, j, c)] = p;
    }
    for (int j = 0; j < beam_; ++j) {
        scores_[slot(b, j)] = tmp_scores_[j];
        lengths_[slot(b, j)] = tmp_lengths_[j];
        hashes_[slot(b, j)] = tmp_hashes_[j];
        last_[slot(b, j)] = tmp_last_[j];
    }
    steps_[b] = c + 1;
}

void BatchedBeamHyps::expand(std::span<const std::int32_t> parents,
                             std::span<const TokenId> tokens,
                             std::span<const double> deltas) {
    const std::size_t need = static_cast<std::size_t>(batch_) * beam_;
    if (parents.size() != need || tokens.size() != need || deltas.size() != need) {
        throw std::invalid_argument("expand: argument size != batch * beam");
    }
    for (int b = 0; b < batch_; ++b) {
        const std::size_t off = static_cast<std::size_t>(b) * beam_;
        expand_stream(b, parents.subspan(off, beam_), tokens.subspan(off, beam_),
                      deltas.subspan(off, beam_));
    }
}

std::vector<TokenId> BatchedBeamHyps::retrieve_transcript(int b, int i) const {
    if (!alive(b, i)) {
        throw std::invalid_argument("retrieve_transcript: dead slot");
    }
    std::vector<TokenId> out;
    out.reserve(lengths_[slot(b, i)]);
    int row = i;
    for (int c = steps_[b] - 1; c >= 0; --c) {
        const TokenId t = tok_[cell(b, row, c)];
        if (t != kNoToken) {
            out.push_back(t);
        }
        row = ptr_[cell(b, row, c)];
    }
    std::reverse(out.begin(), out.end());
    return out;
}

void BatchedBeamHyps::merge_duplicates_stream(
    int b, std::span<const std::uint8_t> group_tags) {
    if (!group_tags.empty() && static_cast<int>(group_tags.size()) != beam_) {
        throw std::invalid_argument("merge_duplicates_stream: bad tag size");
    }
    for (int i = 0; i < beam_; ++i) {
        if (!alive(b, i)) {
            continue;
        }
        for (int j = i + 1; j < beam_; ++j) {
            if (!alive(b, j)) {
                continue;
            }
            if (!group_tags.empty() && group_tags[i] != group_tags[j]) {
                continue;
            }
            if (key(b, i) == key(b, j)) {
                scores_[slot(b, i)] = logadd(scores_[slot(b, i)], scores_[slot(b, j)]);
                scores_[slot(b, j)] = kDeadScore;
            }
        }
    }
}

void BatchedBeamHyps::merge_duplicates() {
    for (int b = 0; b < batch_; ++b) {
        merge_duplicates_stream(b);
    }
}

void prune_topk(std::span<const double> scores, int k,
                std::span<std::int32_t> out_idx, std::span<double> out_scores) {
    if (k < 1 || static_cast<std::size_t>(k) > scores.size()) {
        throw std::invalid_argument("prune_topk: k out of range");
    }
    if (out_idx.size() != static_cast<std::size_t>(k) ||
        out_scores.size() != static_cast<std::size_t>(k)) {
        throw std::invalid_argument("prune_topk: output size != k");
    }
    int filled = 0;
    for (std::size_t idx = 0; idx < scores.size(); ++idx) {
        const double s = scores[idx];
        if (filled == k && s <= out_scores[k - 1]) {
            continue;  // strictly-greater displaces, so earlier index wins ties
        }
        int pos = std::min(filled, k - 1);
        while (pos > 0 && s > out_scores[pos - 1]) {
            --pos;
        }
        const int tail = std::min(filled, k - 1);
        for (int m = tail; m > pos; --m) {
            out_scores[m] = out_scores[m - 1];
            out_idx[m] = out_idx[m - 1];
        }
        out_scores[pos] = s;
        out_idx[pos] = static_cast<std::int32_t>(idx);
        filled = std::min(filled + 1, k);
    }
    return;
}

}  // namespace tbeam
