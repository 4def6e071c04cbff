#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace tbeam::kernels {

// One implementation of the arithmetic inner loops of the decoder: score
// fusion, candidate formation, reductions and the toy-model joint.  `scalar`
// is the reference; SIMD variants are selected at runtime and must agree
// with it within the tolerances pinned by the equivalence tests.
struct Ops {
    std::string_view name;

    // dst[i] = src[i] + c
    void (*add_scalar)(const double* src, double c, double* dst, std::size_t n);

    // dst[i] = asr[i] + lambda * lm[i]
    void (*fuse_omit)(const double* asr, const double* lm, double lambda,
                      double* dst, std::size_t n);

    // dst[i] = asr[i] + lambda * (lm[i] + log1m_blank)
    void (*fuse_scored)(const double* asr, const double* lm, double lambda,
                        double log1m_blank, double* dst, std::size_t n);

    // Index of the maximum element; the lowest index wins ties.  n >= 1.
    std::size_t (*argmax)(const double* src, std::size_t n);

    // log(sum_i exp(src[i])), -inf for an all-(-inf) input.
    double (*logsumexp)(const double* src, std::size_t n);

    // In place: x[i] -= log(sum_j exp(x[j]))
    void (*log_softmax)(double* x, std::size_t n);

    // out[r] = bias[r] + dot(w[r*n .. r*n+n), x), w row-major [m, n].
    void (*matvec)(const double* w, const double* x, const double* bias,
                   double* out, std::size_t m, std::size_t n);
};

// The implementation picked for this process: the best SIMD level the CPU
// supports, overridable with TBEAM_KERNELS=scalar|avx2.
const Ops& active();

// Every implementation compiled into this binary, reference first.
std::span<const Ops* const> compiled();

const Ops& scalar_ops();

}  // namespace tbeam::kernels
