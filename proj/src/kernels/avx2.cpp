#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <cmath>
#include <cstdint>
#include <limits>

#include "tbeam/kernels.hpp"

namespace tbeam::kernels {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// exp() on 4 doubles, Cephes-style rational approximation (~2 ulp).
// Inputs are clamped to [-709, 709]; anything below flushes to ~0, which is
// all the decoder needs (arguments are log-prob differences <= 0).
__m256d vexp(__m256d x) {
    const __m256d log2e = _mm256_set1_pd(1.4426950408889634073599);
    const __m256d c1 = _mm256_set1_pd(6.93145751953125e-1);
    const __m256d c2 = _mm256_set1_pd(1.42860682030941723212e-6);

    const __m256d p0 = _mm256_set1_pd(1.26177193074810590878e-4);
    const __m256d p1 = _mm256_set1_pd(3.02994407707441961300e-2);
    const __m256d p2 = _mm256_set1_pd(9.99999999999999999910e-1);
    const __m256d q0 = _mm256_set1_pd(3.00198505138664455042e-6);
    const __m256d q1 = _mm256_set1_pd(2.52448340349684104192e-3);
    const __m256d q2 = _mm256_set1_pd(2.27265548208155028766e-1);
    const __m256d q3 = _mm256_set1_pd(2.00000000000000000005e0);

    x = _mm256_max_pd(x, _mm256_set1_pd(-709.0));
    x = _mm256_min_pd(x, _mm256_set1_pd(709.0));

    // n = floor(log2(e) * x + 0.5)
    __m256d nd = _mm256_floor_pd(_mm256_fmadd_pd(log2e, x, _mm256_set1_pd(0.5)));
    x = _mm256_fnmadd_pd(nd, c1, x);
    x = _mm256_fnmadd_pd(nd, c2, x);

    const __m256d xx = _mm256_mul_pd(x, x);
    __m256d px = _mm256_fmadd_pd(p0, xx, p1);
    px = _mm256_fmadd_pd(px, xx, p2);
    px = _mm256_mul_pd(px, x);
    __m256d qx = _mm256_fmadd_pd(q0, xx, q1);
    qx = _mm256_fmadd_pd(qx, xx, q2);
    qx = _mm256_fmadd_pd(qx, xx, q3);

    __m256d e = _mm256_div_pd(px, _mm256_sub_pd(qx, px));
    e = _mm256_fmadd_pd(_mm256_set1_pd(2.0), e, _mm256_set1_pd(1.0));

    // Scale by 2^n through the exponent bits; n >= -1023 after the clamp,
    // so (n + 1023) << 52 is either a normal number or +0.
    __m128i n32 = _mm256_cvtpd_epi32(nd);
    __m256i n64 = _mm256_cvtepi32_epi64(n32);
    __m256i bits = _mm256_slli_epi64(
        _mm256_add_epi64(n64, _mm256_set1_epi64x(1023)), 52);
    bits = _mm256_and_si256(bits,
                            _mm256_cmpgt_epi64(_mm256_add_epi64(
                                                   n64, _mm256_set1_epi64x(1023)),
                                               _mm256_setzero_si256()));
    return _mm256_mul_pd(e, _mm256_castsi256_pd(bits));
}

double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

double hmax(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_max_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_max_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

void add_scalar(const double* src, double c, double* dst, std::size_t n) {
    const __m256d cv = _mm256_set1_pd(c);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(dst + i, _mm256_add_pd(_mm256_loadu_pd(src + i), cv));
    }
    for (; i < n; ++i) {
        dst[i] = src[i] + c;
    }
}

void fuse_omit(const double* asr, const double* lm, double lambda, double* dst,
               std::size_t n) {
    const __m256d lv = _mm256_set1_pd(lambda);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d a = _mm256_loadu_pd(asr + i);
        const __m256d l = _mm256_loadu_pd(lm + i);
        _mm256_storeu_pd(dst + i, _mm256_add_pd(a, _mm256_mul_pd(lv, l)));
    }
    for (; i < n; ++i) {
        dst[i] = asr[i] + lambda * lm[i];
    }
}

void fuse_scored(const double* asr, const double* lm, double lambda,
                 double log1m_blank, double* dst, std::size_t n) {
    const __m256d lv = _mm256_set1_pd(lambda);
    const __m256d bv = _mm256_set1_pd(log1m_blank);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d a = _mm256_loadu_pd(asr + i);
        const __m256d l = _mm256_add_pd(_mm256_loadu_pd(lm + i), bv);
        _mm256_storeu_pd(dst + i, _mm256_add_pd(a, _mm256_mul_pd(lv, l)));
    }
    for (; i < n; ++i) {
        dst[i] = asr[i] + lambda * (lm[i] + log1m_blank);
    }
}

std::size_t argmax(const double* src, std::size_t n) {
    std::size_t i = 0;
    std::size_t best = 0;
    double best_value = src[0];
    if (n >= 8) {
        __m256d maxv = _mm256_loadu_pd(src);
        __m256i idxv = _mm256_setr_epi64x(0, 1, 2, 3);
        const __m256i lane = _mm256_setr_epi64x(0, 1, 2, 3);
        for (i = 4; i + 4 <= n; i += 4) {
            const __m256d v = _mm256_loadu_pd(src + i);
            const __m256d gt = _mm256_cmp_pd(v, maxv, _CMP_GT_OQ);
            maxv = _mm256_blendv_pd(maxv, v, gt);
            const __m256i cur =
                _mm256_add_epi64(_mm256_set1_epi64x(static_cast<long long>(i)), lane);
            idxv = _mm256_castpd_si256(_mm256_blendv_pd(
                _mm256_castsi256_pd(idxv), _mm256_castsi256_pd(cur), gt));
        }
        alignas(32) double vals[4];
        alignas(32) std::int64_t idxs[4];
        _mm256_store_pd(vals, maxv);
        _mm256_store_si256(reinterpret_cast<__m256i*>(idxs), idxv);
        best_value = vals[0];
        best = static_cast<std::size_t>(idxs[0]);
        for (int k = 1; k < 4; ++k) {
            // strictly-greater keeps the lowest index among equal lane maxima
            if (vals[k] > best_value ||
                (vals[k] == best_value &&
                 static_cast<std::size_t>(idxs[k]) < best)) {
                best_value = vals[k];
                best = static_cast<std::size_t>(idxs[k]);
            }
        }
    }
    for (; i < n; ++i) {
        if (src[i] > best_value) {
            best_value = src[i];
            best = i;
        }
    }
    return best;
}

double max_all(const double* src, std::size_t n) {
    std::size_t i = 0;
    double m = -kInf;
    if (n >= 4) {
        __m256d mv = _mm256_loadu_pd(src);
        for (i = 4; i + 4 <= n; i += 4) {
            mv = _mm256_max_pd(mv, _mm256_loadu_pd(src + i));
        }
        m = hmax(mv);
    }
    for (; i < n; ++i) {
        m = std::max(m, src[i]);
    }
    return m;
}

double logsumexp(const double* src, std::size_t n) {
    const double m = max_all(src, n);
    if (!std::isfinite(m)) {
        return m;
    }
    const __m256d mv = _mm256_set1_pd(m);
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_add_pd(acc, vexp(_mm256_sub_pd(_mm256_loadu_pd(src + i), mv)));
    }
    double sum = hsum(acc);
    for (; i < n; ++i) {
        sum += std::exp(src[i] - m);
    }
    return m + std::log(sum);
}

void log_softmax(double* x, std::size_t n) {
    const double lz = logsumexp(x, n);
    const __m256d lzv = _mm256_set1_pd(lz);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(x + i, _mm256_sub_pd(_mm256_loadu_pd(x + i), lzv));
    }
    for (; i < n; ++i) {
        x[i] -= lz;
    }
}

void matvec(const double* w, const double* x, const double* bias, double* out,
            std::size_t m, std::size_t n) {
    for (std::size_t r = 0; r < m; ++r) {
        const double* row = w + r * n;
        __m256d acc = _mm256_setzero_pd();
        std::size_t i = 0;
        for (; i + 4 <= n; i += 4) {
            acc = _mm256_fmadd_pd(_mm256_loadu_pd(row + i),
                                  _mm256_loadu_pd(x + i), acc);
        }
        double s = hsum(acc);
        for (; i < n; ++i) {
            s += row[i] * x[i];
        }
        out[r] = s + bias[r];
    }
}

}  // namespace

const Ops& avx2_ops() {
    static constexpr Ops ops{
        "avx2",    add_scalar, fuse_omit,   fuse_scored,
        argmax,    logsumexp,  log_softmax, matvec,
    };
    return ops;
}

}  // namespace tbeam::kernels

#endif  // __AVX2__ && __FMA__
