#include "tbeam/kernels.hpp"

#include <cmath>
#include <limits>

namespace tbeam::kernels {
namespace {

void add_scalar(const double* src, double c, double* dst, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        dst[i] = src[i] + c;
    }
}

void fuse_omit(const double* asr, const double* lm, double lambda, double* dst,
               std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        dst[i] = asr[i] + lambda * lm[i];
    }
}

void fuse_scored(const double* asr, const double* lm, double lambda,
                 double log1m_blank, double* dst, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        dst[i] = asr[i] + lambda * (lm[i] + log1m_blank);
    }
}

std::size_t argmax(const double* src, std::size_t n) {
    std::size_t best = 0;
    double best_value = src[0];
    for (std::size_t i = 1; i < n; ++i) {
        if (src[i] > best_value) {
            best_value = src[i];
            best = i;
        }
    }
    return best;
}

double logsumexp(const double* src, std::size_t n) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        m = std::max(m, src[i]);
    }
    if (!std::isfinite(m)) {
        return m;  // all -inf (or empty-equivalent) input
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sum += std::exp(src[i] - m);
    }
    return m + std::log(sum);
}

void log_softmax(double* x, std::size_t n) {
    const double lz = logsumexp(x, n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] -= lz;
    }
}

void matvec(const double* w, const double* x, const double* bias, double* out,
            std::size_t m, std::size_t n) {
    for (std::size_t r = 0; r < m; ++r) {
        const double* row = w + r * n;
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            acc += row[i] * x[i];
        }
        out[r] = acc + bias[r];
    }
}

}  // namespace

const Ops& scalar_ops() {
    static constexpr Ops ops{
        "scalar",  add_scalar, fuse_omit,   fuse_scored,
        argmax,    logsumexp,  log_softmax, matvec,
    };
    return ops;
}

}  // namespace tbeam::kernels
