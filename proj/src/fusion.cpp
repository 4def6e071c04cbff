#include "tbeam/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tbeam/kernels.hpp"

namespace tbeam {

double log1mexp(double x) {
    if (x > 0.0) {
        throw std::invalid_argument("log1mexp: argument must be <= 0");
    }
    if (x == 0.0) {
        return kNegInf;
    }
    if (x > -M_LN2) {
        return std::log(-std::expm1(x));
    }
    return std::log1p(-std::exp(x));
}

void fuse_row(std::span<const double> asr, std::span<const double> lm,
              const FusionConfig& cfg, std::span<double> out) {
    const std::size_t v = lm.size();
    if (asr.size() != v + 1 || out.size() != v + 1) {
        throw std::invalid_argument("fuse_row: inconsistent row sizes");
    }
    if (cfg.lambda == 0.0) {
        std::copy(asr.begin(), asr.end(), out.begin());
        return;
    }
    const auto& ops = kernels::active();
    if (cfg.blank_mode == BlankMode::kOmit) {
        ops.fuse_omit(asr.data(), lm.data(), cfg.lambda, out.data(), v);
        out[v] = asr[v];
    } else {
        ops.fuse_scored(asr.data(), lm.data(), cfg.lambda, log1mexp(asr[v]),
                        out.data(), v);
        out[v] = (1.0 + cfg.lambda) * asr[v];
    }
}

}  // namespace tbeam
