#include <cmath>
#include <random>
#include <vector>

#include <doctest.h>

#include "tbeam/fusion.hpp"
#include "tbeam/kernels.hpp"

using namespace tbeam;

namespace {

// random normalized (asr over |V|+1, lm over |V|) pair in log space
void random_rows(std::mt19937_64& rng, int v, std::vector<double>& asr,
                 std::vector<double>& lm) {
    std::uniform_real_distribution<double> dist(-4.0, 4.0);
    asr.resize(v + 1);
    lm.resize(v);
    for (auto& x : asr) x = dist(rng);
    for (auto& x : lm) x = dist(rng);
    kernels::scalar_ops().log_softmax(asr.data(), asr.size());
    kernels::scalar_ops().log_softmax(lm.data(), lm.size());
}

}  // namespace

TEST_CASE("lambda zero is an exact no-op in both modes") {
    std::mt19937_64 rng(1);
    std::vector<double> asr, lm, out(9);
    random_rows(rng, 8, asr, lm);
    for (const BlankMode mode : {BlankMode::kOmit, BlankMode::kScored}) {
        FusionConfig cfg;
        cfg.lambda = 0.0;
        cfg.blank_mode = mode;
        fuse_row(asr, lm, cfg, out);
        for (int i = 0; i < 9; ++i) {
            CHECK(out[i] == asr[i]);  // bitwise
        }
    }
}

TEST_CASE("worked example: lambda 1, p_blank 0.5, p_a 0.5, p_lm_a 1") {
    const std::vector<double> asr{std::log(0.5), std::log(0.5)};
    const std::vector<double> lm{0.0};
    std::vector<double> out(2);
    FusionConfig cfg;
    cfg.lambda = 1.0;

    cfg.blank_mode = BlankMode::kScored;
    fuse_row(asr, lm, cfg, out);
    CHECK(out[0] == doctest::Approx(std::log(0.25)).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(std::log(0.25)).epsilon(1e-12));

    cfg.blank_mode = BlankMode::kOmit;
    fuse_row(asr, lm, cfg, out);
    CHECK(out[0] == doctest::Approx(std::log(0.5)).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("scored mode reconstructs the implied expert distribution") {
    // at lambda 1, exp(fused - asr) per token is (1 - p_blank) * p_lm and
    // exp(fused - asr) at the blank is p_blank; the expert must sum to one
    std::mt19937_64 rng(2);
    std::vector<double> asr, lm, out;
    for (int rep = 0; rep < 500; ++rep) {
        const int v = 2 + static_cast<int>(rng() % 40);
        random_rows(rng, v, asr, lm);
        out.resize(v + 1);
        FusionConfig cfg;
        cfg.lambda = 1.0;
        cfg.blank_mode = BlankMode::kScored;
        fuse_row(asr, lm, cfg, out);
        double q = 0.0;
        for (int k = 0; k <= v; ++k) {
            q += std::exp(out[k] - asr[k]);
        }
        CHECK(q == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("scored mode strictly penalizes the blank") {
    std::mt19937_64 rng(3);
    std::vector<double> asr, lm, out;
    for (int rep = 0; rep < 200; ++rep) {
        const int v = 2 + static_cast<int>(rng() % 20);
        random_rows(rng, v, asr, lm);
        out.resize(v + 1);
        FusionConfig cfg;
        cfg.lambda = 0.1 + 3.0 * (rng() % 1000) / 1000.0;
        cfg.blank_mode = BlankMode::kScored;
        fuse_row(asr, lm, cfg, out);
        REQUIRE(asr[v] < 0.0);  // p_blank < 1 with random softmax rows
        CHECK(out[v] < asr[v]);
    }
}

TEST_CASE("fused argmax equals the ASR argmax as lambda approaches zero") {
    std::mt19937_64 rng(4);
    std::vector<double> asr, lm, out;
    const auto& ops = kernels::scalar_ops();
    for (int rep = 0; rep < 200; ++rep) {
        const int v = 2 + static_cast<int>(rng() % 30);
        random_rows(rng, v, asr, lm);
        out.resize(v + 1);
        for (const BlankMode mode : {BlankMode::kOmit, BlankMode::kScored}) {
            FusionConfig cfg;
            cfg.lambda = 1e-12;
            cfg.blank_mode = mode;
            fuse_row(asr, lm, cfg, out);
            CHECK(ops.argmax(out.data(), out.size()) ==
                  ops.argmax(asr.data(), asr.size()));
        }
    }
}

TEST_CASE("certain blank under scored fusion suppresses every token") {
    // p_blank == 1: tokens go to -inf, documented behaviour, and no NaN even
    // with floored LM entries
    const std::vector<double> asr{kNegInf, kNegInf, 0.0};
    const std::vector<double> lm{-1e9, -0.2};
    std::vector<double> out(3);
    FusionConfig cfg;
    cfg.lambda = 0.5;
    cfg.blank_mode = BlankMode::kScored;
    fuse_row(asr, lm, cfg, out);
    CHECK(out[0] == kNegInf);
    CHECK(out[1] == kNegInf);
    CHECK(out[2] == 0.0);
    for (const double x : out) {
        CHECK(!std::isnan(x));
    }
}

TEST_CASE("log1mexp") {
    CHECK(log1mexp(0.0) == kNegInf);
    for (const double p : {1e-12, 1e-3, 0.1, 0.5, 0.9, 0.999999}) {
        CHECK(log1mexp(std::log(p)) ==
              doctest::Approx(std::log(1.0 - p)).epsilon(1e-10));
    }
    CHECK_THROWS_AS(log1mexp(0.5), std::invalid_argument);
}
