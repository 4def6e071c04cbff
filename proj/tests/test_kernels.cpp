#include <cmath>
#include <random>
#include <vector>

#include <doctest.h>

#include "tbeam/kernels.hpp"

using namespace tbeam;

namespace {

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n, double lo,
                               double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) {
        x = dist(rng);
    }
    return v;
}

}  // namespace

TEST_CASE("kernel implementations agree with the scalar reference") {
    const auto& ref = kernels::scalar_ops();
    std::mt19937_64 rng(123);
    for (const auto* ops : kernels::compiled()) {
        CAPTURE(ops->name);
        for (const std::size_t n : {1u, 2u, 3u, 4u, 5u, 7u, 8u, 16u, 33u, 67u, 128u}) {
            const auto a = random_vec(rng, n, -30.0, 5.0);
            const auto b = random_vec(rng, n, -30.0, 0.0);

            std::vector<double> out_ref(n), out(n);
            ref.add_scalar(a.data(), 1.75, out_ref.data(), n);
            ops->add_scalar(a.data(), 1.75, out.data(), n);
            for (std::size_t i = 0; i < n; ++i) {
                CHECK(out[i] == out_ref[i]);  // same elementwise IEEE ops
            }

            ref.fuse_omit(a.data(), b.data(), 0.7, out_ref.data(), n);
            ops->fuse_omit(a.data(), b.data(), 0.7, out.data(), n);
            for (std::size_t i = 0; i < n; ++i) {
                CHECK(out[i] == out_ref[i]);
            }

            ref.fuse_scored(a.data(), b.data(), 0.7, -0.35, out_ref.data(), n);
            ops->fuse_scored(a.data(), b.data(), 0.7, -0.35, out.data(), n);
            for (std::size_t i = 0; i < n; ++i) {
                CHECK(out[i] == out_ref[i]);
            }

            CHECK(ops->argmax(a.data(), n) == ref.argmax(a.data(), n));

            const double lse_ref = ref.logsumexp(a.data(), n);
            const double lse = ops->logsumexp(a.data(), n);
            CHECK(lse == doctest::Approx(lse_ref).epsilon(1e-13));

            auto sm_ref = a;
            auto sm = a;
            ref.log_softmax(sm_ref.data(), n);
            ops->log_softmax(sm.data(), n);
            for (std::size_t i = 0; i < n; ++i) {
                CHECK(sm[i] == doctest::Approx(sm_ref[i]).epsilon(1e-12));
            }
        }
        // matvec with awkward inner sizes
        for (const std::size_t inner : {1u, 3u, 4u, 6u, 16u, 19u}) {
            const std::size_t m = 9;
            const auto w = random_vec(rng, m * inner, -2.0, 2.0);
            const auto x = random_vec(rng, inner, -2.0, 2.0);
            const auto bias = random_vec(rng, m, -1.0, 1.0);
            std::vector<double> out_ref(m), out(m);
            ref.matvec(w.data(), x.data(), bias.data(), out_ref.data(), m, inner);
            ops->matvec(w.data(), x.data(), bias.data(), out.data(), m, inner);
            for (std::size_t i = 0; i < m; ++i) {
                CHECK(out[i] == doctest::Approx(out_ref[i]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("argmax breaks ties toward the lowest index") {
    for (const auto* ops : kernels::compiled()) {
        CAPTURE(ops->name);
        std::vector<double> v(24, 0.0);
        v[5] = 3.25;
        v[13] = 3.25;
        v[21] = 3.25;
        CHECK(ops->argmax(v.data(), v.size()) == 5);
        std::vector<double> w{1.0};
        CHECK(ops->argmax(w.data(), 1) == 0);
        std::vector<double> tail(9, -1.0);
        tail[8] = 2.0;  // winner in the scalar tail of SIMD variants
        CHECK(ops->argmax(tail.data(), tail.size()) == 8);
    }
}

TEST_CASE("logsumexp handles -inf and known values") {
    const double inf = std::numeric_limits<double>::infinity();
    for (const auto* ops : kernels::compiled()) {
        CAPTURE(ops->name);
        std::vector<double> two{0.0, 0.0};
        CHECK(ops->logsumexp(two.data(), 2) == doctest::Approx(std::log(2.0)));
        std::vector<double> dead(7, -inf);
        CHECK(ops->logsumexp(dead.data(), dead.size()) == -inf);
        std::vector<double> mixed{-inf, -1.0, -inf, -1.0, -inf, -inf};
        CHECK(ops->logsumexp(mixed.data(), mixed.size()) ==
              doctest::Approx(-1.0 + std::log(2.0)).epsilon(1e-13));
        std::vector<double> one{-3.5};
        CHECK(ops->logsumexp(one.data(), 1) == doctest::Approx(-3.5));
    }
}

TEST_CASE("log_softmax normalizes rows") {
    std::mt19937_64 rng(99);
    for (const auto* ops : kernels::compiled()) {
        CAPTURE(ops->name);
        for (int rep = 0; rep < 20; ++rep) {
            auto v = random_vec(rng, 33, -8.0, 8.0);
            ops->log_softmax(v.data(), v.size());
            CHECK(kernels::scalar_ops().logsumexp(v.data(), v.size()) ==
                  doctest::Approx(0.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("kernel dispatch honors TBEAM_KERNELS and lists scalar first") {
    const auto list = kernels::compiled();
    REQUIRE(list.size() >= 1);
    CHECK(list[0]->name == "scalar");
    CHECK(!kernels::active().name.empty());
}
