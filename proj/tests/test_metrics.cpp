#include <map>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <doctest.h>

#include "tbeam/metrics.hpp"

using namespace tbeam;

namespace {

using Words = std::vector<std::string>;

// Independent oracle: memoized recursion over (i, j) returning
// (cost, subs, ins, dels), breaking cost ties substitution-first, then
// deletion, then insertion -- the same canonical alignment the production
// code commits to, computed a different way.
struct WerOracle {
    const Words& ref;
    const Words& hyp;
    std::map<std::pair<std::size_t, std::size_t>,
             std::tuple<std::uint32_t, std::uint32_t, std::uint32_t, std::uint32_t>>
        memo;

    std::tuple<std::uint32_t, std::uint32_t, std::uint32_t, std::uint32_t> solve(
        std::size_t i, std::size_t j) {
        if (i == 0 && j == 0) return {0, 0, 0, 0};
        const auto key = std::make_pair(i, j);
        const auto it = memo.find(key);
        if (it != memo.end()) return it->second;
        std::uint32_t best = UINT32_MAX;
        std::tuple<std::uint32_t, std::uint32_t, std::uint32_t, std::uint32_t> pick{};
        if (i > 0 && j > 0) {
            auto [c, s, n, d] = solve(i - 1, j - 1);
            const bool match = ref[i - 1] == hyp[j - 1];
            const std::uint32_t cost = c + (match ? 0 : 1);
            if (cost < best) {
                best = cost;
                pick = {cost, s + (match ? 0 : 1), n, d};
            }
        }
        if (i > 0) {
            auto [c, s, n, d] = solve(i - 1, j);
            if (c + 1 < best) {
                best = c + 1;
                pick = {c + 1, s, n, d + 1};
            }
        }
        if (j > 0) {
            auto [c, s, n, d] = solve(i, j - 1);
            if (c + 1 < best) {
                best = c + 1;
                pick = {c + 1, s, n + 1, d};
            }
        }
        memo[key] = pick;
        return pick;
    }
};

Words words(std::initializer_list<const char*> list) {
    Words out;
    for (const char* w : list) out.emplace_back(w);
    return out;
}

}  // namespace

TEST_CASE("wer basics") {
    const std::vector<Words> refs{words({"a", "b", "c"})};
    {
        const std::vector<Words> hyps{words({"a", "b", "c"})};
        const WerReport r = wer(refs, hyps);
        CHECK(r.wer() == 0.0);
        CHECK(r.substitutions == 0);
    }
    {
        const std::vector<Words> hyps{words({"a", "x", "c"})};
        const WerReport r = wer(refs, hyps);
        CHECK(r.substitutions == 1);
        CHECK(r.insertions == 0);
        CHECK(r.deletions == 0);
        CHECK(r.wer() == doctest::Approx(1.0 / 3.0));
    }
    {
        // appending k words costs exactly k insertions
        const std::vector<Words> hyps{words({"a", "b", "c", "p", "q"})};
        const WerReport r = wer(refs, hyps);
        CHECK(r.insertions == 2);
        CHECK(r.substitutions == 0);
        CHECK(r.deletions == 0);
    }
    const std::vector<Words> empty_refs{Words{}};
    const std::vector<Words> empty_hyps{Words{}};
    CHECK_THROWS_AS(wer(empty_refs, empty_hyps), std::invalid_argument);
}

TEST_CASE("wer counts match the independent DP oracle") {
    std::mt19937_64 rng(12);
    const std::vector<std::string> pool{"a", "b", "c", "d", "e", "f", "g", "h"};
    for (int rep = 0; rep < 1000; ++rep) {
        Words ref, hyp;
        const int nr = static_cast<int>(rng() % 14);
        for (int i = 0; i < nr; ++i) {
            ref.push_back(pool[rng() % pool.size()]);
        }
        // half the time mutate the reference, half the time fully random
        if (rng() % 2 == 0) {
            hyp = ref;
            const int edits = static_cast<int>(rng() % 4);
            for (int e = 0; e < edits && !hyp.empty(); ++e) {
                const std::size_t pos = rng() % hyp.size();
                switch (rng() % 3) {
                    case 0:
                        hyp[pos] = pool[rng() % pool.size()];
                        break;
                    case 1:
                        hyp.erase(hyp.begin() + pos);
                        break;
                    default:
                        hyp.insert(hyp.begin() + pos, pool[rng() % pool.size()]);
                }
            }
        } else {
            const int nh = static_cast<int>(rng() % 14);
            for (int i = 0; i < nh; ++i) {
                hyp.push_back(pool[rng() % pool.size()]);
            }
        }
        if (ref.empty()) {
            ref.push_back("z");
        }
        const std::vector<Words> refs{ref};
        const std::vector<Words> hyps{hyp};
        const WerReport got = wer(refs, hyps);
        WerOracle oracle{ref, hyp, {}};
        const auto [cost, s, n, d] = oracle.solve(ref.size(), hyp.size());
        CHECK(got.substitutions + got.insertions + got.deletions == cost);
        CHECK(got.substitutions == s);
        CHECK(got.insertions == n);
        CHECK(got.deletions == d);
    }
}

TEST_CASE("detokenization joins pieces on the word marker") {
    // synthetic vocabulary: every third token starts a word
    const Vocabulary v = Vocabulary::synthetic(6);
    REQUIRE(v.token(0).rfind("▁", 0) == 0);
    REQUIRE(v.token(1).rfind("▁", 0) != 0);
    const std::vector<TokenId> tokens{0, 1, 2, 3, 4};
    const auto w = detokenize(v, tokens);
    REQUIRE(w.size() == 2);
    CHECK(w[0] == v.token(0).substr(3) + v.token(1) + v.token(2));
    CHECK(w[1] == v.token(3).substr(3) + v.token(4));
    // continuation piece with no preceding word still forms a word
    const std::vector<TokenId> dangling{1};
    CHECK(detokenize(v, dangling).size() == 1);
}

TEST_CASE("bench runs warmup untimed plus the timed repeats") {
    int calls = 0;
    const ThroughputReport r = bench(
        [&calls]() -> std::uint64_t {
            ++calls;
            return 128;
        },
        1, 3, 0.01);
    CHECK(calls == 4);
    CHECK(r.frames == 128);
    CHECK(r.frames_per_second > 0.0);
    REQUIRE(r.rtfx.has_value());
    CHECK(*r.rtfx > 0.0);
    CHECK_THROWS_AS(bench([] { return std::uint64_t{1}; }, 0, 0, std::nullopt),
                    std::invalid_argument);
}
