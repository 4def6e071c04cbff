#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <doctest.h>

#include "ref_lm.hpp"
#include "tbeam/fixtures.hpp"
#include "tbeam/ngram_lm.hpp"

using namespace tbeam;

namespace {

// vocab {A, B}: bigram with one explicit continuation and a backoff
const char* kBigramArpa = R"(\data\
ngram 1=3
ngram 2=1

\1-grams:
-0.3	A	-0.2
-0.5	B
-99	<s>

\2-grams:
-0.15	A A

\end\
)";

Vocabulary ab_vocab() {
    return Vocabulary(std::vector<std::string>{"A", "B"});
}

}  // namespace

TEST_CASE("unigram probabilities convert from log10") {
    const std::string arpa =
        "\\data\\\nngram 1=2\n\n\\1-grams:\n-0.3\tA\n-0.7\tB\n\n\\end\\\n";
    const NGramLm lm = NGramLm::parse_arpa_text(arpa, "mem", ab_vocab());
    CHECK(lm.order() == 1);
    CHECK(lm.score_token(lm.initial_state(), 0) ==
          doctest::Approx(-0.3 * M_LN10).epsilon(1e-12));
    NGramLm::Scratch scratch;
    std::vector<double> row(2);
    lm.score_vocab(lm.root_state(), row, scratch);
    CHECK(row[0] == doctest::Approx(-0.3 * M_LN10));
    CHECK(row[1] == doctest::Approx(-0.7 * M_LN10));
}

TEST_CASE("absent bigram backs off: P(B|A) = backoff(A) * P(B)") {
    const NGramLm lm = NGramLm::parse_arpa_text(kBigramArpa, "mem", ab_vocab());
    const NGramLm::State a_ctx = lm.advance(lm.root_state(), 0);
    CHECK(lm.score_token(a_ctx, 0) == doctest::Approx(-0.15 * M_LN10));
    CHECK(lm.score_token(a_ctx, 1) == doctest::Approx((-0.2 + -0.5) * M_LN10));
    NGramLm::Scratch scratch;
    std::vector<double> from_a(2), from_root(2);
    lm.score_vocab(a_ctx, from_a, scratch);
    lm.score_vocab(lm.root_state(), from_root, scratch);
    CHECK(from_a[0] == doctest::Approx(-0.15 * M_LN10));
    CHECK(from_a[1] == doctest::Approx((-0.2 + -0.5) * M_LN10));
    CHECK(from_root[0] == doctest::Approx(-0.3 * M_LN10));
}

TEST_CASE("advance follows longest suffix contexts") {
    const std::string arpa = R"(\data\
ngram 1=3
ngram 2=2

\1-grams:
-0.4	A	-0.1
-0.6	B	-0.3
-99	<s>	-0.05

\2-grams:
-0.2	<s> A
-0.3	A B

\end\
)";
    const NGramLm lm = NGramLm::parse_arpa_text(arpa, "mem", ab_vocab());
    // initial state is the <s> context; "<s> A" statistics apply
    CHECK(lm.score_token(lm.initial_state(), 0) == doctest::Approx(-0.2 * M_LN10));
    // advancing with A lands in context (A)
    const NGramLm::State a_ctx = lm.advance(lm.initial_state(), 0);
    CHECK(lm.score_token(a_ctx, 1) == doctest::Approx(-0.3 * M_LN10));
    // advancing (A) with B: "A B" exists but is full-order, so context = (B)
    const NGramLm::State b_ctx = lm.advance(a_ctx, 1);
    CHECK(lm.score_token(b_ctx, 0) ==
          doctest::Approx((-0.3 + -0.4) * M_LN10));  // backoff(B) + P(A)
    // batch advance equals per-element advance
    LmStateBatch states{lm.initial_state(), a_ctx};
    const std::vector<TokenId> tokens{0, 1};
    lm.advance_batch(states, tokens);
    CHECK(states[0] == a_ctx);
    CHECK(states[1] == b_ctx);
    // blanks cannot advance the LM
    CHECK_THROWS_AS(lm.advance(a_ctx, 2), std::invalid_argument);
}

TEST_CASE("parse errors name the section and line") {
    // declared 2 unigrams, provided 3
    const std::string bad =
        "\\data\\\nngram 1=2\n\n\\1-grams:\n-0.3\tA\n-0.7\tB\n-0.9\t<s>\n\n\\end\\\n";
    CHECK_THROWS_AS(NGramLm::parse_arpa_text(bad, "mem", ab_vocab()), ParseError);
    try {
        NGramLm::parse_arpa_text(bad, "mem", ab_vocab());
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("1-grams") != std::string::npos);
    }
    // missing terminator
    const std::string no_end = "\\data\\\nngram 1=1\n\n\\1-grams:\n-0.3\tA\n";
    CHECK_THROWS_AS(NGramLm::parse_arpa_text(no_end, "mem", ab_vocab()), ParseError);
    // non-contiguous orders
    const std::string gap =
        "\\data\\\nngram 1=1\nngram 3=1\n\n\\1-grams:\n-0.3\tA\n\n\\end\\\n";
    CHECK_THROWS_AS(NGramLm::parse_arpa_text(gap, "mem", ab_vocab()), ParseError);
}

TEST_CASE("OOV n-gram tokens map to <unk>, or throw in strict mode") {
    const std::string arpa =
        "\\data\\\nngram 1=3\n\n\\1-grams:\n-0.3\tA\n-0.7\tZZZ\n-0.5\t<unk>\n\n"
        "\\end\\\n";
    CHECK_THROWS_AS(NGramLm::parse_arpa_text(arpa, "mem", ab_vocab(), true),
                    ParseError);
    const NGramLm lm = NGramLm::parse_arpa_text(arpa, "mem", ab_vocab(), false);
    CHECK(lm.oov_mapped() == 1);
    // B has no unigram, so it scores as <unk>
    CHECK(lm.score_token(lm.root_state(), 1) == doctest::Approx(-0.5 * M_LN10));
}

TEST_CASE("eos scoring") {
    const std::string arpa =
        "\\data\\\nngram 1=3\n\n\\1-grams:\n-0.3\tA\n-0.7\tB\n-1\t</s>\n\n\\end\\\n";
    const NGramLm lm = NGramLm::parse_arpa_text(arpa, "mem", ab_vocab());
    CHECK(lm.score_eos(lm.root_state()) == doctest::Approx(-M_LN10));
}

TEST_CASE("batched full-vocab scores match the independent sequential scorer") {
    std::mt19937_64 rng(404);
    for (const int order : {2, 3}) {
        for (int rep = 0; rep < 6; ++rep) {
            const Vocabulary vocab = Vocabulary::synthetic(6);
            const std::string arpa =
                make_random_consistent_arpa(rng(), vocab, order);
            const NGramLm lm = NGramLm::parse_arpa_text(arpa, "mem", vocab, true);
            const reflm::RefLm ref = reflm::RefLm::parse(arpa);

            NGramLm::State state = lm.initial_state();
            std::vector<std::string> ctx{"<s>"};
            NGramLm::Scratch scratch;
            std::vector<double> row(vocab.size());
            for (int step = 0; step < 12; ++step) {
                lm.score_vocab(state, row, scratch);
                for (int k = 0; k < vocab.size(); ++k) {
                    const double expect = ref.score_ln(ctx, vocab.token(k));
                    CHECK(row[k] == doctest::Approx(expect).epsilon(1e-12));
                    // sequential single-token path agrees with the row
                    CHECK(lm.score_token(state, k) == row[k]);
                }
                const TokenId t = static_cast<TokenId>(rng() % vocab.size());
                state = lm.advance(state, t);
                ctx.push_back(vocab.token(t));
            }
        }
    }
}

TEST_CASE("generated fixtures are normalized per context") {
    std::mt19937_64 rng(777);
    const Vocabulary vocab = Vocabulary::synthetic(5);
    for (int rep = 0; rep < 4; ++rep) {
        const std::string arpa = make_random_consistent_arpa(rng(), vocab, 3, true);
        const NGramLm lm = NGramLm::parse_arpa_text(arpa, "mem", vocab, true);
        NGramLm::Scratch scratch;
        std::vector<double> row(vocab.size());
        NGramLm::State state = lm.initial_state();
        for (int step = 0; step < 10; ++step) {
            lm.score_vocab(state, row, scratch);
            double total = std::exp(lm.score_eos(state));
            for (const double lp : row) {
                total += std::exp(lp);
            }
            CHECK(total == doctest::Approx(1.0).epsilon(1e-4));
            state = lm.advance(state, static_cast<TokenId>(rng() % vocab.size()));
        }
    }
}

TEST_CASE("token-by-token scoring is path independent") {
    // sum of stepwise scores equals the reference scorer's sequence total
    std::mt19937_64 rng(31);
    const Vocabulary vocab = Vocabulary::synthetic(4);
    const std::string arpa = make_random_consistent_arpa(9, vocab, 3);
    const NGramLm lm = NGramLm::parse_arpa_text(arpa, "mem", vocab, true);
    const reflm::RefLm ref = reflm::RefLm::parse(arpa);
    for (int rep = 0; rep < 40; ++rep) {
        const int len = 1 + static_cast<int>(rng() % 8);
        NGramLm::State state = lm.initial_state();
        std::vector<std::string> ctx{"<s>"};
        double total = 0.0;
        double expect = 0.0;
        for (int i = 0; i < len; ++i) {
            const TokenId t = static_cast<TokenId>(rng() % vocab.size());
            total += lm.score_token(state, t);
            expect += ref.score_ln(ctx, vocab.token(t));
            state = lm.advance(state, t);
            ctx.push_back(vocab.token(t));
        }
        CHECK(total == doctest::Approx(expect).epsilon(1e-11));
    }
}

TEST_CASE("unseen-token advance falls back to the empty context") {
    // B has no unigram at all, so it cannot form a context
    const std::string arpa =
        "\\data\\\nngram 1=1\nngram 2=1\n\n\\1-grams:\n-0.3\tA\t-0.2\n\n"
        "\\2-grams:\n-0.2\tA A\n\n\\end\\\n";
    const NGramLm lm = NGramLm::parse_arpa_text(arpa, "mem", ab_vocab());
    const NGramLm::State a_ctx = lm.advance(lm.root_state(), 0);
    CHECK(a_ctx != lm.root_state());
    CHECK(lm.advance(a_ctx, 1) == lm.root_state());
    // a token that exists only as a unigram becomes a context without
    // continuations: it scores exactly like the empty context
    const std::string arpa2 =
        "\\data\\\nngram 1=2\nngram 2=1\n\n\\1-grams:\n-0.3\tA\t-0.2\n-0.7\tB\n\n"
        "\\2-grams:\n-0.2\tA A\n\n\\end\\\n";
    const NGramLm lm2 = NGramLm::parse_arpa_text(arpa2, "mem", ab_vocab());
    const NGramLm::State b_ctx =
        lm2.advance(lm2.advance(lm2.root_state(), 0), 1);
    NGramLm::Scratch scratch;
    std::vector<double> from_b(2), from_root(2);
    lm2.score_vocab(b_ctx, from_b, scratch);
    lm2.score_vocab(lm2.root_state(), from_root, scratch);
    CHECK(from_b == from_root);
}

TEST_CASE("query counters track LM work") {
    const NGramLm lm = NGramLm::parse_arpa_text(kBigramArpa, "mem", ab_vocab());
    lm.reset_query_counters();
    NGramLm::Scratch scratch;
    std::vector<double> row(2);
    lm.score_vocab(lm.root_state(), row, scratch);
    (void)lm.score_token(lm.root_state(), 0);
    CHECK(lm.vocab_query_count() == 1);
    CHECK(lm.token_query_count() == 1);
}
