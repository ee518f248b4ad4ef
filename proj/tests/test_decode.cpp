#include <doctest.h>

#include <cmath>
#include <sstream>

#include "sct/decode.hpp"
#include "sct/errors.hpp"
#include "sct/rng.hpp"

using namespace sct;

namespace {

EmissionMatrix fixture_f1() {
    EmissionMatrix E;
    E.T = 2;
    E.K = 2;
    E.log_probs = {std::log(0.4), std::log(0.6), std::log(0.4), std::log(0.6)};
    return E;
}

EmissionMatrix from_rows(std::size_t K, const std::vector<std::vector<double>>& rows) {
    EmissionMatrix E;
    E.T = rows.size();
    E.K = K;
    for (const auto& row : rows)
        for (double p : row) E.log_probs.push_back(p > 0 ? std::log(p) : kLogZero);
    return E;
}

EmissionMatrix random_emissions(Rng& rng, std::size_t T, std::size_t K) {
    EmissionMatrix E;
    E.T = T;
    E.K = K;
    E.log_probs.resize(T * K);
    for (std::size_t t = 0; t < T; ++t) {
        double z = 0.0;
        std::vector<double> row(K);
        for (auto& v : row) {
            v = 0.05 + rng.uniform();
            z += v;
        }
        for (std::size_t k = 0; k < K; ++k) E.at(t, k) = std::log(row[k] / z);
    }
    return E;
}

// Viterbi score of word w by brute force: max over all paths collapsing to w.
double viterbi_bruteforce(const EmissionMatrix& E, const LabelSequence& w) {
    std::vector<int> path(E.T, 0);
    double best = kLogZero;
    for (;;) {
        if (collapse(path) == w) best = std::max(best, path_log_prob(E, path));
        std::size_t t = 0;
        while (t < E.T && ++path[t] == static_cast<int>(E.K)) path[t++] = 0;
        if (t == E.T) break;
    }
    return best;
}

}  // namespace

TEST_CASE("best path decoding") {
    CHECK(best_path_decode(fixture_f1()).labels == LabelSequence{1});
    CHECK(best_path_decode(fixture_f1()).log_score == doctest::Approx(std::log(0.36)));

    // argmax rows a, blank, a, b -> "aab"
    EmissionMatrix E = from_rows(3, {{0.1, 0.8, 0.1},
                                     {0.6, 0.2, 0.2},
                                     {0.2, 0.7, 0.1},
                                     {0.1, 0.2, 0.7}});
    CHECK(best_path_decode(E).labels == LabelSequence{1, 1, 2});

    EmissionMatrix blanks = from_rows(2, {{0.9, 0.1}, {0.8, 0.2}});
    CHECK(best_path_decode(blanks).labels.empty());
    CHECK(best_path_decode(blanks).log_score <= 0.0);
}

TEST_CASE("token passing hand fixtures") {
    // T=1: P(-)=0.1, P(a)=0.7, P(b)=0.2
    EmissionMatrix E1 = from_rows(3, {{0.1, 0.7, 0.2}});
    Lexicon lex({{1}, {2}});
    DecodeResult r = token_passing_decode(E1, lex, true);
    CHECK(r.labels == LabelSequence{1});
    CHECK(r.log_score == doctest::Approx(std::log(0.7)));

    // T=2, forced alignment a then b.
    EmissionMatrix E2 = from_rows(3, {{0.05, 0.9, 0.05}, {0.1, 0.1, 0.8}});
    Lexicon lex_ab({{1, 2}});
    DecodeResult r2 = token_passing_decode(E2, lex_ab, true);
    CHECK(r2.labels == LabelSequence{1, 2});
    CHECK(r2.log_score == doctest::Approx(std::log(0.72)));

    // "aa" cannot fit in two frames.
    Lexicon lex_aa({{1, 1}});
    CHECK_THROWS_AS(token_passing_decode(E2, lex_aa, true), NoFeasibleWord);
}

TEST_CASE("token passing equals the brute-force Viterbi winner") {
    Rng rng(2024);
    for (int it = 0; it < 100; ++it) {
        const std::size_t T = 2 + rng.uniform_int(5);  // up to 6
        const std::size_t K = 3 + rng.uniform_int(2);
        EmissionMatrix E = random_emissions(rng, T, K);

        std::vector<LabelSequence> words;
        const std::size_t W = 1 + rng.uniform_int(8);
        for (std::size_t w = 0; w < W; ++w) {
            LabelSequence word;
            const std::size_t len = 1 + rng.uniform_int(3);
            for (std::size_t i = 0; i < len; ++i)
                word.push_back(1 + static_cast<int>(rng.uniform_int(K - 1)));
            words.push_back(word);
        }
        Lexicon lex(words);

        double best = kLogZero;
        LabelSequence best_word;
        for (const auto& w : lex.words()) {
            const double s = viterbi_bruteforce(E, w);
            if (s > best || (s == best && w < best_word)) {
                best = s;
                best_word = w;
            }
        }

        if (best == kLogZero) {
            CHECK_THROWS_AS(token_passing_decode(E, lex, true), NoFeasibleWord);
        } else {
            const DecodeResult r = token_passing_decode(E, lex, true);
            CHECK(std::abs(r.log_score - best) <= 1e-9);
            CHECK(r.labels == best_word);
        }
    }
}

TEST_CASE("beam search accumulates the exact prefix probability unpruned") {
    EmissionMatrix E = fixture_f1();
    DecodeOptions opts;
    opts.beam_width = 64;
    opts.candidate_count = 1;  // K-1 = 1 non-blank class
    opts.alpha = 0.0;
    const DecodeResult r = beam_search_decode(E, opts);
    CHECK(r.labels == LabelSequence{1});
    CHECK(std::exp(r.log_score) == doctest::Approx(0.84).epsilon(1e-12));
}

TEST_CASE("a hostile LM flips the beam result to the empty prefix") {
    // LM with P(a|eps) ~ 0.1: train on a corpus where 'a' is rare.
    Alphabet alpha({"a", "b"});
    std::istringstream corpus("a bbbbbbbbb");
    NGramModel lm = NGramModel::train(corpus, 1, alpha, 0.99);
    const double pa = std::exp(lm.log_prob(1, {}));
    CHECK(pa < 0.15);

    EmissionMatrix E = fixture_f1();
    DecodeOptions opts;
    opts.beam_width = 64;
    opts.candidate_count = 1;
    opts.alpha = 10.0;
    opts.lm = &lm;
    const DecodeResult r = beam_search_decode(E, opts);
    // score("a") = 0.84 * pa^10 << 0.16 = score("")
    CHECK(r.labels.empty());
    CHECK(std::exp(r.log_score) == doctest::Approx(0.16).epsilon(1e-12));
}

TEST_CASE("alpha zero makes the beam independent of the LM") {
    Alphabet alpha({"a", "b"});
    std::istringstream corpus("ab ba aab");
    NGramModel lm = NGramModel::train(corpus, 2, alpha, 0.9);
    Rng rng(88);
    for (int it = 0; it < 20; ++it) {
        EmissionMatrix E = random_emissions(rng, 4, 3);
        DecodeOptions with_lm{8, 2, 0.0, &lm};
        DecodeOptions without{8, 2, 0.0, nullptr};
        const DecodeResult a = beam_search_decode(E, with_lm);
        const DecodeResult b = beam_search_decode(E, without);
        CHECK(a.labels == b.labels);
        CHECK(a.log_score == b.log_score);
    }
}

TEST_CASE("degenerate beam equals best path on one-hot rows") {
    EmissionMatrix E = from_rows(3, {{0.0, 1.0, 0.0}, {1.0, 0.0, 0.0}, {0.0, 0.0, 1.0}});
    DecodeOptions opts{1, 1, 0.0, nullptr};
    const DecodeResult beam = beam_search_decode(E, opts);
    const DecodeResult naive = best_path_decode(E);
    CHECK(beam.labels == naive.labels);
}

TEST_CASE("beam search requires an LM when alpha is positive") {
    DecodeOptions opts{8, 1, 1.0, nullptr};
    CHECK_THROWS_AS(beam_search_decode(fixture_f1(), opts), InvalidInput);
}

TEST_CASE("exhaustive oracle fixtures") {
    const DecodeResult r = exhaustive_decode_oracle(fixture_f1(), nullptr, 0.0);
    CHECK(r.labels == LabelSequence{1});
    CHECK(std::exp(r.log_score) == doctest::Approx(0.84).epsilon(1e-12));

    EmissionMatrix one_hot = from_rows(3, {{0.0, 0.0, 1.0}});
    CHECK(exhaustive_decode_oracle(one_hot, nullptr, 0.0).labels == LabelSequence{2});
}

TEST_CASE("beam equals the oracle when nothing is pruned") {
    Alphabet alpha({"a", "b"});
    std::istringstream corpus("ab ba abab bb");
    NGramModel lm = NGramModel::train(corpus, 3, alpha, 0.9);
    Rng rng(1234);
    int compared = 0;
    for (int it = 0; it < 200; ++it) {
        const std::size_t T = 2 + rng.uniform_int(4);  // up to 5
        const std::size_t K = 2 + rng.uniform_int(2);  // up to 3
        EmissionMatrix E = random_emissions(rng, T, K);
        const bool with_lm = it % 2 == 1 && K == 3;
        DecodeOptions opts;
        opts.beam_width = 4096;  // more than enumerable prefixes
        opts.candidate_count = K - 1;
        opts.alpha = with_lm ? 1.0 : 0.0;
        opts.lm = with_lm ? &lm : nullptr;
        const DecodeResult beam = beam_search_decode(E, opts);
        const DecodeResult oracle =
            exhaustive_decode_oracle(E, opts.lm, opts.alpha);
        CHECK(beam.labels == oracle.labels);
        CHECK(std::abs(beam.log_score - oracle.log_score) <= 1e-9);
        compared++;
    }
    CHECK(compared == 200);
}
