#include "sct/decode.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "sct/errors.hpp"

namespace sct {

namespace {

// Total prefix order: lower class index first, a proper prefix before its
// extensions. Used for all score tie-breaking.
bool prefix_less(const LabelSequence& a, const LabelSequence& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

// True when a beats b given their scores.
bool better(double score_a, const LabelSequence& a, double score_b, const LabelSequence& b) {
    if (score_a != score_b) return score_a > score_b;
    if (a.size() != b.size()) return a.size() < b.size();
    return prefix_less(a, b);
}

}  // namespace

DecodeResult best_path_decode(const EmissionMatrix& E) {
    std::vector<int> path(E.T);
    double score = 0.0;
    for (std::size_t t = 0; t < E.T; ++t) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < E.K; ++k)
            if (E.at(t, k) > E.at(t, best)) best = k;  // ties keep the lowest index
        path[t] = static_cast<int>(best);
        score += E.at(t, best);
    }
    return {collapse(path), score};
}

Lexicon::Lexicon(std::vector<LabelSequence> words) {
    std::set<LabelSequence> seen;
    for (auto& w : words) {
        if (w.empty()) throw InvalidInput("lexicon: empty word");
        for (int l : w)
            if (l <= 0) throw InvalidInput("lexicon: label outside alphabet");
        if (seen.insert(w).second) words_.push_back(std::move(w));
    }
}

Lexicon Lexicon::load(const std::string& path, const Alphabet& alphabet) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open lexicon: " + path);
    std::vector<LabelSequence> words;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        words.push_back(alphabet.encode(line));
    }
    return Lexicon(std::move(words));
}

namespace {

struct Token {
    double score = kLogZero;
    std::vector<std::size_t> history;  // word indices, in order of entry
};

bool token_better(const Token& a, const Token& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.history < b.history;
}

}  // namespace

DecodeResult token_passing_decode(const EmissionMatrix& E, const Lexicon& lexicon,
                                  bool single_word) {
    if (lexicon.empty()) throw InvalidInput("token_passing_decode: empty lexicon");
    const auto& words = lexicon.words();
    const std::size_t W = words.size();

    // dp[w] holds tokens over the blank-augmented chain of word w:
    // states 0..2L, even = blank, odd = label (l+1)/2.
    std::vector<std::vector<Token>> cur(W), next(W);
    auto label_at = [&](std::size_t w, std::size_t s) {
        return s % 2 ? words[w][(s - 1) / 2] : kBlank;
    };

    for (std::size_t w = 0; w < W; ++w) {
        const std::size_t S = 2 * words[w].size() + 1;
        cur[w].assign(S, {});
        cur[w][0] = {E.at(0, kBlank), {w}};
        cur[w][1] = {E.at(0, static_cast<std::size_t>(words[w][0])), {w}};
    }

    auto exit_token = [&](const std::vector<Token>& states, std::size_t w) {
        const std::size_t S = 2 * words[w].size() + 1;
        const Token& a = states[S - 1];
        const Token& b = states[S - 2];
        return token_better(a, b) ? a : b;
    };

    for (std::size_t t = 1; t < E.T; ++t) {
        // Best word-exit tokens of the previous step feed re-entries.
        Token best_exit_blank;    // exited through the trailing blank
        std::vector<Token> best_exit(W);
        for (std::size_t w = 0; w < W; ++w) {
            const std::size_t S = 2 * words[w].size() + 1;
            best_exit[w] = exit_token(cur[w], w);
            if (token_better(cur[w][S - 1], best_exit_blank)) best_exit_blank = cur[w][S - 1];
        }

        for (std::size_t w = 0; w < W; ++w) {
            const std::size_t S = 2 * words[w].size() + 1;
            next[w].assign(S, {});
            for (std::size_t s = 0; s < S; ++s) {
                Token best = cur[w][s];
                if (s >= 1 && token_better(cur[w][s - 1], best)) best = cur[w][s - 1];
                if (s >= 2 && label_at(w, s) != kBlank && label_at(w, s) != label_at(w, s - 2) &&
                    token_better(cur[w][s - 2], best))
                    best = cur[w][s - 2];

                // Word entry from another word's exit.
                if (!single_word && s <= 1) {
                    for (std::size_t v = 0; v < W; ++v) {
                        Token entry;
                        if (s == 1 && words[w][0] == words[v].back()) {
                            // Equal labels across the boundary need a blank.
                            entry = cur[v][2 * words[v].size()];
                        } else {
                            entry = best_exit[v];
                        }
                        if (entry.score == kLogZero) continue;
                        entry.history.push_back(w);
                        if (token_better(entry, best)) best = entry;
                    }
                }

                if (best.score == kLogZero) continue;
                best.score += E.at(t, static_cast<std::size_t>(label_at(w, s)));
                next[w][s] = std::move(best);
            }
        }
        cur.swap(next);
    }

    Token winner;
    for (std::size_t w = 0; w < W; ++w) {
        const Token tok = exit_token(cur[w], w);
        if (token_better(tok, winner)) winner = tok;
    }
    if (winner.score == kLogZero || winner.history.empty())
        throw NoFeasibleWord("token_passing_decode: no word admits an alignment");

    LabelSequence labels;
    for (std::size_t w : winner.history)
        labels.insert(labels.end(), words[w].begin(), words[w].end());
    return {labels, winner.score};
}

namespace {

struct BeamEntry {
    double log_pb = kLogZero;   // paths ending in blank
    double log_pnb = kLogZero;  // paths ending in the final label
    double total() const { return log_add(log_pb, log_pnb); }
};

double lm_term(const NGramModel* lm, double alpha, const LabelSequence& history, int label) {
    if (alpha == 0.0 || lm == nullptr) return 0.0;
    return alpha * lm->log_prob(label, history);
}

}  // namespace

DecodeResult beam_search_decode(const EmissionMatrix& E, const DecodeOptions& opts) {
    if (opts.beam_width < 1) throw InvalidInput("beam_search_decode: beam width must be >= 1");
    if (opts.candidate_count < 1 || opts.candidate_count > E.K)
        throw InvalidInput("beam_search_decode: CN must be in 1..K");
    if (opts.alpha > 0.0 && opts.lm == nullptr)
        throw InvalidInput("beam_search_decode: alpha > 0 requires a language model");

    std::map<LabelSequence, BeamEntry> beam;
    beam[{}] = {0.0, kLogZero};  // Pr-(empty, 0) = 1

    for (std::size_t t = 0; t < E.T; ++t) {
        // Keep the N best prefixes.
        std::vector<std::pair<LabelSequence, BeamEntry>> live(beam.begin(), beam.end());
        std::sort(live.begin(), live.end(), [](const auto& a, const auto& b) {
            return better(a.second.total(), a.first, b.second.total(), b.first);
        });
        if (live.size() > opts.beam_width) live.resize(opts.beam_width);

        // Emission pruning once per timestep: top-CN non-blank classes.
        std::vector<std::size_t> classes;
        for (std::size_t k = 1; k < E.K; ++k) classes.push_back(k);
        std::stable_sort(classes.begin(), classes.end(),
                         [&](std::size_t a, std::size_t b) { return E.at(t, a) > E.at(t, b); });
        if (classes.size() > opts.candidate_count) classes.resize(opts.candidate_count);

        std::map<LabelSequence, BeamEntry> grown;
        for (const auto& [prefix, entry] : live) {
            const double total = entry.total();

            // Extend by blank: prefix unchanged, mass moves to Pr-.
            {
                auto& slot = grown[prefix];
                slot.log_pb = log_add(slot.log_pb, total + E.at(t, kBlank));
            }
            // Repeat the final label without a separating blank: prefix unchanged.
            if (!prefix.empty()) {
                auto& slot = grown[prefix];
                slot.log_pnb = log_add(
                    slot.log_pnb,
                    entry.log_pnb + E.at(t, static_cast<std::size_t>(prefix.back())));
            }
            // Extend by each surviving non-blank label.
            for (std::size_t k : classes) {
                const double lm_w = lm_term(opts.lm, opts.alpha, prefix, static_cast<int>(k));
                const double mass =
                    (!prefix.empty() && prefix.back() == static_cast<int>(k)) ? entry.log_pb
                                                                              : total;
                if (mass == kLogZero) continue;
                LabelSequence extended = prefix;
                extended.push_back(static_cast<int>(k));
                auto& slot = grown[extended];
                slot.log_pnb = log_add(slot.log_pnb, mass + E.at(t, k) + lm_w);
            }
        }
        beam = std::move(grown);
    }

    DecodeResult best;
    double best_norm = kLogZero;
    bool first = true;
    for (const auto& [prefix, entry] : beam) {
        const double total = entry.total();
        if (total == kLogZero) continue;
        const double norm =
            prefix.empty() ? total : total / static_cast<double>(prefix.size());
        if (first || better(norm, prefix, best_norm, best.labels)) {
            best = {prefix, total};
            best_norm = norm;
            first = false;
        }
    }
    if (first) throw std::logic_error("beam_search_decode: empty final beam");
    return best;
}

DecodeResult exhaustive_decode_oracle(const EmissionMatrix& E, const NGramModel* lm,
                                      double alpha) {
    double total_paths = 1.0;
    for (std::size_t t = 0; t < E.T; ++t) {
        total_paths *= static_cast<double>(E.K);
        if (total_paths > 1e6) throw TooLargeForOracle("exhaustive_decode_oracle: K^T > 1e6");
    }

    DecodeResult best;
    double best_norm = kLogZero;
    bool first = true;

    // Enumerate label sequences of length 0..T over 1..K-1.
    std::vector<int> y;
    auto consider = [&](const LabelSequence& seq) {
        const ForwardBackwardResult fb = forward_backward(E, seq);
        if (!std::isfinite(fb.loss)) return;
        double score = -fb.loss;
        if (alpha != 0.0 && lm != nullptr) {
            LabelSequence history;
            for (int l : seq) {
                score += alpha * lm->log_prob(l, history);
                history.push_back(l);
            }
        }
        const double norm = seq.empty() ? score : score / static_cast<double>(seq.size());
        if (first || better(norm, seq, best_norm, best.labels)) {
            best = {seq, score};
            best_norm = norm;
            first = false;
        }
    };

    consider(y);
    for (;;) {
        // Odometer over variable-length sequences, shortest first.
        std::size_t i = y.size();
        while (i > 0 && y[i - 1] == static_cast<int>(E.K) - 1) {
            y[--i] = 1;
        }
        if (i == 0) {
            if (y.size() == E.T) break;
            y.assign(y.size() + 1, 1);
        } else {
            y[i - 1]++;
        }
        consider(y);
    }
    if (first) throw NoFeasibleWord("exhaustive_decode_oracle: no feasible sequence");
    return best;
}

}  // namespace sct
