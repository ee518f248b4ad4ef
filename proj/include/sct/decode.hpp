#ifndef SCT_DECODE_HPP
#define SCT_DECODE_HPP

#include <cstddef>
#include <string>
#include <vector>

#include "sct/ctc.hpp"
#include "sct/lm.hpp"

namespace sct {

struct DecodeResult {
    LabelSequence labels;
    double log_score = kLogZero;
};

// Collapse of the per-row argmax path; score is the path log-probability.
DecodeResult best_path_decode(const EmissionMatrix& E);

// Word list with blank-augmented state chains.
class Lexicon {
public:
    Lexicon() = default;
    explicit Lexicon(std::vector<LabelSequence> words);
    static Lexicon load(const std::string& path, const Alphabet& alphabet);

    const std::vector<LabelSequence>& words() const { return words_; }
    bool empty() const { return words_.empty(); }

private:
    std::vector<LabelSequence> words_;  // deduplicated, insertion order
};

// Viterbi token passing over the lexicon. With single_word set, hypotheses
// spanning more than one word score -inf.
DecodeResult token_passing_decode(const EmissionMatrix& E, const Lexicon& lexicon,
                                  bool single_word);

struct DecodeOptions {
    std::size_t beam_width = 32;      // N
    std::size_t candidate_count = 10; // CN
    double alpha = 1.0;               // LM exponent
    const NGramModel* lm = nullptr;
};

// LM-weighted prefix beam search. Returns the prefix maximizing
// Pr(y,T)^(1/|y|); the empty prefix competes unnormalized. log_score is the
// accumulated (unnormalized) log Pr(y,T).
DecodeResult beam_search_decode(const EmissionMatrix& E, const DecodeOptions& opts);

// Exact search over all label sequences up to length T, scored by the exact
// CTC probability times the LM product. Guarded to K^T <= 1e6.
DecodeResult exhaustive_decode_oracle(const EmissionMatrix& E, const NGramModel* lm,
                                      double alpha);

}  // namespace sct

#endif  // SCT_DECODE_HPP
