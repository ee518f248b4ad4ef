#ifndef SCT_METRICS_HPP
#define SCT_METRICS_HPP

#include <cstddef>
#include <string>
#include <vector>

namespace sct {

struct EvalPair {
    std::string truth;
    std::string hypothesis;
};

struct EditCounts {
    std::size_t total = 0;          // N, characters of truth
    std::size_t substitutions = 0;  // S
    std::size_t deletions = 0;      // D
    std::size_t insertions = 0;     // I
};

// Unit-cost Levenshtein alignment; ties resolved substitution-first.
EditCounts edit_counts(const std::string& truth, const std::string& hypothesis);

// Fraction of exact matches; optionally case-insensitive.
double word_accuracy(const std::vector<EvalPair>& pairs, bool case_insensitive = false);

// AR = (N - S - D - I) / N over the summed alignment counts; may be negative.
double accurate_rate(const std::vector<EvalPair>& pairs, bool case_insensitive = false);

}  // namespace sct

#endif  // SCT_METRICS_HPP
