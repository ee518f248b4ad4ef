#include "sct/metrics.hpp"

#include <algorithm>
#include <cctype>

#include "sct/errors.hpp"

namespace sct {

namespace {

std::string lower(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

}  // namespace

EditCounts edit_counts(const std::string& truth, const std::string& hypothesis) {
    const std::size_t n = truth.size(), m = hypothesis.size();
    std::vector<std::size_t> dp((n + 1) * (m + 1));
    auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return dp[i * (m + 1) + j]; };
    for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
    for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t j = 1; j <= m; ++j)
            at(i, j) = std::min({at(i - 1, j - 1) + (truth[i - 1] != hypothesis[j - 1]),
                                 at(i - 1, j) + 1, at(i, j - 1) + 1});

    // Backtrace, preferring the diagonal (match/substitution) on ties.
    EditCounts counts;
    counts.total = n;
    std::size_t i = n, j = m;
    while (i > 0 || j > 0) {
        if (i > 0 && j > 0 &&
            at(i, j) == at(i - 1, j - 1) + (truth[i - 1] != hypothesis[j - 1])) {
            if (truth[i - 1] != hypothesis[j - 1]) counts.substitutions++;
            --i;
            --j;
        } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
            counts.deletions++;
            --i;
        } else {
            counts.insertions++;
            --j;
        }
    }
    return counts;
}

double word_accuracy(const std::vector<EvalPair>& pairs, bool case_insensitive) {
    if (pairs.empty()) throw InvalidInput("word_accuracy: empty pair list");
    std::size_t correct = 0;
    for (const auto& p : pairs) {
        const std::string a = case_insensitive ? lower(p.truth) : p.truth;
        const std::string b = case_insensitive ? lower(p.hypothesis) : p.hypothesis;
        correct += a == b;
    }
    return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

double accurate_rate(const std::vector<EvalPair>& pairs, bool case_insensitive) {
    std::size_t N = 0;
    long errors = 0;
    for (const auto& p : pairs) {
        const std::string a = case_insensitive ? lower(p.truth) : p.truth;
        const std::string b = case_insensitive ? lower(p.hypothesis) : p.hypothesis;
        const EditCounts c = edit_counts(a, b);
        N += c.total;
        errors += static_cast<long>(c.substitutions + c.deletions + c.insertions);
    }
    if (N == 0) throw InvalidInput("accurate_rate: no reference characters");
    return (static_cast<double>(N) - static_cast<double>(errors)) / static_cast<double>(N);
}

}  // namespace sct
