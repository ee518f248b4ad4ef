#ifndef SCT_CTC_HPP
#define SCT_CTC_HPP

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

namespace sct {

inline constexpr int kBlank = 0;
inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

// log(exp(a) + exp(b)) guarding the -inf cases.
double log_add(double a, double b);

// Per-window natural-log class probabilities, blank at column 0.
struct EmissionMatrix {
    std::size_t T = 0;
    std::size_t K = 0;
    std::vector<double> log_probs;  // [T, K]

    double& at(std::size_t t, std::size_t k) { return log_probs[t * K + k]; }
    double at(std::size_t t, std::size_t k) const { return log_probs[t * K + k]; }
};

// Blank-free transcription; indices in 1..K-1.
using LabelSequence = std::vector<int>;

// Mapping B: merge adjacent duplicates, then drop blanks.
LabelSequence collapse(const std::vector<int>& path);

// Sum over t of log P(path[t] | t).
double path_log_prob(const EmissionMatrix& E, const std::vector<int>& path);

// Exact log P(y|X) by enumerating all K^T paths. Guarded to K^T <= 1e7.
double label_log_prob_bruteforce(const EmissionMatrix& E, const LabelSequence& y);

struct ForwardBackwardResult {
    double loss = 0.0;                // -log P(y|X); +inf when infeasible
    std::vector<double> posteriors;   // [T, K] gammas; zero when infeasible
};

// CTC forward-backward over the blank-augmented target.
ForwardBackwardResult forward_backward(const EmissionMatrix& E, const LabelSequence& y);

// Fused softmax+CTC gradient on pre-softmax logits: softmax(logits) - gamma.
// Also reports the loss for the instance.
struct CtcGradient {
    double loss = 0.0;
    std::vector<double> dlogits;  // [T, K]
};
CtcGradient ctc_logit_gradient(const std::vector<double>& logits, std::size_t T,
                               std::size_t K, const LabelSequence& y);

// "CTC-EMIT v1" text format round-trip.
void write_emissions(const EmissionMatrix& E, const std::string& path);
EmissionMatrix read_emissions(const std::string& path);

}  // namespace sct

#endif  // SCT_CTC_HPP
