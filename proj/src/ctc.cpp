#include "sct/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "sct/errors.hpp"

namespace sct {

double log_add(double a, double b) {
    if (a == kLogZero) return b;
    if (b == kLogZero) return a;
    if (a < b) std::swap(a, b);
    return a + std::log1p(std::exp(b - a));
}

LabelSequence collapse(const std::vector<int>& path) {
    LabelSequence out;
    int prev = -1;
    for (int k : path) {
        if (k != prev && k != kBlank) out.push_back(k);
        prev = k;
    }
    return out;
}

double path_log_prob(const EmissionMatrix& E, const std::vector<int>& path) {
    if (path.size() != E.T) throw InvalidInput("path_log_prob: path length != T");
    double lp = 0.0;
    for (std::size_t t = 0; t < E.T; ++t) {
        const int k = path[t];
        if (k < 0 || static_cast<std::size_t>(k) >= E.K)
            throw InvalidInput("path_log_prob: class index out of range");
        lp += E.at(t, static_cast<std::size_t>(k));
    }
    return lp;
}

double label_log_prob_bruteforce(const EmissionMatrix& E, const LabelSequence& y) {
    double total_paths = 1.0;
    for (std::size_t t = 0; t < E.T; ++t) {
        total_paths *= static_cast<double>(E.K);
        if (total_paths > 1e7) throw TooLargeForOracle("label_log_prob_bruteforce: K^T > 1e7");
    }
    std::vector<int> path(E.T, 0);
    double acc = kLogZero;
    for (;;) {
        if (collapse(path) == y) acc = log_add(acc, path_log_prob(E, path));
        // Odometer increment over K^T paths.
        std::size_t t = 0;
        while (t < E.T && ++path[t] == static_cast<int>(E.K)) path[t++] = 0;
        if (t == E.T) break;
    }
    return acc;
}

namespace {

// Blank-augmented target: blank, y1, blank, y2, ..., blank.
std::vector<int> augment(const LabelSequence& y) {
    std::vector<int> ext(2 * y.size() + 1, kBlank);
    for (std::size_t i = 0; i < y.size(); ++i) ext[2 * i + 1] = y[i];
    return ext;
}

}  // namespace

ForwardBackwardResult forward_backward(const EmissionMatrix& E, const LabelSequence& y) {
    for (int k : y)
        if (k <= 0 || static_cast<std::size_t>(k) >= E.K)
            throw InvalidInput("forward_backward: label outside 1..K-1");

    const std::size_t T = E.T;
    const std::size_t K = E.K;
    const std::vector<int> ext = augment(y);
    const std::size_t S = ext.size();

    ForwardBackwardResult res;
    res.posteriors.assign(T * K, 0.0);
    if (S > 2 * T + 1) {  // no alignment can fit
        res.loss = std::numeric_limits<double>::infinity();
        return res;
    }

    auto allows_skip = [&](std::size_t s) {
        // Skip over a blank is legal unless the neighbouring labels repeat.
        return s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2];
    };

    std::vector<double> alpha(T * S, kLogZero), beta(T * S, kLogZero);
    alpha[0] = E.at(0, static_cast<std::size_t>(ext[0]));
    if (S > 1) alpha[1] = E.at(0, static_cast<std::size_t>(ext[1]));
    for (std::size_t t = 1; t < T; ++t) {
        for (std::size_t s = 0; s < S; ++s) {
            double a = alpha[(t - 1) * S + s];
            if (s >= 1) a = log_add(a, alpha[(t - 1) * S + s - 1]);
            if (allows_skip(s)) a = log_add(a, alpha[(t - 1) * S + s - 2]);
            alpha[t * S + s] = a + E.at(t, static_cast<std::size_t>(ext[s]));
        }
    }

    double log_py = alpha[(T - 1) * S + S - 1];
    if (S > 1) log_py = log_add(log_py, alpha[(T - 1) * S + S - 2]);
    if (log_py == kLogZero) {
        res.loss = std::numeric_limits<double>::infinity();
        return res;
    }
    res.loss = -log_py;

    beta[(T - 1) * S + S - 1] = 0.0;
    if (S > 1) beta[(T - 1) * S + S - 2] = 0.0;
    for (std::size_t t = T - 1; t-- > 0;) {
        for (std::size_t s = 0; s < S; ++s) {
            double b = beta[(t + 1) * S + s] + E.at(t + 1, static_cast<std::size_t>(ext[s]));
            if (s + 1 < S)
                b = log_add(b, beta[(t + 1) * S + s + 1] +
                                   E.at(t + 1, static_cast<std::size_t>(ext[s + 1])));
            if (s + 2 < S && allows_skip(s + 2))
                b = log_add(b, beta[(t + 1) * S + s + 2] +
                                   E.at(t + 1, static_cast<std::size_t>(ext[s + 2])));
            beta[t * S + s] = b;
        }
    }

    for (std::size_t t = 0; t < T; ++t) {
        std::vector<double> log_gamma(K, kLogZero);
        for (std::size_t s = 0; s < S; ++s) {
            const double g = alpha[t * S + s] + beta[t * S + s];
            auto& cell = log_gamma[static_cast<std::size_t>(ext[s])];
            cell = log_add(cell, g);
        }
        for (std::size_t k = 0; k < K; ++k)
            res.posteriors[t * K + k] =
                log_gamma[k] == kLogZero ? 0.0 : std::exp(log_gamma[k] - log_py);
    }
    return res;
}

CtcGradient ctc_logit_gradient(const std::vector<double>& logits, std::size_t T,
                               std::size_t K, const LabelSequence& y) {
    if (logits.size() != T * K) throw InvalidInput("ctc_logit_gradient: bad logits shape");

    EmissionMatrix E;
    E.T = T;
    E.K = K;
    E.log_probs.resize(T * K);
    std::vector<double> softmax(T * K);
    for (std::size_t t = 0; t < T; ++t) {
        double mx = logits[t * K];
        for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, logits[t * K + k]);
        double z = 0.0;
        for (std::size_t k = 0; k < K; ++k) z += std::exp(logits[t * K + k] - mx);
        const double log_z = mx + std::log(z);
        for (std::size_t k = 0; k < K; ++k) {
            E.log_probs[t * K + k] = logits[t * K + k] - log_z;
            softmax[t * K + k] = std::exp(E.log_probs[t * K + k]);
        }
    }

    const ForwardBackwardResult fb = forward_backward(E, y);
    if (!std::isfinite(fb.loss))
        throw InfeasibleTarget("ctc_logit_gradient: target admits no alignment");

    CtcGradient grad;
    grad.loss = fb.loss;
    grad.dlogits.resize(T * K);
    for (std::size_t i = 0; i < T * K; ++i) grad.dlogits[i] = softmax[i] - fb.posteriors[i];
    return grad;
}

void write_emissions(const EmissionMatrix& E, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write emissions: " + path);
    out << "CTC-EMIT v1 " << E.T << " " << E.K << "\n";
    out << std::setprecision(17);
    for (std::size_t t = 0; t < E.T; ++t) {
        for (std::size_t k = 0; k < E.K; ++k) {
            if (k) out << " ";
            out << E.at(t, k);
        }
        out << "\n";
    }
    if (!out) throw IoError("short write: " + path);
}

EmissionMatrix read_emissions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open emissions: " + path);
    std::string magic, version;
    EmissionMatrix E;
    in >> magic >> version >> E.T >> E.K;
    if (!in || magic != "CTC-EMIT" || version != "v1")
        throw InvalidInput("bad emission header: " + path);
    if (E.T < 1 || E.K < 2) throw InvalidInput("bad emission shape: " + path);
    E.log_probs.resize(E.T * E.K);
    // Tokenize by hand: the stream extractor does not accept "-inf".
    std::string tok;
    for (double& v : E.log_probs) {
        if (!(in >> tok)) throw InvalidInput("truncated emissions: " + path);
        try {
            v = std::stod(tok);
        } catch (const std::exception&) {
            throw InvalidInput("bad emission value '" + tok + "': " + path);
        }
    }
    return E;
}

}  // namespace sct
