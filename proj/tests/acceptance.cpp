// End-to-end acceptance checks. Each check prints one PASS/FAIL line; the
// process exits non-zero if any check fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "sct/ctc.hpp"
#include "sct/decode.hpp"
#include "sct/errors.hpp"
#include "sct/lm.hpp"
#include "sct/metrics.hpp"
#include "sct/net.hpp"
#include "sct/pipeline.hpp"
#include "sct/rng.hpp"
#include "sct/synth.hpp"
#include "sct/textline.hpp"

using namespace sct;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail = "") {
    std::cout << name << ": " << (ok ? "PASS" : "FAIL");
    if (!detail.empty()) std::cout << " (" << detail << ")";
    std::cout << std::endl;
    if (!ok) ++failures;
}

EmissionMatrix random_emissions(Rng& rng, std::size_t T, std::size_t K) {
    EmissionMatrix E;
    E.T = T;
    E.K = K;
    E.log_probs.resize(T * K);
    for (std::size_t t = 0; t < T; ++t) {
        std::vector<double> row(K);
        double z = 0.0;
        for (auto& v : row) {
            v = 0.05 + rng.uniform();
            z += v;
        }
        for (std::size_t k = 0; k < K; ++k) E.at(t, k) = std::log(row[k] / z);
    }
    return E;
}

// All label sequences over 1..K-1 of length 0..max_len.
void enumerate_sequences(std::size_t K, std::size_t max_len,
                         const std::function<void(const LabelSequence&)>& fn) {
    LabelSequence y;
    fn(y);
    for (;;) {
        std::size_t i = y.size();
        while (i > 0 && y[i - 1] == static_cast<int>(K) - 1) y[--i] = 1;
        if (i == 0) {
            if (y.size() == max_len) return;
            y.assign(y.size() + 1, 1);
        } else {
            y[i - 1]++;
        }
        fn(y);
    }
}

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

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------

void check_ctc_oracle_equivalence() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(101);
    double worst = 0.0;
    for (int it = 0; it < 100; ++it) {
        const std::size_t T = 1 + rng.uniform_int(6);  // <= 6
        const std::size_t K = 2 + rng.uniform_int(3);  // <= 4
        const EmissionMatrix E = random_emissions(rng, T, K);
        LabelSequence y;
        const std::size_t len = rng.uniform_int(T + 1);
        for (std::size_t i = 0; i < len; ++i)
            y.push_back(1 + static_cast<int>(rng.uniform_int(K - 1)));

        const double brute = label_log_prob_bruteforce(E, y);
        const ForwardBackwardResult fb = forward_backward(E, y);
        const double dp = -fb.loss;
        if (brute == kLogZero || dp == kLogZero) {
            if (brute != dp) worst = std::max(worst, 1.0);
            continue;
        }
        worst = std::max(worst, std::abs(dp - brute));
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report("ctc forward-backward matches brute-force path enumeration",
           worst <= 1e-9 && secs < 5.0,
           "max |diff| " + std::to_string(worst) + ", " + std::to_string(secs) + "s");
}

void check_ctc_normalization() {
    Rng rng(202);
    double worst = 0.0;
    for (int it = 0; it < 20; ++it) {
        const std::size_t T = 1 + rng.uniform_int(5);  // <= 5
        const std::size_t K = 2 + rng.uniform_int(2);  // <= 3
        const EmissionMatrix E = random_emissions(rng, T, K);
        double total = 0.0;
        enumerate_sequences(K, T, [&](const LabelSequence& y) {
            const ForwardBackwardResult fb = forward_backward(E, y);
            if (std::isfinite(fb.loss)) total += std::exp(-fb.loss);
        });
        worst = std::max(worst, std::abs(total - 1.0));
    }
    report("label-sequence probabilities sum to one", worst <= 1e-9,
           "max |sum-1| " + std::to_string(worst));
}

void check_gradients() {
    // Part 1: fused softmax+CTC logit gradient vs central finite differences.
    Rng rng(303);
    double worst_logit = 0.0;
    for (int it = 0; it < 50; ++it) {
        const std::size_t T = 2 + rng.uniform_int(4);
        const std::size_t K = 2 + rng.uniform_int(3);
        std::vector<double> logits(T * K);
        for (auto& v : logits) v = rng.uniform(-2.0, 2.0);
        LabelSequence y;
        const std::size_t len = 1 + rng.uniform_int(std::max<std::size_t>(1, T / 2));
        for (std::size_t i = 0; i < len; ++i)
            y.push_back(1 + static_cast<int>(rng.uniform_int(K - 1)));
        std::size_t need = y.size();
        for (std::size_t i = 1; i < y.size(); ++i)
            if (y[i] == y[i - 1]) ++need;
        if (need > T) {
            --it;
            continue;
        }

        const CtcGradient g = ctc_logit_gradient(logits, T, K, y);
        const double h = 1e-6;
        for (std::size_t i = 0; i < logits.size(); ++i) {
            std::vector<double> lp = logits, lm = logits;
            lp[i] += h;
            lm[i] -= h;
            const double fp = ctc_logit_gradient(lp, T, K, y).loss;
            const double fm = ctc_logit_gradient(lm, T, K, y).loss;
            const double fd = (fp - fm) / (2.0 * h);
            const double rel =
                std::abs(g.dlogits[i] - fd) / std::max(1.0, std::abs(fd));
            worst_logit = std::max(worst_logit, rel);
        }
    }
    report("ctc logit gradient matches finite differences", worst_logit <= 1e-6,
           "max rel err " + std::to_string(worst_logit));

    // Part 2: network parameter gradients on the reduced profile.
    NetworkConfig cfg = NetworkConfig::desk_profile(4, 1, 77);
    Network net(cfg);
    Rng wr(78);
    for (auto& w : net.params().back().weight) w = 0.3 * wr.gaussian();

    const std::size_t B = 2;
    std::vector<double> x(B * 32 * 32);
    for (auto& v : x) v = wr.uniform();
    std::vector<double> dl(B * 4);
    for (auto& v : dl) v = wr.uniform(-1.0, 1.0);

    auto loss_of = [&](const Network& n) {
        const auto logits = n.forward_logits_train(x.data(), B);
        double L = 0.0;
        for (std::size_t i = 0; i < logits.size(); ++i) L += dl[i] * logits[i];
        return L;
    };

    TrainSchedule sched;
    sched.initial_lr = 1.0;
    sched.momentum = 0.0;
    sched.decay_epochs = {};
    Network stepped = net;
    stepped.train_step(x.data(), B, dl, sched, 0);

    const double h = 1e-5;
    double worst_param = 0.0;
    auto probe = [&](std::vector<double> LayerParams::*field, std::size_t li) {
        auto& vec = net.params()[li].*field;
        const auto& after = stepped.params()[li].*field;
        if (vec.empty()) return;
        Rng pick(li * 7919 + 5);
        for (int s = 0; s < 6; ++s) {
            const std::size_t idx = pick.uniform_int(vec.size());
            const double analytic = vec[idx] - after[idx];
            const double orig = vec[idx];
            vec[idx] = orig + h;
            const double lp = loss_of(net);
            vec[idx] = orig - h;
            const double lm = loss_of(net);
            vec[idx] = orig;
            const double fd = (lp - lm) / (2.0 * h);
            const double rel = std::abs(analytic - fd) / std::max(1.0, std::abs(fd));
            worst_param = std::max(worst_param, rel);
        }
    };
    for (std::size_t li = 0; li < net.params().size(); ++li) {
        probe(&LayerParams::weight, li);
        probe(&LayerParams::bias, li);
        probe(&LayerParams::gamma, li);
        probe(&LayerParams::beta, li);
    }
    report("network parameter gradients match finite differences",
           worst_param <= 1e-4, "max rel err " + std::to_string(worst_param));
}

void check_beam_equals_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    Alphabet alpha({"a", "b"});
    std::istringstream corpus("ab ba abab bb a");
    NGramModel lm = NGramModel::train(corpus, 3, alpha, 0.9);

    Rng rng(404);
    int compared = 0, matched = 0, skipped = 0;
    for (int it = 0; it < 200; ++it) {
        const std::size_t T = 2 + rng.uniform_int(4);  // <= 5
        const std::size_t K = 2 + rng.uniform_int(2);  // <= 3
        const EmissionMatrix E = random_emissions(rng, T, K);
        const bool with_lm = it % 2 == 1 && K == 3;
        const double alpha_w = with_lm ? 1.0 : 0.0;
        const NGramModel* use_lm = with_lm ? &lm : nullptr;

        // Top-two normalized-score gap; near-ties are excluded.
        std::vector<double> scores;
        enumerate_sequences(K, T, [&](const LabelSequence& y) {
            const ForwardBackwardResult fb = forward_backward(E, y);
            if (!std::isfinite(fb.loss)) return;
            double s = -fb.loss;
            if (use_lm != nullptr) {
                LabelSequence hist;
                for (int l : y) {
                    s += alpha_w * use_lm->log_prob(l, hist);
                    hist.push_back(l);
                }
            }
            scores.push_back(y.empty() ? s : s / static_cast<double>(y.size()));
        });
        std::sort(scores.begin(), scores.end(), std::greater<double>());
        if (scores.size() >= 2 && scores[0] - scores[1] < 1e-12) {
            ++skipped;
            continue;
        }

        DecodeOptions opts;
        opts.beam_width = 1u << 20;  // never prunes at these sizes
        opts.candidate_count = K - 1;
        opts.alpha = alpha_w;
        opts.lm = use_lm;
        const DecodeResult beam = beam_search_decode(E, opts);
        const DecodeResult oracle = exhaustive_decode_oracle(E, use_lm, alpha_w);
        ++compared;
        if (beam.labels == oracle.labels &&
            std::abs(beam.log_score - oracle.log_score) <= 1e-9)
            ++matched;
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report("beam search matches the exhaustive oracle",
           compared == matched && compared > 0 && secs < 30.0,
           std::to_string(matched) + "/" + std::to_string(compared) + " matched, " +
               std::to_string(skipped) + " near-ties skipped, " +
               std::to_string(secs) + "s");
}

void check_token_passing_oracle() {
    Rng rng(505);
    int checked = 0, ok = 0;
    for (int it = 0; it < 100; ++it) {
        const std::size_t T = 2 + rng.uniform_int(5);  // <= 6
        const std::size_t K = 3 + rng.uniform_int(2);
        const EmissionMatrix E = random_emissions(rng, T, K);

        std::vector<LabelSequence> words;
        const std::size_t W = 1 + rng.uniform_int(20);
        for (std::size_t w = 0; w < W; ++w) {
            LabelSequence word;
            const std::size_t len = 1 + rng.uniform_int(3);
            for (std::size_t i = 0; i < len; ++i)
                word.push_back(1 + static_cast<int>(rng.uniform_int(K - 1)));
            words.push_back(word);
        }
        const Lexicon lex(words);

        double best = kLogZero;
        LabelSequence best_word;
        for (const auto& w : lex.words()) {
            const double s = viterbi_bruteforce(E, w);
            if (s > best || (s == best && w < best_word)) {
                best = s;
                best_word = w;
            }
        }

        ++checked;
        if (best == kLogZero) {
            try {
                token_passing_decode(E, lex, true);
            } catch (const NoFeasibleWord&) {
                ++ok;
            }
        } else {
            const DecodeResult r = token_passing_decode(E, lex, true);
            if (r.labels == best_word && std::abs(r.log_score - best) <= 1e-9) ++ok;
        }
    }
    report("token passing matches per-word Viterbi enumeration", checked == ok,
           std::to_string(ok) + "/" + std::to_string(checked));
}

void check_lm() {
    Alphabet alpha({"a", "b"});
    std::istringstream corpus("abab");
    NGramModel lm = NGramModel::train(corpus, 2, alpha, 0.9);
    // After "a" the corpus always continues with "b":
    // 0.9 * 1.0 + 0.1 * (0.9 * 0.5 + 0.1 * 0.5) = 0.95.
    // exp(log p) costs one rounding step, so "exact" means within 1 ulp here.
    const double p_b_a = std::exp(lm.log_prob(2, {1}));
    const double p_a_a = std::exp(lm.log_prob(1, {1}));
    const bool fixtures =
        std::abs(p_b_a - 0.95) <= 1e-15 && std::abs(p_a_a - 0.05) <= 1e-15;

    Alphabet big({"a", "b", "c", "d"});
    std::istringstream corpus2("abcd dcba aabb ccdd abab badc");
    NGramModel lm2 = NGramModel::train(corpus2, 3, big, 0.8);
    Rng rng(606);
    double worst = 0.0;
    for (int it = 0; it < 100; ++it) {
        std::vector<int> hist;
        const std::size_t len = rng.uniform_int(4);
        for (std::size_t i = 0; i < len; ++i)
            hist.push_back(1 + static_cast<int>(rng.uniform_int(4)));
        double total = 0.0;
        for (int k = 1; k <= 4; ++k) total += std::exp(lm2.log_prob(k, hist));
        worst = std::max(worst, std::abs(total - 1.0));
    }
    report("language model fixtures and normalization",
           fixtures && worst <= 1e-9,
           "P(b|a)=" + std::to_string(p_b_a) + ", max |sum-1| " + std::to_string(worst));
}

// Shared state between the end-to-end and determinism checks.
struct EndToEnd {
    fs::path dir;
    std::string alphabet_path, train_manifest, heldout_manifest, lexicon_path;
    std::string checkpoint;
    std::vector<std::string> vocab;
};

EndToEnd build_end_to_end_corpus() {
    EndToEnd e;
    e.dir = "acceptance_e2e";
    fs::remove_all(e.dir);
    fs::create_directories(e.dir);

    Alphabet alpha({"a", "b", "c", "d", "e", "f"});
    e.alphabet_path = (e.dir / "alphabet.txt").string();
    alpha.save(e.alphabet_path);

    GlyphSet glyphs(alpha, 2026);

    DatasetSpec train_spec;
    train_spec.count = 2000;
    train_spec.min_len = 1;
    train_spec.max_len = 5;
    train_spec.seed = 11;
    e.train_manifest = generate_dataset(glyphs, train_spec, (e.dir / "train").string());

    // Held-out lines drawn from a fixed 20-word vocabulary so that the
    // lexicon decoder has the full candidate set.
    e.vocab = {"a",    "be",   "cab",  "dead", "faced", "bad",  "cafe",
               "fee",  "dab",  "ace",  "bead", "fad",   "cede", "deaf",
               "abba", "face", "bed",  "cad",  "ebb",   "fab"};
    e.lexicon_path = (e.dir / "lexicon.txt").string();
    {
        std::ofstream out(e.lexicon_path);
        for (const auto& w : e.vocab) out << w << "\n";
    }

    const fs::path held = e.dir / "heldout";
    fs::create_directories(held);
    e.heldout_manifest = (held / "manifest.tsv").string();
    std::ofstream manifest(e.heldout_manifest);
    Rng rng(2027);
    for (std::size_t i = 0; i < 200; ++i) {
        const std::string& text = e.vocab[rng.uniform_int(e.vocab.size())];
        const Image img = render_line(glyphs, text, 900000 + i);
        char name[32];
        std::snprintf(name, sizeof(name), "line_%06zu.pgm", i);
        write_pgm(img, (held / name).string());
        manifest << name << "\t" << text << "\n";
    }
    return e;
}

TrainConfig end_to_end_train_config(const EndToEnd& e, const std::string& out) {
    TrainConfig cfg;
    cfg.manifest_path = e.train_manifest;
    cfg.alphabet_path = e.alphabet_path;
    cfg.profile = "desk";
    cfg.epochs = 3;
    cfg.schedule.initial_lr = 0.005;
    cfg.schedule.momentum = 0.9;
    cfg.schedule.decay_factor = 0.3;
    cfg.schedule.decay_epochs = {2};
    cfg.window.window_widths = {16};
    cfg.window.stride = 4;
    cfg.seed = 90210;
    cfg.out_checkpoint = out;
    return cfg;
}

void check_end_to_end(EndToEnd& e) {
    const auto t0 = std::chrono::steady_clock::now();
    e.checkpoint = (e.dir / "model.ckpt").string();
    train_model(end_to_end_train_config(e, e.checkpoint));
    const double train_secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    PipelineConfig pc;
    pc.checkpoint_path = e.checkpoint;
    pc.manifest_path = e.heldout_manifest;
    pc.method = "naive";
    const EvalReport naive = run_pipeline(pc);

    pc.method = "lexicon";
    pc.lexicon_path = e.lexicon_path;
    const EvalReport lex = run_pipeline(pc);

    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "train %.0fs, naive %.1f%%, lexicon %.1f%%", train_secs,
                  100.0 * naive.word_accuracy, 100.0 * lex.word_accuracy);
    report("end-to-end training reaches target accuracy",
           train_secs <= 1800.0 && naive.word_accuracy >= 0.95 &&
               lex.word_accuracy >= 0.99,
           detail);
}

void check_determinism(const EndToEnd& e) {
    // Same-seed reruns of a complete train+eval cycle are bitwise identical.
    // A reduced corpus keeps the double run cheap; every stage is exercised.
    const fs::path dir = e.dir / "determinism";
    fs::create_directories(dir);

    Alphabet alpha = Alphabet::load(e.alphabet_path);
    GlyphSet glyphs(alpha, 2026);
    const std::string small_manifest =
        generate_dataset(glyphs, {60, 1, 4, 31}, (dir / "data").string());

    auto run_once = [&](const std::string& tag) {
        TrainConfig cfg = end_to_end_train_config(e, (dir / (tag + ".ckpt")).string());
        cfg.manifest_path = small_manifest;
        cfg.epochs = 2;
        train_model(cfg);
        PipelineConfig pc;
        pc.checkpoint_path = cfg.out_checkpoint;
        pc.manifest_path = small_manifest;
        pc.method = "naive";
        pc.report_path = (dir / (tag + ".tsv")).string();
        run_pipeline(pc);
        return std::make_pair(slurp(cfg.out_checkpoint), slurp(pc.report_path));
    };
    const auto [ckpt_a, rep_a] = run_once("run_a");
    const auto [ckpt_b, rep_b] = run_once("run_b");
    const bool reruns_identical =
        !ckpt_a.empty() && ckpt_a == ckpt_b && rep_a == rep_b;

    // 1 vs 8 workers over the full held-out set and trained model.
    PipelineConfig pc;
    pc.checkpoint_path = e.checkpoint;
    pc.manifest_path = e.heldout_manifest;
    pc.method = "naive";
    pc.workers = 1;
    pc.report_path = (dir / "workers1.tsv").string();
    run_pipeline(pc);
    pc.workers = 8;
    pc.report_path = (dir / "workers8.tsv").string();
    run_pipeline(pc);
    const bool workers_identical =
        slurp((dir / "workers1.tsv").string()) == slurp((dir / "workers8.tsv").string());

    report("identical seeds give bitwise-identical checkpoints and reports",
           reruns_identical && workers_identical,
           std::string(reruns_identical ? "reruns ok" : "reruns differ") + ", " +
               (workers_identical ? "workers ok" : "workers differ"));
}

void check_geometry() {
    const bool ok = window_count(256, 32, 4) == 57 && window_count(512, 40, 8) == 60;
    report("window counts match the sliding-window formula", ok,
           std::to_string(window_count(256, 32, 4)) + ", " +
               std::to_string(window_count(512, 40, 8)));
}

void check_metrics() {
    const bool fixtures =
        accurate_rate({{"abc", "abc"}}) == 1.0 &&
        std::abs(accurate_rate({{"abc", "ab"}}) - 2.0 / 3.0) < 1e-15 &&
        accurate_rate({{"ab", "abcd"}}) == 0.0;
    const bool negative = accurate_rate({{"a", "abcd"}}) < 0.0;
    report("accurate-rate fixtures reproduce exactly and go negative unclamped",
           fixtures && negative);
}

}  // namespace

int main() {
    check_ctc_oracle_equivalence();
    check_ctc_normalization();
    check_gradients();
    check_beam_equals_oracle();
    check_token_passing_oracle();
    check_lm();

    EndToEnd e2e = build_end_to_end_corpus();
    check_end_to_end(e2e);
    check_determinism(e2e);
    fs::remove_all(e2e.dir);

    check_geometry();
    check_metrics();

    std::cout << (failures == 0 ? "ALL CHECKS PASSED" : "FAILURES: " +
                  std::to_string(failures))
              << std::endl;
    return failures == 0 ? 0 : 1;
}
