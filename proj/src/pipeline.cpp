#include "sct/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sct/errors.hpp"
#include "sct/rng.hpp"
#include "sct/textline.hpp"

namespace sct {

namespace fs = std::filesystem;

std::vector<ManifestEntry> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path);
    const fs::path base = fs::path(path).parent_path();
    std::vector<ManifestEntry> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw InvalidInput("manifest line " + std::to_string(lineno) + " has no TAB: " +
                               path);
        ManifestEntry e;
        fs::path img = line.substr(0, tab);
        if (img.is_relative()) img = base / img;
        e.image_path = img.string();
        e.transcript = line.substr(tab + 1);
        entries.push_back(std::move(e));
    }
    return entries;
}

namespace {

// Minimum frames a transcript needs: one per label plus one blank between
// adjacent repeats.
std::size_t min_frames(const LabelSequence& y) {
    std::size_t need = y.size();
    for (std::size_t i = 1; i < y.size(); ++i)
        if (y[i] == y[i - 1]) ++need;
    return need;
}

}  // namespace

TrainStats train_model(const TrainConfig& cfg) {
    if (!(cfg.schedule.initial_lr > 0.0) || !std::isfinite(cfg.schedule.initial_lr))
        throw InvalidInput("learning rate must be positive");
    if (cfg.schedule.momentum < 0.0 || cfg.schedule.momentum >= 1.0)
        throw InvalidInput("momentum must be in [0, 1)");
    if (!(cfg.schedule.epoch_fraction > 0.0) || cfg.schedule.epoch_fraction > 1.0)
        throw InvalidInput("epoch fraction must be in (0, 1]");
    const Alphabet alphabet = Alphabet::load(cfg.alphabet_path);
    const std::size_t classes = alphabet.num_classes();
    const std::size_t channels = cfg.window.window_widths.size();

    NetworkConfig net_cfg =
        cfg.profile == "paper"
            ? NetworkConfig::paper_profile(classes, channels, cfg.seed)
            : NetworkConfig::desk_profile(classes, channels, cfg.seed);
    if (cfg.profile != "paper" && cfg.profile != "desk")
        throw InvalidInput("unknown network profile: " + cfg.profile);
    Network net(net_cfg);

    const auto entries = load_manifest(cfg.manifest_path);
    if (entries.empty()) throw InvalidInput("empty manifest: " + cfg.manifest_path);

    // Pre-extract windows and targets once; the dataset fits at desk scale.
    struct Sample {
        WindowSequence windows;
        LabelSequence target;
    };
    std::vector<Sample> samples;
    samples.reserve(entries.size());
    for (const auto& e : entries) {
        Sample s;
        const Image raw = read_pgm(e.image_path);
        const TextLineImage line = normalize_line(raw, cfg.window.patch_size, 0, false);
        s.windows = extract_windows(line, cfg.window);
        s.target = alphabet.encode(e.transcript);
        samples.push_back(std::move(s));
    }

    TrainStats stats;
    Rng shuffle_rng(cfg.seed ^ 0x5348554646ULL);
    const std::size_t per_epoch = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(cfg.schedule.epoch_fraction *
                                                 static_cast<double>(samples.size()))));

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(samples.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);
        order.resize(per_epoch);

        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        for (std::size_t idx : order) {
            const Sample& s = samples[idx];
            const std::size_t T = s.windows.count;
            if (min_frames(s.target) > T) {
                stats.skipped_infeasible++;
                continue;
            }
            const std::vector<double> logits =
                net.forward_logits_train(s.windows.patches.data(), T);
            CtcGradient grad =
                ctc_logit_gradient(logits, T, net.num_classes(), s.target);
            // Frame-averaged gradient keeps the step size independent of the
            // line length.
            for (double& g : grad.dlogits) g /= static_cast<double>(T);
            net.train_step(s.windows.patches.data(), T, grad.dlogits, cfg.schedule, epoch);
            loss_sum += grad.loss;
            loss_count++;
            stats.steps++;
        }
        stats.final_epoch_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
        if (cfg.verbose)
            std::cerr << "epoch " << epoch << " lr " << cfg.schedule.learning_rate(epoch)
                      << " mean-loss " << stats.final_epoch_loss << " steps " << stats.steps
                      << " skipped " << stats.skipped_infeasible << "\n";
    }

    if (!cfg.out_checkpoint.empty()) {
        CheckpointMeta meta;
        for (std::size_t i = 1; i <= alphabet.size(); ++i)
            meta.alphabet_chars.push_back(alphabet.character(static_cast<int>(i)));
        meta.window = cfg.window;
        save_checkpoint(net, meta, cfg.out_checkpoint);
    }
    return stats;
}

EvalReport run_pipeline(const PipelineConfig& cfg) {
    LoadedCheckpoint ckpt = load_checkpoint(cfg.checkpoint_path);
    const Network& net = ckpt.net;
    const Alphabet alphabet(ckpt.meta.alphabet_chars);
    if (alphabet.num_classes() != net.num_classes())
        throw IncompatibleCheckpoint("alphabet size does not match checkpoint classes");

    const auto entries = load_manifest(cfg.manifest_path);
    if (entries.empty()) throw InvalidInput("empty manifest: " + cfg.manifest_path);

    Lexicon lexicon;
    if (cfg.method == "lexicon") {
        if (cfg.lexicon_path.empty()) throw InvalidInput("lexicon decoding needs --lexicon");
        lexicon = Lexicon::load(cfg.lexicon_path, alphabet);
    }
    NGramModel lm;
    DecodeOptions opts;
    opts.beam_width = cfg.beam_width;
    opts.candidate_count = std::min(cfg.candidate_count, net.num_classes() - 1);
    opts.alpha = cfg.alpha;
    if (cfg.method == "beam" && !cfg.lm_path.empty()) {
        lm = NGramModel::load(cfg.lm_path);
        opts.lm = &lm;
    }
    if (cfg.method == "beam" && opts.alpha > 0.0 && opts.lm == nullptr)
        throw InvalidInput("beam decoding with alpha > 0 needs --lm");
    if (cfg.method != "naive" && cfg.method != "lexicon" && cfg.method != "beam")
        throw InvalidInput("unknown decode method: " + cfg.method);

    EvalReport report;
    report.lines.resize(entries.size());
    std::exception_ptr first_error;

    const int workers = std::max(1, cfg.workers);
    (void)workers;
#pragma omp parallel for schedule(static) num_threads(workers)
    for (long li = 0; li < static_cast<long>(entries.size()); ++li) {
        const std::size_t i = static_cast<std::size_t>(li);
        try {
            const Image raw = read_pgm(entries[i].image_path);
            const TextLineImage line =
                normalize_line(raw, ckpt.meta.window.patch_size, 0, false);
            const WindowSequence windows = extract_windows(line, ckpt.meta.window);
            const EmissionMatrix E = net.emissions_for_line(windows);

            DecodeResult result;
            if (cfg.method == "naive") {
                result = best_path_decode(E);
            } else if (cfg.method == "lexicon") {
                try {
                    result = token_passing_decode(E, lexicon, true);
                } catch (const NoFeasibleWord&) {
                    result = {{}, kLogZero};
                }
            } else {
                result = beam_search_decode(E, opts);
            }
            report.lines[i] = {entries[i].image_path, alphabet.decode(result.labels),
                               result.log_score, cfg.method};
        } catch (...) {
#pragma omp critical
            if (!first_error) first_error = std::current_exception();
        }
    }
    if (first_error) std::rethrow_exception(first_error);

    const bool fold_case =
        cfg.case_insensitive.value_or(net.num_classes() == 37);
    auto fold = [&](std::string s) {
        if (fold_case)
            std::transform(s.begin(), s.end(), s.begin(),
                           [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        return s;
    };
    std::vector<EvalPair> pairs;
    pairs.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i)
        pairs.push_back({fold(entries[i].transcript), fold(report.lines[i].transcript)});

    report.words_total = pairs.size();
    for (const auto& p : pairs) {
        if (p.truth == p.hypothesis) report.words_correct++;
        const EditCounts c = edit_counts(p.truth, p.hypothesis);
        report.chars_total += c.total;
        report.substitutions += c.substitutions;
        report.deletions += c.deletions;
        report.insertions += c.insertions;
    }
    report.word_accuracy =
        static_cast<double>(report.words_correct) / static_cast<double>(report.words_total);
    report.accurate_rate = accurate_rate(pairs, false);

    if (!cfg.report_path.empty()) {
        std::ofstream out(cfg.report_path);
        if (!out) throw IoError("cannot write report: " + cfg.report_path);
        out.precision(17);
        for (const auto& rec : report.lines)
            out << rec.line_id << "\t" << rec.transcript << "\t" << rec.log_score << "\t"
                << rec.decoder << "\n";
        if (!out) throw IoError("short write: " + cfg.report_path);
    }
    return report;
}

}  // namespace sct
