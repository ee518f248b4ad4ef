// Command-line surface for the sliding-window transcription toolkit.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sct/ctc.hpp"
#include "sct/decode.hpp"
#include "sct/errors.hpp"
#include "sct/lm.hpp"
#include "sct/metrics.hpp"
#include "sct/net.hpp"
#include "sct/pipeline.hpp"
#include "sct/synth.hpp"
#include "sct/textline.hpp"

namespace {

constexpr int kExitInvalid = 2;
constexpr int kExitIo = 3;
constexpr int kExitIncompatible = 4;

std::vector<std::size_t> parse_size_list(const std::string& spec) {
    std::vector<std::size_t> out;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(std::stoul(item));
    return out;
}

sct::EmissionMatrix emissions_from_image(const std::string& ckpt_path,
                                         const std::string& image_path) {
    sct::LoadedCheckpoint ckpt = sct::load_checkpoint(ckpt_path);
    const sct::Image raw = sct::read_pgm(image_path);
    const sct::TextLineImage line =
        sct::normalize_line(raw, ckpt.meta.window.patch_size, 0, false);
    const sct::WindowSequence windows = sct::extract_windows(line, ckpt.meta.window);
    return ckpt.net.emissions_for_line(windows);
}

int run(int argc, char** argv) {
    CLI::App app{"sliding-window convolutional text-line transcription"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic line dataset");
    std::string sy_alphabet, sy_out;
    std::size_t sy_count = 100, sy_min = 1, sy_max = 5;
    std::uint64_t sy_seed = 0;
    synth->add_option("--alphabet", sy_alphabet)->required();
    synth->add_option("--count", sy_count)->required();
    synth->add_option("--min-len", sy_min);
    synth->add_option("--max-len", sy_max);
    synth->add_option("--seed", sy_seed);
    synth->add_option("--out", sy_out)->required();

    // train
    auto* train = app.add_subcommand("train", "train a character model");
    std::string tr_manifest, tr_alphabet, tr_net = "desk", tr_out, tr_decay_epochs = "40,60",
                tr_scales = "32";
    std::size_t tr_epochs = 5, tr_stride = 4;
    double tr_lr = 0.1, tr_decay = 0.3, tr_momentum = 0.0, tr_fraction = 1.0;
    std::uint64_t tr_seed = 0;
    bool tr_verbose = false;
    train->add_option("--manifest", tr_manifest)->required();
    train->add_option("--alphabet", tr_alphabet)->required();
    train->add_option("--net", tr_net)->check(CLI::IsMember({"paper", "desk"}));
    train->add_option("--epochs", tr_epochs);
    train->add_option("--lr", tr_lr);
    train->add_option("--decay", tr_decay);
    train->add_option("--decay-epochs", tr_decay_epochs);
    train->add_option("--stride", tr_stride);
    train->add_option("--scales", tr_scales);
    train->add_option("--momentum", tr_momentum);
    train->add_option("--epoch-fraction", tr_fraction);
    train->add_option("--seed", tr_seed);
    train->add_option("--out", tr_out)->required();
    train->add_flag("--verbose", tr_verbose);

    // emit
    auto* emit = app.add_subcommand("emit", "write the emission matrix for one image");
    std::string em_ckpt, em_image, em_out;
    emit->add_option("--ckpt", em_ckpt)->required();
    emit->add_option("--image", em_image)->required();
    emit->add_option("--out", em_out)->required();

    // decode
    auto* decode = app.add_subcommand("decode", "transcribe one line");
    std::string de_emit, de_ckpt, de_image, de_method = "naive", de_lexicon, de_lm,
                de_alphabet;
    double de_alpha = 1.0;
    std::size_t de_beam = 32, de_cn = 10;
    decode->add_option("--emit", de_emit);
    decode->add_option("--ckpt", de_ckpt);
    decode->add_option("--image", de_image);
    decode->add_option("--method", de_method)
        ->check(CLI::IsMember({"naive", "lexicon", "beam"}));
    decode->add_option("--lexicon", de_lexicon);
    decode->add_option("--lm", de_lm);
    decode->add_option("--alpha", de_alpha);
    decode->add_option("--beam", de_beam);
    decode->add_option("--cn", de_cn);
    decode->add_option("--alphabet", de_alphabet,
                       "needed with --emit when the method requires characters");

    // lm-train
    auto* lmtrain = app.add_subcommand("lm-train", "train a character n-gram model");
    std::string lm_corpus, lm_alphabet, lm_out;
    std::size_t lm_order = 5;
    double lm_lambda = 0.9;
    lmtrain->add_option("--corpus", lm_corpus)->required();
    lmtrain->add_option("--order", lm_order);
    lmtrain->add_option("--lambda", lm_lambda);
    lmtrain->add_option("--alphabet", lm_alphabet)->required();
    lmtrain->add_option("--out", lm_out)->required();

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint over a manifest");
    std::string ev_ckpt, ev_manifest, ev_method = "naive", ev_lexicon, ev_lm, ev_report;
    double ev_alpha = 1.0;
    std::size_t ev_beam = 32, ev_cn = 10;
    int ev_workers = 1;
    eval->add_option("--ckpt", ev_ckpt)->required();
    eval->add_option("--manifest", ev_manifest)->required();
    eval->add_option("--method", ev_method)
        ->check(CLI::IsMember({"naive", "lexicon", "beam"}));
    eval->add_option("--lexicon", ev_lexicon);
    eval->add_option("--lm", ev_lm);
    eval->add_option("--alpha", ev_alpha);
    eval->add_option("--beam", ev_beam);
    eval->add_option("--cn", ev_cn);
    eval->add_option("--report", ev_report);
    eval->add_option("--workers", ev_workers);

    CLI11_PARSE(app, argc, argv);

    if (synth->parsed()) {
        const sct::Alphabet alphabet = sct::Alphabet::load(sy_alphabet);
        sct::GlyphSet glyphs(alphabet, sy_seed);
        sct::DatasetSpec spec{sy_count, sy_min, sy_max, sy_seed};
        const std::string manifest = sct::generate_dataset(glyphs, spec, sy_out);
        std::cout << manifest << "\n";
    } else if (train->parsed()) {
        sct::TrainConfig cfg;
        cfg.manifest_path = tr_manifest;
        cfg.alphabet_path = tr_alphabet;
        cfg.profile = tr_net;
        cfg.epochs = tr_epochs;
        cfg.schedule.initial_lr = tr_lr;
        cfg.schedule.decay_factor = tr_decay;
        cfg.schedule.decay_epochs = parse_size_list(tr_decay_epochs);
        cfg.schedule.momentum = tr_momentum;
        cfg.schedule.epoch_fraction = tr_fraction;
        cfg.window.window_widths = parse_size_list(tr_scales);
        cfg.window.stride = tr_stride;
        cfg.seed = tr_seed;
        cfg.out_checkpoint = tr_out;
        cfg.verbose = tr_verbose;
        const sct::TrainStats stats = sct::train_model(cfg);
        std::cout << "steps\t" << stats.steps << "\nskipped\t" << stats.skipped_infeasible
                  << "\nmean_loss\t" << stats.final_epoch_loss << "\n";
    } else if (emit->parsed()) {
        sct::write_emissions(emissions_from_image(em_ckpt, em_image), em_out);
    } else if (decode->parsed()) {
        sct::EmissionMatrix E;
        std::string line_id;
        sct::Alphabet alphabet;
        bool have_alphabet = false;
        if (!de_emit.empty()) {
            E = sct::read_emissions(de_emit);
            line_id = de_emit;
            if (!de_alphabet.empty()) {
                alphabet = sct::Alphabet::load(de_alphabet);
                have_alphabet = true;
            }
        } else {
            if (de_ckpt.empty() || de_image.empty())
                throw sct::InvalidInput("decode needs --emit or both --ckpt and --image");
            sct::LoadedCheckpoint ckpt = sct::load_checkpoint(de_ckpt);
            const sct::Image raw = sct::read_pgm(de_image);
            const sct::TextLineImage line =
                sct::normalize_line(raw, ckpt.meta.window.patch_size, 0, false);
            E = ckpt.net.emissions_for_line(sct::extract_windows(line, ckpt.meta.window));
            alphabet = sct::Alphabet(ckpt.meta.alphabet_chars);
            have_alphabet = true;
            line_id = de_image;
        }

        sct::DecodeResult result;
        if (de_method == "naive") {
            result = sct::best_path_decode(E);
        } else if (de_method == "lexicon") {
            if (de_lexicon.empty()) throw sct::InvalidInput("lexicon decoding needs --lexicon");
            if (!have_alphabet)
                throw sct::InvalidInput("lexicon decoding from --emit needs --alphabet");
            result = sct::token_passing_decode(E, sct::Lexicon::load(de_lexicon, alphabet),
                                               true);
        } else {
            sct::NGramModel lm;
            sct::DecodeOptions opts;
            opts.beam_width = de_beam;
            opts.candidate_count = std::min(de_cn, E.K - 1);
            opts.alpha = de_alpha;
            if (!de_lm.empty()) {
                lm = sct::NGramModel::load(de_lm);
                opts.lm = &lm;
            } else {
                opts.alpha = 0.0;
            }
            result = sct::beam_search_decode(E, opts);
        }
        std::string text;
        if (have_alphabet) {
            text = alphabet.decode(result.labels);
        } else {
            for (std::size_t i = 0; i < result.labels.size(); ++i)
                text += (i ? "," : "") + std::to_string(result.labels[i]);
        }
        std::cout << line_id << "\t" << text << "\t" << result.log_score << "\t" << de_method
                  << "\n";
    } else if (lmtrain->parsed()) {
        const sct::Alphabet alphabet = sct::Alphabet::load(lm_alphabet);
        std::ifstream corpus(lm_corpus);
        if (!corpus) throw sct::IoError("cannot open corpus: " + lm_corpus);
        const sct::NGramModel model =
            sct::NGramModel::train(corpus, lm_order, alphabet, lm_lambda);
        model.save(lm_out);
        if (model.skipped_chars() > 0)
            std::cerr << "skipped " << model.skipped_chars() << " out-of-alphabet chars\n";
    } else if (eval->parsed()) {
        sct::PipelineConfig cfg;
        cfg.checkpoint_path = ev_ckpt;
        cfg.manifest_path = ev_manifest;
        cfg.method = ev_method;
        cfg.lexicon_path = ev_lexicon;
        cfg.lm_path = ev_lm;
        cfg.alpha = ev_alpha;
        cfg.beam_width = ev_beam;
        cfg.candidate_count = ev_cn;
        cfg.report_path = ev_report;
        cfg.workers = ev_workers;
        const sct::EvalReport report = sct::run_pipeline(cfg);
        std::cout << "word_accuracy\t" << report.word_accuracy << "\n"
                  << "accurate_rate\t" << report.accurate_rate << "\n"
                  << "chars\t" << report.chars_total << "\tS\t" << report.substitutions
                  << "\tD\t" << report.deletions << "\tI\t" << report.insertions << "\n"
                  << "words\t" << report.words_total << "\tcorrect\t" << report.words_correct
                  << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const sct::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const sct::IncompatibleCheckpoint& e) {
        std::cerr << "incompatible checkpoint: " << e.what() << "\n";
        return kExitIncompatible;
    } catch (const sct::IncompatibleModel& e) {
        std::cerr << "incompatible model: " << e.what() << "\n";
        return kExitIncompatible;
    } catch (const sct::CorruptCheckpoint& e) {
        std::cerr << "corrupt checkpoint: " << e.what() << "\n";
        return kExitIncompatible;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalid;
    }
}
