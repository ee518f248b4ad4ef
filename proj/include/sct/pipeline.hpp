#ifndef SCT_PIPELINE_HPP
#define SCT_PIPELINE_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sct/decode.hpp"
#include "sct/metrics.hpp"
#include "sct/net.hpp"

namespace sct {

struct ManifestEntry {
    std::string image_path;  // resolved against the manifest's directory
    std::string transcript;
};

std::vector<ManifestEntry> load_manifest(const std::string& path);

struct TrainConfig {
    std::string manifest_path;
    std::string alphabet_path;
    std::string profile = "desk";  // "paper" or "desk"
    std::size_t epochs = 5;
    TrainSchedule schedule;
    WindowConfig window;
    std::uint64_t seed = 0;
    std::string out_checkpoint;
    bool verbose = false;
};

struct TrainStats {
    std::size_t steps = 0;
    std::size_t skipped_infeasible = 0;
    double final_epoch_loss = 0.0;
};

TrainStats train_model(const TrainConfig& cfg);

struct PipelineConfig {
    std::string checkpoint_path;
    std::string manifest_path;
    std::string method = "naive";  // naive | lexicon | beam
    std::string lexicon_path;
    std::string lm_path;
    double alpha = 1.0;
    std::size_t beam_width = 32;
    std::size_t candidate_count = 10;
    std::string report_path;  // per-line TSV; empty = skip
    int workers = 1;
    std::optional<bool> case_insensitive;  // default: on for 37-class alphabets
};

struct LineRecord {
    std::string line_id;
    std::string transcript;
    double log_score = 0.0;
    std::string decoder;
};

struct EvalReport {
    double word_accuracy = 0.0;
    double accurate_rate = 0.0;
    std::size_t chars_total = 0, substitutions = 0, deletions = 0, insertions = 0;
    std::size_t words_total = 0, words_correct = 0;
    std::vector<LineRecord> lines;
};

// normalize -> windows -> emissions -> decode -> compare, per manifest line.
// Line work fans out over `workers`; output is identical for any worker count.
EvalReport run_pipeline(const PipelineConfig& cfg);

}  // namespace sct

#endif  // SCT_PIPELINE_HPP
