#ifndef SCT_NET_HPP
#define SCT_NET_HPP

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sct/ctc.hpp"
#include "sct/lm.hpp"
#include "sct/textline.hpp"

namespace sct {

enum class LayerKind { Conv, BatchNorm, MaxPool, FullyConnected, Softmax };

struct LayerSpec {
    LayerKind kind;
    std::size_t maps = 0, kernel = 0, stride = 0, pad = 0;  // conv
    std::size_t window = 0, pool_stride = 0;                // max-pool
    std::size_t units = 0;                                  // fc units / softmax classes
    double dropout = 0.0;

    static LayerSpec conv(std::size_t maps, std::size_t kernel, std::size_t stride,
                          std::size_t pad, double dropout = 0.0) {
        return {LayerKind::Conv, maps, kernel, stride, pad, 0, 0, 0, dropout};
    }
    static LayerSpec batch_norm() { return {LayerKind::BatchNorm}; }
    static LayerSpec max_pool(std::size_t window, std::size_t stride) {
        return {LayerKind::MaxPool, 0, 0, 0, 0, window, stride, 0, 0.0};
    }
    static LayerSpec fully_connected(std::size_t units, double dropout = 0.0) {
        return {LayerKind::FullyConnected, 0, 0, 0, 0, 0, 0, units, dropout};
    }
    static LayerSpec softmax(std::size_t classes) {
        return {LayerKind::Softmax, 0, 0, 0, 0, 0, 0, classes, 0.0};
    }
};

struct NetworkConfig {
    std::vector<LayerSpec> layers;
    std::size_t input_channels = 1;
    std::size_t input_size = 32;
    std::uint64_t seed = 0;

    void validate() const;
    std::string canonical() const;  // stable text form, hashed into checkpoints
    std::uint64_t hash() const;

    // Full-scale topology: 12 conv (50..400 maps), 4 pools, FC900+FC200.
    static NetworkConfig paper_profile(std::size_t classes, std::size_t channels,
                                       std::uint64_t seed);
    // Reduced profile small enough for CPU training and finite differences.
    static NetworkConfig desk_profile(std::size_t classes, std::size_t channels,
                                      std::uint64_t seed);
};

struct TrainSchedule {
    double initial_lr = 0.1;
    double decay_factor = 0.3;
    std::vector<std::size_t> decay_epochs{40, 60};
    double momentum = 0.0;
    double epoch_fraction = 1.0;

    double learning_rate(std::size_t epoch) const;
};

enum class Mode { Train, Infer };

struct LayerParams {
    std::vector<double> weight, bias;                             // conv / fc
    std::vector<double> gamma, beta, running_mean, running_var;   // batch norm
    std::vector<double> vel_weight, vel_bias, vel_gamma, vel_beta;
};

class Network {
public:
    explicit Network(NetworkConfig cfg);  // allocates and He-initializes

    const NetworkConfig& config() const { return cfg_; }
    const std::vector<LayerParams>& params() const { return params_; }
    std::vector<LayerParams>& params() { return params_; }
    std::size_t num_classes() const { return num_classes_; }
    std::uint64_t step_counter() const { return step_counter_; }
    std::size_t flatten_dim() const { return flatten_dim_; }

    // Probabilities [B, K]; infer mode uses running statistics and skips dropout.
    std::vector<double> forward_batch(const double* patches, std::size_t B, Mode mode) const;

    // Pre-softmax logits in train mode (batch statistics, seeded dropout masks
    // keyed to the current step). Pure: no state is mutated, so a following
    // train_step on the same batch sees identical activations.
    std::vector<double> forward_logits_train(const double* patches, std::size_t B) const;

    // One SGD update from externally supplied dL/dlogits. Returns the L2 norm
    // of the parameter gradient.
    double train_step(const double* patches, std::size_t B,
                      const std::vector<double>& dl_dlogits,
                      const TrainSchedule& schedule, std::size_t epoch);

    // Row t = log forward_batch of patch t in infer mode. Rows are filled in
    // parallel; the result is identical to sequential evaluation.
    EmissionMatrix emissions_for_line(const WindowSequence& windows) const;

private:
    struct Cache;
    void forward_impl(const double* patches, std::size_t B, Mode mode, Cache* cache,
                      std::vector<double>& out_logits) const;

    NetworkConfig cfg_;
    std::vector<LayerParams> params_;
    std::vector<std::size_t> shape_c_, shape_s_;  // per-layer output channels / spatial edge
    std::size_t num_classes_ = 0;
    std::size_t flatten_dim_ = 0;
    std::uint64_t step_counter_ = 0;

    friend struct CheckpointCodec;
};

// Everything eval needs to run from a checkpoint alone.
struct CheckpointMeta {
    std::vector<std::string> alphabet_chars;
    WindowConfig window;
};

// Little-endian binary, magic "SCCM1", 8-byte config hash, config and
// metadata blobs, then length-prefixed named float64 tensors.
void save_checkpoint(const Network& net, const CheckpointMeta& meta, const std::string& path);
struct LoadedCheckpoint {
    Network net;
    CheckpointMeta meta;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

namespace ref {
// Plain serial forward pass kept as the reference the OpenMP kernels are
// checked against (bitwise: both accumulate in the same order).
std::vector<double> forward_batch(const Network& net, const double* patches, std::size_t B);
}  // namespace ref

}  // namespace sct

#endif  // SCT_NET_HPP
