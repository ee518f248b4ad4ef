#include "sct/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sct/errors.hpp"
#include "sct/rng.hpp"

namespace sct {

namespace {
constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;
}  // namespace

void NetworkConfig::validate() const {
    if (layers.empty()) throw InvalidConfig("network has no layers");
    if (layers.back().kind != LayerKind::Softmax)
        throw InvalidConfig("last layer must be softmax");
    if (input_channels < 1 || input_size < 1) throw InvalidConfig("bad input shape");
    std::size_t s = input_size;
    bool flattened = false;
    for (const auto& l : layers) {
        switch (l.kind) {
            case LayerKind::Conv:
                if (flattened) throw InvalidConfig("conv after flatten");
                if (l.maps < 1 || l.kernel < 1 || l.stride < 1)
                    throw InvalidConfig("bad conv spec");
                if (!(l.dropout >= 0.0 && l.dropout < 1.0))
                    throw InvalidConfig("dropout must be in [0,1)");
                if (s + 2 * l.pad < l.kernel) throw InvalidConfig("conv kernel exceeds input");
                s = (s + 2 * l.pad - l.kernel) / l.stride + 1;
                break;
            case LayerKind::MaxPool:
                if (flattened) throw InvalidConfig("pool after flatten");
                if (l.window < 1 || l.pool_stride < 1) throw InvalidConfig("bad pool spec");
                if (s < l.window) throw InvalidConfig("pooling below 1x1 spatial size");
                s = (s - l.window) / l.pool_stride + 1;
                break;
            case LayerKind::BatchNorm:
                break;
            case LayerKind::FullyConnected:
            case LayerKind::Softmax:
                if (l.units < 1) throw InvalidConfig("bad unit count");
                if (!(l.dropout >= 0.0 && l.dropout < 1.0))
                    throw InvalidConfig("dropout must be in [0,1)");
                flattened = true;
                break;
        }
        if (!flattened && s < 1) throw InvalidConfig("spatial size fell below 1");
    }
}

std::string NetworkConfig::canonical() const {
    std::ostringstream os;
    os << "in " << input_channels << " " << input_size << "\n";
    os << "seed " << seed << "\n";
    for (const auto& l : layers) {
        switch (l.kind) {
            case LayerKind::Conv:
                os << "conv " << l.maps << " " << l.kernel << " " << l.stride << " " << l.pad
                   << " " << l.dropout << "\n";
                break;
            case LayerKind::BatchNorm:
                os << "bn\n";
                break;
            case LayerKind::MaxPool:
                os << "pool " << l.window << " " << l.pool_stride << "\n";
                break;
            case LayerKind::FullyConnected:
                os << "fc " << l.units << " " << l.dropout << "\n";
                break;
            case LayerKind::Softmax:
                os << "softmax " << l.units << "\n";
                break;
        }
    }
    return os.str();
}

std::uint64_t NetworkConfig::hash() const {
    // FNV-1a 64.
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : canonical()) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

NetworkConfig NetworkConfig::paper_profile(std::size_t classes, std::size_t channels,
                                           std::uint64_t seed) {
    NetworkConfig cfg;
    cfg.input_channels = channels;
    cfg.input_size = 32;
    cfg.seed = seed;
    auto& L = cfg.layers;
    L.push_back(LayerSpec::conv(50, 3, 1, 1, 0.0));
    L.push_back(LayerSpec::batch_norm());
    L.push_back(LayerSpec::conv(100, 3, 1, 1, 0.1));
    L.push_back(LayerSpec::conv(100, 3, 1, 1, 0.1));
    L.push_back(LayerSpec::batch_norm());
    L.push_back(LayerSpec::max_pool(2, 2));
    L.push_back(LayerSpec::conv(150, 3, 1, 1, 0.2));
    L.push_back(LayerSpec::batch_norm());
    L.push_back(LayerSpec::conv(200, 3, 1, 1, 0.2));
    L.push_back(LayerSpec::conv(200, 3, 1, 1, 0.2));
    L.push_back(LayerSpec::batch_norm());
    L.push_back(LayerSpec::max_pool(2, 2));
    L.push_back(LayerSpec::conv(250, 3, 1, 1, 0.3));
    L.push_back(LayerSpec::batch_norm());
    L.push_back(LayerSpec::conv(300, 3, 1, 1, 0.3));
    L.push_back(LayerSpec::conv(300, 3, 1, 1, 0.3));
    L.push_back(LayerSpec::batch_norm());
    L.push_back(LayerSpec::max_pool(2, 2));
    L.push_back(LayerSpec::conv(350, 3, 1, 1, 0.4));
    L.push_back(LayerSpec::batch_norm());
    L.push_back(LayerSpec::conv(400, 3, 1, 1, 0.4));
    L.push_back(LayerSpec::conv(400, 3, 1, 1, 0.4));
    L.push_back(LayerSpec::batch_norm());
    L.push_back(LayerSpec::max_pool(2, 2));
    L.push_back(LayerSpec::fully_connected(900, 0.5));
    L.push_back(LayerSpec::fully_connected(200, 0.0));
    L.push_back(LayerSpec::softmax(classes));
    return cfg;
}

NetworkConfig NetworkConfig::desk_profile(std::size_t classes, std::size_t channels,
                                          std::uint64_t seed) {
    NetworkConfig cfg;
    cfg.input_channels = channels;
    cfg.input_size = 32;
    cfg.seed = seed;
    auto& L = cfg.layers;
    L.push_back(LayerSpec::conv(16, 3, 1, 1));
    L.push_back(LayerSpec::batch_norm());
    L.push_back(LayerSpec::conv(16, 3, 1, 1));
    L.push_back(LayerSpec::max_pool(2, 2));
    L.push_back(LayerSpec::conv(32, 3, 1, 1));
    L.push_back(LayerSpec::batch_norm());
    L.push_back(LayerSpec::conv(32, 3, 1, 1));
    L.push_back(LayerSpec::max_pool(2, 2));
    L.push_back(LayerSpec::fully_connected(64));
    L.push_back(LayerSpec::softmax(classes));
    return cfg;
}

double TrainSchedule::learning_rate(std::size_t epoch) const {
    double lr = initial_lr;
    for (std::size_t d : decay_epochs)
        if (epoch >= d) lr *= decay_factor;
    return lr;
}

Network::Network(NetworkConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(cfg_.seed);
    std::size_t c = cfg_.input_channels;
    std::size_t s = cfg_.input_size;
    bool flattened = false;
    for (const auto& l : cfg_.layers) {
        LayerParams p;
        switch (l.kind) {
            case LayerKind::Conv: {
                const std::size_t fan_in = c * l.kernel * l.kernel;
                const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
                p.weight.resize(l.maps * fan_in);
                for (auto& w : p.weight) w = scale * rng.gaussian();
                p.bias.assign(l.maps, 0.0);
                c = l.maps;
                s = (s + 2 * l.pad - l.kernel) / l.stride + 1;
                break;
            }
            case LayerKind::BatchNorm:
                p.gamma.assign(c, 1.0);
                p.beta.assign(c, 0.0);
                p.running_mean.assign(c, 0.0);
                p.running_var.assign(c, 1.0);
                break;
            case LayerKind::MaxPool:
                s = (s - l.window) / l.pool_stride + 1;
                break;
            case LayerKind::FullyConnected: {
                const std::size_t fan_in = flattened ? c : c * s * s;
                if (!flattened) flatten_dim_ = fan_in;
                const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
                p.weight.resize(l.units * fan_in);
                for (auto& w : p.weight) w = scale * rng.gaussian();
                p.bias.assign(l.units, 0.0);
                c = l.units;
                s = 1;
                flattened = true;
                break;
            }
            case LayerKind::Softmax: {
                const std::size_t fan_in = flattened ? c : c * s * s;
                if (!flattened) flatten_dim_ = fan_in;
                // Zero head: fresh networks emit uniform rows; the gradient
                // through the targets breaks the symmetry immediately.
                p.weight.assign(l.units * fan_in, 0.0);
                p.bias.assign(l.units, 0.0);
                c = l.units;
                s = 1;
                flattened = true;
                num_classes_ = l.units;
                break;
            }
        }
        p.vel_weight.assign(p.weight.size(), 0.0);
        p.vel_bias.assign(p.bias.size(), 0.0);
        p.vel_gamma.assign(p.gamma.size(), 0.0);
        p.vel_beta.assign(p.beta.size(), 0.0);
        params_.push_back(std::move(p));
        shape_c_.push_back(c);
        shape_s_.push_back(s);
    }
}

// Per-layer activation cache for the backward pass.
struct Network::Cache {
    std::vector<std::vector<double>> outputs;      // post-layer activations
    std::vector<std::vector<double>> pre_relu;     // conv/fc linear outputs
    std::vector<std::vector<std::size_t>> argmax;  // pool routing
    std::vector<std::vector<double>> bn_mean, bn_var, bn_xhat;
    std::vector<std::vector<std::uint8_t>> drop_mask;
};

namespace {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t step) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (step + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

void conv_forward(const double* __restrict__ x, double* __restrict__ y,
                  const double* __restrict__ w, const double* __restrict__ b,
                  std::size_t B, std::size_t C, std::size_t S, std::size_t M,
                  std::size_t K, std::size_t stride, std::size_t pad, std::size_t O) {
#pragma omp parallel for schedule(static)
    for (long bi = 0; bi < static_cast<long>(B); ++bi) {
        const double* xb = x + static_cast<std::size_t>(bi) * C * S * S;
        double* yb = y + static_cast<std::size_t>(bi) * M * O * O;
        for (std::size_t m = 0; m < M; ++m) {
            double* plane = yb + m * O * O;
            for (std::size_t i = 0; i < O * O; ++i) plane[i] = b[m];
            for (std::size_t c = 0; c < C; ++c) {
                const double* xplane = xb + c * S * S;
                const double* wk = w + (m * C + c) * K * K;
                for (std::size_t ky = 0; ky < K; ++ky) {
                    for (std::size_t kx = 0; kx < K; ++kx) {
                        const double wv = wk[ky * K + kx];
                        const long dy = static_cast<long>(ky) - static_cast<long>(pad);
                        const long dx = static_cast<long>(kx) - static_cast<long>(pad);
                        for (std::size_t oy = 0; oy < O; ++oy) {
                            const long iy = static_cast<long>(oy * stride) + dy;
                            if (iy < 0 || iy >= static_cast<long>(S)) continue;
                            const double* xrow = xplane + static_cast<std::size_t>(iy) * S;
                            double* yrow = plane + oy * O;
                            if (stride == 1) {
                                // Hoisted bounds let the column loop vectorize.
                                const std::size_t ox0 =
                                    dx < 0 ? static_cast<std::size_t>(-dx) : 0;
                                const std::size_t ox1 = std::min(
                                    O, static_cast<std::size_t>(static_cast<long>(S) - dx));
                                for (std::size_t ox = ox0; ox < ox1; ++ox)
                                    yrow[ox] += wv * xrow[static_cast<std::size_t>(
                                                    static_cast<long>(ox) + dx)];
                            } else {
                                for (std::size_t ox = 0; ox < O; ++ox) {
                                    const long ix = static_cast<long>(ox * stride) + dx;
                                    if (ix < 0 || ix >= static_cast<long>(S)) continue;
                                    yrow[ox] += wv * xrow[ix];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

void Network::forward_impl(const double* patches, std::size_t B, Mode mode, Cache* cache,
                           std::vector<double>& out_logits) const {
    if (B == 0) throw InvalidInput("forward: empty batch");
    const std::size_t L = cfg_.layers.size();
    std::vector<double> cur(patches, patches + B * cfg_.input_channels * cfg_.input_size *
                                               cfg_.input_size);
    std::size_t c = cfg_.input_channels;
    std::size_t s = cfg_.input_size;
    bool flattened = false;

    Rng drop_rng(mix_seed(cfg_.seed, step_counter_));
    if (cache) {
        cache->outputs.resize(L);
        cache->pre_relu.resize(L);
        cache->argmax.resize(L);
        cache->bn_mean.resize(L);
        cache->bn_var.resize(L);
        cache->bn_xhat.resize(L);
        cache->drop_mask.resize(L);
    }

    for (std::size_t li = 0; li < L; ++li) {
        const LayerSpec& l = cfg_.layers[li];
        const LayerParams& p = params_[li];
        std::vector<double> next;
        switch (l.kind) {
            case LayerKind::Conv: {
                const std::size_t O = (s + 2 * l.pad - l.kernel) / l.stride + 1;
                next.assign(B * l.maps * O * O, 0.0);
                conv_forward(cur.data(), next.data(), p.weight.data(), p.bias.data(), B, c, s,
                             l.maps, l.kernel, l.stride, l.pad, O);
                if (cache) cache->pre_relu[li] = next;
                for (auto& v : next) v = std::max(v, 0.0);
                c = l.maps;
                s = O;
                break;
            }
            case LayerKind::BatchNorm: {
                const std::size_t plane = flattened ? 1 : s * s;
                const std::size_t n = B * plane;
                next.assign(cur.size(), 0.0);
                std::vector<double> mean(c, 0.0), var(c, 0.0);
                if (mode == Mode::Train) {
#pragma omp parallel for schedule(static)
                    for (long ci = 0; ci < static_cast<long>(c); ++ci) {
                        const std::size_t ch = static_cast<std::size_t>(ci);
                        double m = 0.0;
                        for (std::size_t b = 0; b < B; ++b) {
                            const double* xp = cur.data() + (b * c + ch) * plane;
                            for (std::size_t i = 0; i < plane; ++i) m += xp[i];
                        }
                        m /= static_cast<double>(n);
                        double v = 0.0;
                        for (std::size_t b = 0; b < B; ++b) {
                            const double* xp = cur.data() + (b * c + ch) * plane;
                            for (std::size_t i = 0; i < plane; ++i)
                                v += (xp[i] - m) * (xp[i] - m);
                        }
                        v /= static_cast<double>(n);
                        mean[ch] = m;
                        var[ch] = v;
                    }
                } else {
                    mean = p.running_mean;
                    var = p.running_var;
                }
                std::vector<double> xhat(cur.size());
#pragma omp parallel for schedule(static)
                for (long ci = 0; ci < static_cast<long>(c); ++ci) {
                    const std::size_t ch = static_cast<std::size_t>(ci);
                    const double inv = 1.0 / std::sqrt(var[ch] + kBnEps);
                    for (std::size_t b = 0; b < B; ++b) {
                        const double* xp = cur.data() + (b * c + ch) * plane;
                        double* hp = xhat.data() + (b * c + ch) * plane;
                        double* yp = next.data() + (b * c + ch) * plane;
                        for (std::size_t i = 0; i < plane; ++i) {
                            hp[i] = (xp[i] - mean[ch]) * inv;
                            yp[i] = p.gamma[ch] * hp[i] + p.beta[ch];
                        }
                    }
                }
                if (cache) {
                    cache->bn_mean[li] = std::move(mean);
                    cache->bn_var[li] = std::move(var);
                    cache->bn_xhat[li] = std::move(xhat);
                }
                break;
            }
            case LayerKind::MaxPool: {
                const std::size_t O = (s - l.window) / l.pool_stride + 1;
                next.assign(B * c * O * O, 0.0);
                std::vector<std::size_t> arg(B * c * O * O, 0);
#pragma omp parallel for schedule(static)
                for (long bi = 0; bi < static_cast<long>(B); ++bi) {
                    const std::size_t b = static_cast<std::size_t>(bi);
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        const double* xp = cur.data() + (b * c + ch) * s * s;
                        double* yp = next.data() + (b * c + ch) * O * O;
                        std::size_t* ap = arg.data() + (b * c + ch) * O * O;
                        for (std::size_t oy = 0; oy < O; ++oy) {
                            for (std::size_t ox = 0; ox < O; ++ox) {
                                std::size_t best = (oy * l.pool_stride) * s + ox * l.pool_stride;
                                double bv = xp[best];
                                for (std::size_t wy = 0; wy < l.window; ++wy) {
                                    for (std::size_t wx = 0; wx < l.window; ++wx) {
                                        const std::size_t idx =
                                            (oy * l.pool_stride + wy) * s +
                                            ox * l.pool_stride + wx;
                                        if (xp[idx] > bv) {
                                            bv = xp[idx];
                                            best = idx;
                                        }
                                    }
                                }
                                yp[oy * O + ox] = bv;
                                ap[oy * O + ox] = best;
                            }
                        }
                    }
                }
                if (cache) cache->argmax[li] = std::move(arg);
                s = O;
                break;
            }
            case LayerKind::FullyConnected:
            case LayerKind::Softmax: {
                const std::size_t in_dim = flattened ? c : c * s * s;
                next.assign(B * l.units, 0.0);
#pragma omp parallel for schedule(static)
                for (long bi = 0; bi < static_cast<long>(B); ++bi) {
                    const std::size_t b = static_cast<std::size_t>(bi);
                    const double* xb = cur.data() + b * in_dim;
                    double* yb = next.data() + b * l.units;
                    for (std::size_t u = 0; u < l.units; ++u) {
                        const double* wr = p.weight.data() + u * in_dim;
                        double acc = p.bias[u];
                        for (std::size_t j = 0; j < in_dim; ++j) acc += wr[j] * xb[j];
                        yb[u] = acc;
                    }
                }
                if (l.kind == LayerKind::FullyConnected) {
                    if (cache) cache->pre_relu[li] = next;
                    for (auto& v : next) v = std::max(v, 0.0);
                }
                c = l.units;
                s = 1;
                flattened = true;
                break;
            }
        }

        // Dropout on conv / fc outputs (train mode only).
        const bool droppable =
            l.kind == LayerKind::Conv || l.kind == LayerKind::FullyConnected;
        if (droppable && l.dropout > 0.0 && mode == Mode::Train) {
            std::vector<std::uint8_t> mask(next.size());
            const double keep = 1.0 - l.dropout;
            for (std::size_t i = 0; i < next.size(); ++i) {
                mask[i] = drop_rng.uniform() >= l.dropout ? 1 : 0;
                next[i] = mask[i] ? next[i] / keep : 0.0;
            }
            if (cache) cache->drop_mask[li] = std::move(mask);
        }

        cur = std::move(next);
        if (cache) cache->outputs[li] = cur;
    }
    out_logits = std::move(cur);
}

std::vector<double> Network::forward_batch(const double* patches, std::size_t B,
                                           Mode mode) const {
    std::vector<double> logits;
    forward_impl(patches, B, mode, nullptr, logits);
    const std::size_t K = num_classes_;
    for (std::size_t b = 0; b < B; ++b) {
        double* row = logits.data() + b * K;
        double mx = row[0];
        for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        double z = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            row[k] = std::exp(row[k] - mx);
            z += row[k];
        }
        for (std::size_t k = 0; k < K; ++k) row[k] /= z;
    }
    return logits;
}

std::vector<double> Network::forward_logits_train(const double* patches, std::size_t B) const {
    std::vector<double> logits;
    forward_impl(patches, B, Mode::Train, nullptr, logits);
    return logits;
}

EmissionMatrix Network::emissions_for_line(const WindowSequence& windows) const {
    if (windows.scales != cfg_.input_channels || windows.patch_size != cfg_.input_size)
        throw InvalidInput("emissions_for_line: window shape does not match network input");
    std::vector<double> logits;
    forward_impl(windows.patches.data(), windows.count, Mode::Infer, nullptr, logits);
    EmissionMatrix E;
    E.T = windows.count;
    E.K = num_classes_;
    E.log_probs.resize(E.T * E.K);
    for (std::size_t t = 0; t < E.T; ++t) {
        const double* row = logits.data() + t * E.K;
        double mx = row[0];
        for (std::size_t k = 1; k < E.K; ++k) mx = std::max(mx, row[k]);
        double z = 0.0;
        for (std::size_t k = 0; k < E.K; ++k) z += std::exp(row[k] - mx);
        const double log_z = mx + std::log(z);
        for (std::size_t k = 0; k < E.K; ++k) E.log_probs[t * E.K + k] = row[k] - log_z;
    }
    return E;
}

double Network::train_step(const double* patches, std::size_t B,
                           const std::vector<double>& dl_dlogits,
                           const TrainSchedule& schedule, std::size_t epoch) {
    if (dl_dlogits.size() != B * num_classes_)
        throw InvalidInput("train_step: gradient shape mismatch");
    const double lr = schedule.learning_rate(epoch);

    Cache cache;
    std::vector<double> logits;
    forward_impl(patches, B, Mode::Train, &cache, logits);

    const std::size_t L = cfg_.layers.size();

    // Reconstruct per-layer input shapes.
    std::vector<std::size_t> in_c(L), in_s(L);
    {
        std::size_t c = cfg_.input_channels, s = cfg_.input_size;
        for (std::size_t li = 0; li < L; ++li) {
            in_c[li] = c;
            in_s[li] = s;
            c = shape_c_[li];
            s = shape_s_[li];
        }
    }

    double grad_sq = 0.0;
    std::vector<double> dy = dl_dlogits;  // gradient flowing backward

    struct PendingUpdate {
        std::vector<double>* param;
        std::vector<double>* vel;
        std::vector<double> grad;
    };
    std::vector<PendingUpdate> updates;

    for (std::size_t li = L; li-- > 0;) {
        const LayerSpec& l = cfg_.layers[li];
        LayerParams& p = params_[li];
        const double* xin = li == 0 ? patches : cache.outputs[li - 1].data();
        std::vector<double> dx;

        // Undo dropout scaling first where the layer carried a mask.
        if ((l.kind == LayerKind::Conv || l.kind == LayerKind::FullyConnected) &&
            l.dropout > 0.0) {
            const auto& mask = cache.drop_mask[li];
            const double keep = 1.0 - l.dropout;
            for (std::size_t i = 0; i < dy.size(); ++i)
                dy[i] = mask[i] ? dy[i] / keep : 0.0;
        }

        switch (l.kind) {
            case LayerKind::Conv: {
                const std::size_t C = in_c[li], S = in_s[li];
                const std::size_t M = l.maps, K = l.kernel;
                const std::size_t O = shape_s_[li];
                // ReLU gate.
                const auto& pre = cache.pre_relu[li];
                for (std::size_t i = 0; i < dy.size(); ++i)
                    if (pre[i] <= 0.0) dy[i] = 0.0;

                std::vector<double> dw(p.weight.size(), 0.0), db(p.bias.size(), 0.0);
                dx.assign(B * C * S * S, 0.0);
#pragma omp parallel for schedule(static)
                for (long mi = 0; mi < static_cast<long>(M); ++mi) {
                    const std::size_t m = static_cast<std::size_t>(mi);
                    double bsum = 0.0;
                    for (std::size_t b = 0; b < B; ++b) {
                        const double* dyp = dy.data() + (b * M + m) * O * O;
                        for (std::size_t i = 0; i < O * O; ++i) bsum += dyp[i];
                        for (std::size_t c = 0; c < C; ++c) {
                            const double* xp = xin + (b * C + c) * S * S;
                            double* dwp = dw.data() + (m * C + c) * K * K;
                            for (std::size_t ky = 0; ky < K; ++ky) {
                                for (std::size_t kx = 0; kx < K; ++kx) {
                                    const long dyo = static_cast<long>(ky) -
                                                     static_cast<long>(l.pad);
                                    const long dxo = static_cast<long>(kx) -
                                                     static_cast<long>(l.pad);
                                    double acc = 0.0;
                                    for (std::size_t oy = 0; oy < O; ++oy) {
                                        const long iy =
                                            static_cast<long>(oy * l.stride) + dyo;
                                        if (iy < 0 || iy >= static_cast<long>(S)) continue;
                                        const double* xrow =
                                            xp + static_cast<std::size_t>(iy) * S;
                                        const double* dyrow = dyp + oy * O;
                                        if (l.stride == 1) {
                                            const std::size_t ox0 =
                                                dxo < 0 ? static_cast<std::size_t>(-dxo) : 0;
                                            const std::size_t ox1 = std::min(
                                                O, static_cast<std::size_t>(
                                                       static_cast<long>(S) - dxo));
                                            for (std::size_t ox = ox0; ox < ox1; ++ox)
                                                acc += xrow[static_cast<std::size_t>(
                                                           static_cast<long>(ox) + dxo)] *
                                                       dyrow[ox];
                                        } else {
                                            for (std::size_t ox = 0; ox < O; ++ox) {
                                                const long ix =
                                                    static_cast<long>(ox * l.stride) + dxo;
                                                if (ix < 0 || ix >= static_cast<long>(S))
                                                    continue;
                                                acc += xrow[ix] * dyrow[ox];
                                            }
                                        }
                                    }
                                    dwp[ky * K + kx] += acc;
                                }
                            }
                        }
                    }
                    db[m] = bsum;
                }
#pragma omp parallel for schedule(static)
                for (long bi = 0; bi < static_cast<long>(B); ++bi) {
                    const std::size_t b = static_cast<std::size_t>(bi);
                    double* dxb = dx.data() + b * C * S * S;
                    for (std::size_t m = 0; m < M; ++m) {
                        const double* dyp = dy.data() + (b * M + m) * O * O;
                        for (std::size_t c = 0; c < C; ++c) {
                            double* dxp = dxb + c * S * S;
                            const double* wk = p.weight.data() + (m * C + c) * K * K;
                            for (std::size_t ky = 0; ky < K; ++ky) {
                                for (std::size_t kx = 0; kx < K; ++kx) {
                                    const double wv = wk[ky * K + kx];
                                    const long dyo = static_cast<long>(ky) -
                                                     static_cast<long>(l.pad);
                                    const long dxo = static_cast<long>(kx) -
                                                     static_cast<long>(l.pad);
                                    for (std::size_t oy = 0; oy < O; ++oy) {
                                        const long iy =
                                            static_cast<long>(oy * l.stride) + dyo;
                                        if (iy < 0 || iy >= static_cast<long>(S)) continue;
                                        double* dxrow = dxp + static_cast<std::size_t>(iy) * S;
                                        const double* dyrow = dyp + oy * O;
                                        if (l.stride == 1) {
                                            const std::size_t ox0 =
                                                dxo < 0 ? static_cast<std::size_t>(-dxo) : 0;
                                            const std::size_t ox1 = std::min(
                                                O, static_cast<std::size_t>(
                                                       static_cast<long>(S) - dxo));
                                            for (std::size_t ox = ox0; ox < ox1; ++ox)
                                                dxrow[static_cast<std::size_t>(
                                                    static_cast<long>(ox) + dxo)] +=
                                                    wv * dyrow[ox];
                                        } else {
                                            for (std::size_t ox = 0; ox < O; ++ox) {
                                                const long ix =
                                                    static_cast<long>(ox * l.stride) + dxo;
                                                if (ix < 0 || ix >= static_cast<long>(S))
                                                    continue;
                                                dxrow[ix] += wv * dyrow[ox];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                updates.push_back({&p.weight, &p.vel_weight, std::move(dw)});
                updates.push_back({&p.bias, &p.vel_bias, std::move(db)});
                break;
            }
            case LayerKind::BatchNorm: {
                const std::size_t C = in_c[li];
                const std::size_t plane = dy.size() / (B * C);
                const std::size_t n = B * plane;
                const auto& xhat = cache.bn_xhat[li];
                const auto& var = cache.bn_var[li];
                std::vector<double> dgamma(C, 0.0), dbeta(C, 0.0);
                dx.assign(dy.size(), 0.0);
#pragma omp parallel for schedule(static)
                for (long ci = 0; ci < static_cast<long>(C); ++ci) {
                    const std::size_t ch = static_cast<std::size_t>(ci);
                    double sum_dy = 0.0, sum_dy_xhat = 0.0;
                    for (std::size_t b = 0; b < B; ++b) {
                        const double* dyp = dy.data() + (b * C + ch) * plane;
                        const double* hp = xhat.data() + (b * C + ch) * plane;
                        for (std::size_t i = 0; i < plane; ++i) {
                            sum_dy += dyp[i];
                            sum_dy_xhat += dyp[i] * hp[i];
                        }
                    }
                    dgamma[ch] = sum_dy_xhat;
                    dbeta[ch] = sum_dy;
                    const double inv = 1.0 / std::sqrt(var[ch] + kBnEps);
                    const double g = p.gamma[ch];
                    for (std::size_t b = 0; b < B; ++b) {
                        const double* dyp = dy.data() + (b * C + ch) * plane;
                        const double* hp = xhat.data() + (b * C + ch) * plane;
                        double* dxp = dx.data() + (b * C + ch) * plane;
                        for (std::size_t i = 0; i < plane; ++i) {
                            dxp[i] = g * inv / static_cast<double>(n) *
                                     (static_cast<double>(n) * dyp[i] - sum_dy -
                                      hp[i] * sum_dy_xhat);
                        }
                    }
                }
                // Fold the batch statistics into the running estimates.
                for (std::size_t ch = 0; ch < C; ++ch) {
                    p.running_mean[ch] = (1.0 - kBnMomentum) * p.running_mean[ch] +
                                         kBnMomentum * cache.bn_mean[li][ch];
                    p.running_var[ch] = (1.0 - kBnMomentum) * p.running_var[ch] +
                                        kBnMomentum * cache.bn_var[li][ch];
                }
                updates.push_back({&p.gamma, &p.vel_gamma, std::move(dgamma)});
                updates.push_back({&p.beta, &p.vel_beta, std::move(dbeta)});
                break;
            }
            case LayerKind::MaxPool: {
                const std::size_t C = in_c[li], S = in_s[li];
                const std::size_t O = shape_s_[li];
                const auto& arg = cache.argmax[li];
                dx.assign(B * C * S * S, 0.0);
#pragma omp parallel for schedule(static)
                for (long bi = 0; bi < static_cast<long>(B); ++bi) {
                    const std::size_t b = static_cast<std::size_t>(bi);
                    for (std::size_t ch = 0; ch < C; ++ch) {
                        const double* dyp = dy.data() + (b * C + ch) * O * O;
                        const std::size_t* ap = arg.data() + (b * C + ch) * O * O;
                        double* dxp = dx.data() + (b * C + ch) * S * S;
                        for (std::size_t i = 0; i < O * O; ++i) dxp[ap[i]] += dyp[i];
                    }
                }
                break;
            }
            case LayerKind::FullyConnected:
            case LayerKind::Softmax: {
                const std::size_t in_dim = in_c[li] * in_s[li] * in_s[li];
                const std::size_t U = l.units;
                if (l.kind == LayerKind::FullyConnected) {
                    const auto& pre = cache.pre_relu[li];
                    for (std::size_t i = 0; i < dy.size(); ++i)
                        if (pre[i] <= 0.0) dy[i] = 0.0;
                }
                std::vector<double> dw(p.weight.size(), 0.0), db(p.bias.size(), 0.0);
                dx.assign(B * in_dim, 0.0);
#pragma omp parallel for schedule(static)
                for (long ui = 0; ui < static_cast<long>(U); ++ui) {
                    const std::size_t u = static_cast<std::size_t>(ui);
                    double* dwr = dw.data() + u * in_dim;
                    double acc_b = 0.0;
                    for (std::size_t b = 0; b < B; ++b) {
                        const double g = dy[b * U + u];
                        if (g == 0.0) continue;
                        const double* xb = xin + b * in_dim;
                        for (std::size_t j = 0; j < in_dim; ++j) dwr[j] += g * xb[j];
                        acc_b += g;
                    }
                    db[u] = acc_b;
                }
#pragma omp parallel for schedule(static)
                for (long bi = 0; bi < static_cast<long>(B); ++bi) {
                    const std::size_t b = static_cast<std::size_t>(bi);
                    double* dxb = dx.data() + b * in_dim;
                    for (std::size_t u = 0; u < U; ++u) {
                        const double g = dy[b * U + u];
                        if (g == 0.0) continue;
                        const double* wr = p.weight.data() + u * in_dim;
                        for (std::size_t j = 0; j < in_dim; ++j) dxb[j] += g * wr[j];
                    }
                }
                updates.push_back({&p.weight, &p.vel_weight, std::move(dw)});
                updates.push_back({&p.bias, &p.vel_bias, std::move(db)});
                break;
            }
        }
        dy = std::move(dx);
    }

    for (const auto& u : updates)
        for (double g : u.grad) grad_sq += g * g;
    if (!std::isfinite(grad_sq)) throw TrainingDiverged("non-finite gradient");

    for (auto& u : updates) {
        auto& w = *u.param;
        auto& v = *u.vel;
        if (schedule.momentum > 0.0) {
            for (std::size_t i = 0; i < w.size(); ++i) {
                v[i] = schedule.momentum * v[i] - lr * u.grad[i];
                w[i] += v[i];
            }
        } else {
            for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * u.grad[i];
        }
    }

    step_counter_++;
    return std::sqrt(grad_sq);
}

}  // namespace sct
