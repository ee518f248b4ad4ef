#include <algorithm>
#include <cmath>
#include <vector>

#include "sct/errors.hpp"
#include "sct/net.hpp"

namespace sct::ref {

// Straight-line serial forward in infer mode. Accumulation order matches the
// OpenMP kernels, so outputs agree bitwise.
std::vector<double> forward_batch(const Network& net, const double* patches, std::size_t B) {
    const NetworkConfig& cfg = net.config();
    const auto& params = net.params();
    constexpr double eps = 1e-5;

    std::size_t c = cfg.input_channels;
    std::size_t s = cfg.input_size;
    std::vector<double> cur(patches, patches + B * c * s * s);

    for (std::size_t li = 0; li < cfg.layers.size(); ++li) {
        const LayerSpec& l = cfg.layers[li];
        const LayerParams& p = params[li];
        std::vector<double> next;
        switch (l.kind) {
            case LayerKind::Conv: {
                const std::size_t O = (s + 2 * l.pad - l.kernel) / l.stride + 1;
                next.assign(B * l.maps * O * O, 0.0);
                for (std::size_t b = 0; b < B; ++b) {
                    for (std::size_t m = 0; m < l.maps; ++m) {
                        double* plane = next.data() + (b * l.maps + m) * O * O;
                        for (std::size_t i = 0; i < O * O; ++i) plane[i] = p.bias[m];
                        for (std::size_t ic = 0; ic < c; ++ic) {
                            const double* xp = cur.data() + (b * c + ic) * s * s;
                            const double* wk =
                                p.weight.data() + (m * c + ic) * l.kernel * l.kernel;
                            for (std::size_t ky = 0; ky < l.kernel; ++ky) {
                                for (std::size_t kx = 0; kx < l.kernel; ++kx) {
                                    const double wv = wk[ky * l.kernel + kx];
                                    for (std::size_t oy = 0; oy < O; ++oy) {
                                        const long iy = static_cast<long>(oy * l.stride + ky) -
                                                        static_cast<long>(l.pad);
                                        if (iy < 0 || iy >= static_cast<long>(s)) continue;
                                        for (std::size_t ox = 0; ox < O; ++ox) {
                                            const long ix =
                                                static_cast<long>(ox * l.stride + kx) -
                                                static_cast<long>(l.pad);
                                            if (ix < 0 || ix >= static_cast<long>(s)) continue;
                                            plane[oy * O + ox] +=
                                                wv * xp[static_cast<std::size_t>(iy) * s +
                                                        static_cast<std::size_t>(ix)];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                for (auto& v : next) v = std::max(v, 0.0);
                c = l.maps;
                s = O;
                break;
            }
            case LayerKind::BatchNorm: {
                const std::size_t plane = cur.size() / (B * c);
                next.resize(cur.size());
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const double inv = 1.0 / std::sqrt(p.running_var[ch] + eps);
                    for (std::size_t b = 0; b < B; ++b) {
                        const double* xp = cur.data() + (b * c + ch) * plane;
                        double* yp = next.data() + (b * c + ch) * plane;
                        for (std::size_t i = 0; i < plane; ++i)
                            yp[i] = p.gamma[ch] * (xp[i] - p.running_mean[ch]) * inv +
                                    p.beta[ch];
                    }
                }
                break;
            }
            case LayerKind::MaxPool: {
                const std::size_t O = (s - l.window) / l.pool_stride + 1;
                next.assign(B * c * O * O, 0.0);
                for (std::size_t b = 0; b < B; ++b) {
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        const double* xp = cur.data() + (b * c + ch) * s * s;
                        double* yp = next.data() + (b * c + ch) * O * O;
                        for (std::size_t oy = 0; oy < O; ++oy) {
                            for (std::size_t ox = 0; ox < O; ++ox) {
                                double best =
                                    xp[(oy * l.pool_stride) * s + ox * l.pool_stride];
                                for (std::size_t wy = 0; wy < l.window; ++wy)
                                    for (std::size_t wx = 0; wx < l.window; ++wx)
                                        best = std::max(
                                            best, xp[(oy * l.pool_stride + wy) * s +
                                                     ox * l.pool_stride + wx]);
                                yp[oy * O + ox] = best;
                            }
                        }
                    }
                }
                s = O;
                break;
            }
            case LayerKind::FullyConnected:
            case LayerKind::Softmax: {
                const std::size_t in_dim = c * s * s;
                next.assign(B * l.units, 0.0);
                for (std::size_t b = 0; b < B; ++b) {
                    const double* xb = cur.data() + b * in_dim;
                    double* yb = next.data() + b * l.units;
                    for (std::size_t u = 0; u < l.units; ++u) {
                        const double* wr = p.weight.data() + u * in_dim;
                        double acc = p.bias[u];
                        for (std::size_t j = 0; j < in_dim; ++j) acc += wr[j] * xb[j];
                        yb[u] = acc;
                    }
                }
                if (l.kind == LayerKind::FullyConnected)
                    for (auto& v : next) v = std::max(v, 0.0);
                c = l.units;
                s = 1;
                break;
            }
        }
        cur = std::move(next);
    }

    // Softmax rows.
    const std::size_t K = net.num_classes();
    for (std::size_t b = 0; b < B; ++b) {
        double* row = cur.data() + b * K;
        double mx = row[0];
        for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        double z = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            row[k] = std::exp(row[k] - mx);
            z += row[k];
        }
        for (std::size_t k = 0; k < K; ++k) row[k] /= z;
    }
    return cur;
}

}  // namespace sct::ref
