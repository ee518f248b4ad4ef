#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sct/errors.hpp"
#include "sct/net.hpp"

namespace sct {

namespace {

constexpr char kMagic[5] = {'S', 'C', 'C', 'M', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.write(buf, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    out.write(buf, 8);
}

void put_string(std::ostream& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_doubles(std::ostream& out, const std::vector<double>& v) {
    put_u64(out, v.size());
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::uint32_t get_u32(std::istream& in) {
    char buf[4];
    in.read(buf, 4);
    if (in.gcount() != 4) throw CorruptCheckpoint("truncated checkpoint");
    std::uint32_t v;
    std::memcpy(&v, buf, 4);
    return v;
}

std::uint64_t get_u64(std::istream& in) {
    char buf[8];
    in.read(buf, 8);
    if (in.gcount() != 8) throw CorruptCheckpoint("truncated checkpoint");
    std::uint64_t v;
    std::memcpy(&v, buf, 8);
    return v;
}

std::string get_string(std::istream& in) {
    const std::uint32_t len = get_u32(in);
    if (len > (1u << 24)) throw CorruptCheckpoint("implausible string length");
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (static_cast<std::uint32_t>(in.gcount()) != len)
        throw CorruptCheckpoint("truncated checkpoint");
    return s;
}

std::vector<double> get_doubles(std::istream& in) {
    const std::uint64_t n = get_u64(in);
    if (n > (1ull << 32)) throw CorruptCheckpoint("implausible tensor size");
    std::vector<double> v(n);
    const std::streamsize bytes = static_cast<std::streamsize>(n * sizeof(double));
    in.read(reinterpret_cast<char*>(v.data()), bytes);
    if (in.gcount() != bytes) throw CorruptCheckpoint("truncated checkpoint");
    return v;
}

NetworkConfig parse_canonical(const std::string& text) {
    NetworkConfig cfg;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "in") {
            ls >> cfg.input_channels >> cfg.input_size;
        } else if (kind == "seed") {
            ls >> cfg.seed;
        } else if (kind == "conv") {
            LayerSpec l{LayerKind::Conv};
            ls >> l.maps >> l.kernel >> l.stride >> l.pad >> l.dropout;
            cfg.layers.push_back(l);
        } else if (kind == "bn") {
            cfg.layers.push_back(LayerSpec::batch_norm());
        } else if (kind == "pool") {
            LayerSpec l{LayerKind::MaxPool};
            ls >> l.window >> l.pool_stride;
            cfg.layers.push_back(l);
        } else if (kind == "fc") {
            LayerSpec l{LayerKind::FullyConnected};
            ls >> l.units >> l.dropout;
            cfg.layers.push_back(l);
        } else if (kind == "softmax") {
            LayerSpec l{LayerKind::Softmax};
            ls >> l.units;
            cfg.layers.push_back(l);
        } else if (!kind.empty()) {
            throw CorruptCheckpoint("unknown layer kind in checkpoint: " + kind);
        }
        if (!ls) throw CorruptCheckpoint("malformed config line: " + line);
    }
    return cfg;
}

}  // namespace

struct CheckpointCodec {
    static void save(const Network& net, const CheckpointMeta& meta, const std::string& path) {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write checkpoint: " + path);
        out.write(kMagic, sizeof(kMagic));
        put_u64(out, net.config().hash());
        put_string(out, net.config().canonical());

        put_u32(out, static_cast<std::uint32_t>(meta.alphabet_chars.size()));
        for (const auto& c : meta.alphabet_chars) put_string(out, c);
        put_u32(out, static_cast<std::uint32_t>(meta.window.window_widths.size()));
        for (std::size_t w : meta.window.window_widths) put_u64(out, w);
        put_u64(out, meta.window.stride);
        put_u64(out, meta.window.patch_size);
        put_u64(out, meta.window.pad_width);

        put_u64(out, net.step_counter_);

        std::uint32_t count = 0;
        for (const auto& p : net.params_)
            count += (p.weight.empty() ? 0 : 2) + (p.gamma.empty() ? 0 : 4);
        put_u32(out, count);
        for (std::size_t li = 0; li < net.params_.size(); ++li) {
            const auto& p = net.params_[li];
            const std::string prefix = "layer" + std::to_string(li) + ".";
            auto emit = [&](const char* name, const std::vector<double>& v) {
                put_string(out, prefix + name);
                put_doubles(out, v);
            };
            if (!p.weight.empty()) {
                emit("weight", p.weight);
                emit("bias", p.bias);
            }
            if (!p.gamma.empty()) {
                emit("gamma", p.gamma);
                emit("beta", p.beta);
                emit("running_mean", p.running_mean);
                emit("running_var", p.running_var);
            }
        }
        if (!out) throw IoError("short write: " + path);
    }

    static LoadedCheckpoint load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open checkpoint: " + path);
        char magic[5];
        in.read(magic, 5);
        if (in.gcount() != 5 || std::memcmp(magic, kMagic, 5) != 0)
            throw IncompatibleCheckpoint("bad checkpoint magic: " + path);
        const std::uint64_t stored_hash = get_u64(in);
        const std::string canonical = get_string(in);
        NetworkConfig cfg = parse_canonical(canonical);
        if (cfg.hash() != stored_hash)
            throw CorruptCheckpoint("config hash mismatch: " + path);

        CheckpointMeta meta;
        const std::uint32_t n_chars = get_u32(in);
        for (std::uint32_t i = 0; i < n_chars; ++i)
            meta.alphabet_chars.push_back(get_string(in));
        meta.window.window_widths.clear();
        const std::uint32_t n_widths = get_u32(in);
        for (std::uint32_t i = 0; i < n_widths; ++i)
            meta.window.window_widths.push_back(get_u64(in));
        meta.window.stride = get_u64(in);
        meta.window.patch_size = get_u64(in);
        meta.window.pad_width = get_u64(in);

        const std::uint64_t step = get_u64(in);

        Network net(cfg);
        net.step_counter_ = step;
        const std::uint32_t count = get_u32(in);
        for (std::uint32_t i = 0; i < count; ++i) {
            const std::string name = get_string(in);
            std::vector<double> data = get_doubles(in);
            const std::size_t dot = name.find('.');
            if (dot == std::string::npos || name.substr(0, 5) != "layer")
                throw CorruptCheckpoint("bad tensor name: " + name);
            const std::size_t li = std::stoul(name.substr(5, dot - 5));
            if (li >= net.params_.size()) throw CorruptCheckpoint("tensor index out of range");
            const std::string field = name.substr(dot + 1);
            auto assign = [&](std::vector<double>& dst) {
                if (dst.size() != data.size())
                    throw IncompatibleCheckpoint("tensor shape mismatch: " + name);
                dst = std::move(data);
            };
            auto& p = net.params_[li];
            if (field == "weight") assign(p.weight);
            else if (field == "bias") assign(p.bias);
            else if (field == "gamma") assign(p.gamma);
            else if (field == "beta") assign(p.beta);
            else if (field == "running_mean") assign(p.running_mean);
            else if (field == "running_var") assign(p.running_var);
            else throw CorruptCheckpoint("unknown tensor field: " + name);
        }
        return {std::move(net), std::move(meta)};
    }
};

void save_checkpoint(const Network& net, const CheckpointMeta& meta, const std::string& path) {
    CheckpointCodec::save(net, meta, path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    return CheckpointCodec::load(path);
}

}  // namespace sct
