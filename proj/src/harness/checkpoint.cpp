#include "morse/harness/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

namespace morse::harness {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'M', 'O', 'R', 'S', 'E', 'C', 'K', 'P'};

std::uint64_t fnv1a(const unsigned char* data, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* c = static_cast<const unsigned char*>(p);
        out_.insert(out_.end(), c, c + n);
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    std::vector<unsigned char>& data() { return out_; }

private:
    std::vector<unsigned char> out_;
};

class Reader {
public:
    explicit Reader(const std::vector<unsigned char>& in) : in_(in) {}

    void need(std::size_t n) const {
        if (in_.size() - at_ < n) throw IntegrityError("checkpoint truncated at byte " + std::to_string(at_));
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[at_++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[at_++]) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(in_.data() + at_), n);
        at_ += n;
        return s;
    }
    std::size_t position() const { return at_; }
    std::size_t remaining() const { return in_.size() - at_; }

private:
    const std::vector<unsigned char>& in_;
    std::size_t at_ = 0;
};

json shape_json(const MlpDenoiserShape& s, int T) {
    return json{{"data_dim", s.data_dim},
                {"hidden", s.hidden},
                {"activation", to_string(s.activation)},
                {"time_embed_dim", s.time_embed_dim},
                {"T", T}};
}

MlpDenoiserShape shape_from_json(const json& j) {
    MlpDenoiserShape s;
    s.data_dim = j.at("data_dim").get<Index>();
    s.hidden = j.at("hidden").get<std::vector<Index>>();
    s.activation = parse_activation(j.at("activation").get<std::string>());
    s.time_embed_dim = j.at("time_embed_dim").get<int>();
    return s;
}

json parse_architecture(const Checkpoint& ckpt) {
    try {
        return json::parse(ckpt.architecture);
    } catch (const json::exception& e) {
        throw IntegrityError(std::string("checkpoint architecture is not valid JSON: ") + e.what());
    }
}

// Zero-valued network of the given shape, ready for unpack.
Mlp empty_mlp(const MlpDenoiserShape& s) {
    std::vector<Index> widths{s.data_dim + s.time_embed_dim};
    widths.insert(widths.end(), s.hidden.begin(), s.hidden.end());
    widths.push_back(s.data_dim);
    std::vector<DenseLayer> layers;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        layers.push_back({Matrix::Zero(widths[i + 1], widths[i]), Vector::Zero(widths[i + 1])});
    }
    return Mlp(std::move(layers), s.activation);
}

void check_kind(const Checkpoint& ckpt, CheckpointKind expected) {
    if (ckpt.kind != expected) {
        throw IntegrityError("checkpoint holds a " + to_string(ckpt.kind) + " model, expected " + to_string(expected));
    }
}

}  // namespace

std::string to_string(CheckpointKind k) {
    switch (k) {
        case CheckpointKind::DashMlp: return "dash-mlp";
        case CheckpointKind::SharedDot: return "shared-dot";
    }
    return "unknown";
}

std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt) {
    Writer w;
    w.bytes(kMagic, sizeof kMagic);
    w.u32(ckpt.version);
    w.u32(static_cast<std::uint32_t>(ckpt.kind));
    w.u64(ckpt.seed);
    w.u64(ckpt.iterations);
    w.u64(ckpt.fingerprint);
    w.u64(ckpt.architecture.size());
    w.bytes(ckpt.architecture.data(), ckpt.architecture.size());
    w.u64(static_cast<std::uint64_t>(ckpt.payload.size()));
    for (Index i = 0; i < ckpt.payload.size(); ++i) w.f64(ckpt.payload[i]);
    const std::uint64_t sum = fnv1a(w.data().data(), w.data().size());
    w.u64(sum);
    return std::move(w.data());
}

Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes) {
    Reader r(bytes);
    if (r.str(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) throw IntegrityError("not a checkpoint file");
    Checkpoint c;
    c.version = r.u32();
    if (c.version != kCheckpointVersion) {
        throw IntegrityError("checkpoint format version " + std::to_string(c.version) + " is not supported (expected " +
                             std::to_string(kCheckpointVersion) + ")");
    }
    const std::uint32_t kind = r.u32();
    if (kind != 1 && kind != 2) throw IntegrityError("unknown checkpoint kind tag " + std::to_string(kind));
    c.kind = static_cast<CheckpointKind>(kind);
    c.seed = r.u64();
    c.iterations = r.u64();
    c.fingerprint = r.u64();
    const std::uint64_t arch_len = r.u64();
    if (arch_len > r.remaining()) throw IntegrityError("checkpoint truncated: architecture length");
    c.architecture = r.str(arch_len);
    const std::uint64_t count = r.u64();
    if (count > r.remaining() / 8 || r.remaining() - count * 8 != 8) {
        throw IntegrityError("checkpoint length does not match its parameter count");
    }
    c.payload.resize(static_cast<Index>(count));
    for (Index i = 0; i < c.payload.size(); ++i) c.payload[i] = r.f64();
    const std::size_t covered = r.position();
    const std::uint64_t stored = r.u64();
    if (stored != fnv1a(bytes.data(), covered)) throw IntegrityError("checkpoint checksum mismatch");
    return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    const auto bytes = encode_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IntegrityError("cannot write checkpoint " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IntegrityError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IntegrityError("cannot open checkpoint " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_checkpoint(bytes);
    } catch (const IntegrityError& e) {
        throw IntegrityError(path + ": " + e.what());
    }
}

Checkpoint load_checkpoint(const std::string& path, CheckpointKind expected) {
    Checkpoint c = load_checkpoint(path);
    try {
        check_kind(c, expected);
    } catch (const IntegrityError& e) {
        throw IntegrityError(path + ": " + e.what());
    }
    return c;
}

void require_fingerprint(const Checkpoint& ckpt, const NoiseSchedule<double>& sched) {
    const std::uint64_t expected = sched.fingerprint();
    if (ckpt.fingerprint != expected) {
        throw IntegrityError("schedule fingerprint mismatch: checkpoint " + hex64(ckpt.fingerprint) + ", config " +
                             hex64(expected));
    }
}

Checkpoint dash_checkpoint(const MlpDenoiser& dash, const NoiseSchedule<double>& sched, std::uint64_t seed,
                           std::uint64_t iterations) {
    Checkpoint c;
    c.kind = CheckpointKind::DashMlp;
    c.seed = seed;
    c.iterations = iterations;
    c.fingerprint = sched.fingerprint();
    c.architecture = shape_json(dash.shape(), dash.schedule_length()).dump();
    c.payload = dash.net().pack();
    return c;
}

MlpDenoiser dash_from_checkpoint(const Checkpoint& ckpt, const NoiseSchedule<double>& sched) {
    check_kind(ckpt, CheckpointKind::DashMlp);
    require_fingerprint(ckpt, sched);
    try {
        const json arch = parse_architecture(ckpt);
        const MlpDenoiserShape shape = shape_from_json(arch);
        Mlp net = empty_mlp(shape);
        if (net.parameter_count() != ckpt.payload.size()) {
            throw IntegrityError("checkpoint payload does not match its architecture");
        }
        net.unpack(ckpt.payload);
        return MlpDenoiser(shape, arch.at("T").get<int>(), std::move(net));
    } catch (const json::exception& e) {
        throw IntegrityError(std::string("bad checkpoint architecture: ") + e.what());
    }
}

Checkpoint dot_checkpoint(const SharedDot& dot, const NoiseSchedule<double>& sched, std::uint64_t seed,
                          std::uint64_t iterations) {
    Checkpoint c;
    c.kind = CheckpointKind::SharedDot;
    c.seed = seed;
    c.iterations = iterations;
    c.fingerprint = sched.fingerprint();
    json arch = shape_json(dot.base_shape(), dot.schedule_length());
    const auto& o = dot.options();
    arch["rank"] = o.rank;
    arch["lora_scale"] = o.lora_scale;
    arch["lora_init_std"] = o.lora_init_std;
    arch["mask"] = {{"x_anchor", o.mask.use_x_anchor}, {"z_anchor", o.mask.use_z_anchor}, {"t_anchor", o.mask.use_t_anchor}};
    c.architecture = arch.dump();
    const Vector base = dot.base().pack();
    const Vector trainable = dot.pack_trainable();
    c.payload.resize(base.size() + trainable.size());
    c.payload << base, trainable;
    return c;
}

SharedDot dot_from_checkpoint(const Checkpoint& ckpt, const NoiseSchedule<double>& sched) {
    check_kind(ckpt, CheckpointKind::SharedDot);
    require_fingerprint(ckpt, sched);
    try {
        const json arch = parse_architecture(ckpt);
        const MlpDenoiserShape shape = shape_from_json(arch);
        SharedDotOptions o;
        o.rank = arch.at("rank").get<int>();
        o.lora_scale = arch.at("lora_scale").get<double>();
        o.lora_init_std = arch.at("lora_init_std").get<double>();
        const json& m = arch.at("mask");
        o.mask = {m.at("x_anchor").get<bool>(), m.at("z_anchor").get<bool>(), m.at("t_anchor").get<bool>()};

        Mlp base = empty_mlp(shape);
        const Index base_count = base.parameter_count();
        if (ckpt.payload.size() < base_count) throw IntegrityError("checkpoint payload shorter than its base network");
        base.unpack(ckpt.payload.head(base_count));

        Index cond = shape.data_dim + shape.time_embed_dim;
        if (o.mask.use_x_anchor) cond += shape.data_dim;
        if (o.mask.use_z_anchor) cond += shape.data_dim;
        if (o.mask.use_t_anchor) cond += shape.time_embed_dim;
        DenseLayer in_proj{Matrix::Zero(base.input_width(), cond), Vector::Zero(base.input_width())};
        std::vector<LoraAdapter> adapters;
        for (const auto& l : base.layers()) adapters.push_back({Matrix::Zero(o.rank, l.in()), Matrix::Zero(l.out(), o.rank)});
        DenseLayer out_proj{Matrix::Zero(shape.data_dim, base.output_width()), Vector::Zero(shape.data_dim)};
        SharedDot dot(shape, arch.at("T").get<int>(), std::move(base), o, std::move(in_proj), std::move(adapters),
                      std::move(out_proj));
        if (dot.trainable_parameter_count() != ckpt.payload.size() - base_count) {
            throw IntegrityError("checkpoint payload does not match its architecture");
        }
        dot.unpack_trainable(ckpt.payload.tail(ckpt.payload.size() - base_count));
        return dot;
    } catch (const json::exception& e) {
        throw IntegrityError(std::string("bad checkpoint architecture: ") + e.what());
    }
}

}  // namespace morse::harness
