#include "morse/shared_dot.hpp"

#include <string>

namespace morse {

namespace {

Index conditioning_width_for(const MlpDenoiserShape& s, const InputMask& m) {
    Index w = s.data_dim + s.time_embed_dim;
    if (m.use_x_anchor) w += s.data_dim;
    if (m.use_z_anchor) w += s.data_dim;
    if (m.use_t_anchor) w += s.time_embed_dim;
    return w;
}

}  // namespace

SharedDot::SharedDot(MlpDenoiserShape base_shape, int T, Mlp base, SharedDotOptions options, DenseLayer in_proj,
                     std::vector<LoraAdapter> adapters, DenseLayer out_proj)
    : base_shape_(std::move(base_shape)),
      T_(T),
      base_(std::move(base)),
      options_(options),
      in_proj_(std::move(in_proj)),
      adapters_(std::move(adapters)),
      out_proj_(std::move(out_proj)) {
    if (options_.rank < 1) throw ConfigError("shared dot: LoRA rank must be >= 1");
    if (adapters_.size() != base_.layers().size()) throw ShapeError("shared dot: one adapter per base layer required");
    for (std::size_t l = 0; l < adapters_.size(); ++l) {
        const auto& layer = base_.layers()[l];
        if (options_.rank > layer.in()) {
            throw ConfigError("shared dot: LoRA rank " + std::to_string(options_.rank) + " exceeds width " +
                              std::to_string(layer.in()) + " of base layer " + std::to_string(l));
        }
        if (adapters_[l].down.rows() != options_.rank || adapters_[l].down.cols() != layer.in() ||
            adapters_[l].up.rows() != layer.out() || adapters_[l].up.cols() != options_.rank) {
            throw ShapeError("shared dot: adapter shape mismatch at layer " + std::to_string(l));
        }
    }
    if (in_proj_.in() != conditioning_width() || in_proj_.out() != base_.input_width() ||
        in_proj_.bias.size() != in_proj_.out()) {
        throw ShapeError("shared dot: input projection shape mismatch");
    }
    if (out_proj_.in() != base_.output_width() || out_proj_.out() != base_shape_.data_dim ||
        out_proj_.bias.size() != out_proj_.out()) {
        throw ShapeError("shared dot: output projection shape mismatch");
    }
}

SharedDot SharedDot::build(const MlpDenoiser& base, const SharedDotOptions& options, NoiseStream& rng) {
    const MlpDenoiserShape& shape = base.shape();
    const Mlp& net = base.net();
    if (options.rank < 1) throw ConfigError("shared dot: LoRA rank must be >= 1");
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
        if (options.rank > net.layers()[l].in()) {
            throw ConfigError("shared dot: LoRA rank " + std::to_string(options.rank) + " exceeds width " +
                              std::to_string(net.layers()[l].in()) + " of base layer " + std::to_string(l));
        }
    }
    const Index cond = conditioning_width_for(shape, options.mask);
    DenseLayer in_proj{Matrix::Zero(net.input_width(), cond), Vector::Zero(net.input_width())};
    // [x_cur; embed(t_cur)] is laid out exactly like the base network's own input.
    in_proj.weight.leftCols(net.input_width()).setIdentity();

    std::vector<LoraAdapter> adapters;
    for (const auto& layer : net.layers()) {
        adapters.push_back({rng.normal(options.rank, layer.in()) * options.lora_init_std,
                            Matrix::Zero(layer.out(), options.rank)});
    }
    DenseLayer out_proj{Matrix::Zero(shape.data_dim, net.output_width()), Vector::Zero(shape.data_dim)};
    return SharedDot(shape, base.schedule_length(), net, options, std::move(in_proj), std::move(adapters),
                     std::move(out_proj));
}

Index SharedDot::conditioning_width() const { return conditioning_width_for(base_shape_, options_.mask); }

Index SharedDot::trainable_parameter_count() const {
    Index n = in_proj_.parameter_count() + out_proj_.parameter_count();
    for (const auto& a : adapters_) n += a.down.size() + a.up.size();
    return n;
}

Vector SharedDot::pack_trainable() const {
    Vector flat(trainable_parameter_count());
    Index at = 0;
    auto put = [&](const auto& m) {
        flat.segment(at, m.size()) = m.reshaped();
        at += m.size();
    };
    put(in_proj_.weight);
    put(in_proj_.bias);
    for (const auto& a : adapters_) {
        put(a.down);
        put(a.up);
    }
    put(out_proj_.weight);
    put(out_proj_.bias);
    return flat;
}

void SharedDot::unpack_trainable(const Vector& flat) {
    if (flat.size() != trainable_parameter_count()) throw ShapeError("shared dot: trainable parameter count mismatch");
    if (!flat.allFinite()) throw NumericError("shared dot: non-finite parameters");
    Index at = 0;
    auto get = [&](auto& m) {
        m.reshaped() = flat.segment(at, m.size());
        at += m.size();
    };
    get(in_proj_.weight);
    get(in_proj_.bias);
    for (auto& a : adapters_) {
        get(a.down);
        get(a.up);
    }
    get(out_proj_.weight);
    get(out_proj_.bias);
}

Matrix SharedDot::build_input(const Matrix& x_anchor, const Matrix& x_cur, const Matrix& z_anchor,
                              std::span<const int> t_anchor, std::span<const int> t_cur) const {
    const Index d = base_shape_.data_dim;
    const Index e = base_shape_.time_embed_dim;
    Matrix c(conditioning_width(), x_cur.cols());
    Index row = 0;
    c.middleRows(row, d) = x_cur;
    row += d;
    c.middleRows(row, e) = sinusoidal_time_embed(t_cur, static_cast<int>(e), T_);
    row += e;
    if (options_.mask.use_x_anchor) {
        c.middleRows(row, d) = x_anchor;
        row += d;
    }
    if (options_.mask.use_z_anchor) {
        c.middleRows(row, d) = z_anchor;
        row += d;
    }
    if (options_.mask.use_t_anchor) {
        c.middleRows(row, e) = sinusoidal_time_embed(t_anchor, static_cast<int>(e), T_);
        row += e;
    }
    return c;
}

Matrix SharedDot::adapted_layer(std::size_t layer, const Matrix& h) const {
    const DenseLayer& base = base_.layers().at(layer);
    const LoraAdapter& a = adapters_.at(layer);
    Matrix pre = base.weight * h;
    pre.colwise() += base.bias;
    pre.noalias() += options_.lora_scale * (a.up * (a.down * h));
    return pre;
}

Matrix SharedDot::forward(const Matrix& conditioning, Tape* tape) const {
    if (conditioning.rows() != conditioning_width()) throw ShapeError("shared dot: conditioning width mismatch");
    Matrix h = in_proj_.weight * conditioning;
    h.colwise() += in_proj_.bias;
    const auto& layers = base_.layers();
    if (tape) {
        tape->conditioning = conditioning;
        tape->inputs.clear();
        tape->reduced.clear();
        tape->pre.clear();
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Matrix reduced = adapters_[l].down * h;
        Matrix pre = layers[l].weight * h;
        pre.colwise() += layers[l].bias;
        pre.noalias() += options_.lora_scale * (adapters_[l].up * reduced);
        Matrix next = (l + 1 < layers.size()) ? activate(base_.activation(), pre) : pre;
        if (tape) {
            tape->inputs.push_back(std::move(h));
            tape->reduced.push_back(std::move(reduced));
            tape->pre.push_back(std::move(pre));
        }
        h = std::move(next);
    }
    Matrix out = out_proj_.weight * h;
    out.colwise() += out_proj_.bias;
    if (tape) tape->last = std::move(h);
    return out;
}

Vector SharedDot::backprop(const Tape& tape, const Matrix& output_grad) const {
    const auto& layers = base_.layers();
    if (tape.pre.size() != layers.size() || output_grad.cols() != tape.last.cols() ||
        output_grad.rows() != out_proj_.out()) {
        throw ContractError("shared dot: tape does not match this network or gradient");
    }
    const double s = options_.lora_scale;
    Matrix g_out_w = output_grad * tape.last.transpose();
    Vector g_out_b = output_grad.rowwise().sum();
    std::vector<LoraAdapter> g_ad(layers.size());
    Matrix g = out_proj_.weight.transpose() * output_grad;
    for (std::size_t l = layers.size(); l-- > 0;) {
        if (l + 1 < layers.size()) g = g.cwiseProduct(activate_derivative(base_.activation(), tape.pre[l]));
        g_ad[l].up = s * (g * tape.reduced[l].transpose());
        const Matrix g_reduced = s * (adapters_[l].up.transpose() * g);
        g_ad[l].down = g_reduced * tape.inputs[l].transpose();
        g = layers[l].weight.transpose() * g + adapters_[l].down.transpose() * g_reduced;
    }
    Matrix g_in_w = g * tape.conditioning.transpose();
    Vector g_in_b = g.rowwise().sum();

    Vector flat(trainable_parameter_count());
    Index at = 0;
    auto put = [&](const auto& m) {
        flat.segment(at, m.size()) = m.reshaped();
        at += m.size();
    };
    put(g_in_w);
    put(g_in_b);
    for (const auto& a : g_ad) {
        put(a.down);
        put(a.up);
    }
    put(g_out_w);
    put(g_out_b);
    return flat;
}

Matrix SharedDot::do_residual(const Matrix& x_anchor, const Matrix& x_cur, const Matrix& z_anchor,
                              std::span<const int> t_anchor, std::span<const int> t_cur) const {
    return forward(build_input(x_anchor, x_cur, z_anchor, t_anchor, t_cur));
}

}  // namespace morse
