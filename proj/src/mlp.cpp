#include "morse/mlp.hpp"

#include <atomic>
#include <cmath>

namespace morse {

namespace {

std::atomic<std::uint64_t> next_version{1};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Activation parse_activation(const std::string& name) {
    if (name == "silu") return Activation::SiLU;
    if (name == "relu") return Activation::ReLU;
    if (name == "tanh") return Activation::Tanh;
    if (name == "identity") return Activation::Identity;
    throw ConfigError("unknown activation '" + name + "'");
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::SiLU: return "silu";
        case Activation::ReLU: return "relu";
        case Activation::Tanh: return "tanh";
        case Activation::Identity: return "identity";
    }
    return "?";
}

Matrix activate(Activation a, const Matrix& pre) {
    switch (a) {
        case Activation::SiLU: return pre.unaryExpr([](double x) { return x * sigmoid(x); });
        case Activation::ReLU: return pre.cwiseMax(0.0);
        case Activation::Tanh: return pre.array().tanh().matrix();
        case Activation::Identity: return pre;
    }
    return pre;
}

Matrix activate_derivative(Activation a, const Matrix& pre) {
    switch (a) {
        case Activation::SiLU:
            return pre.unaryExpr([](double x) {
                const double s = sigmoid(x);
                return s * (1.0 + x * (1.0 - s));
            });
        case Activation::ReLU: return pre.unaryExpr([](double x) { return x > 0.0 ? 1.0 : 0.0; });
        case Activation::Tanh: return (1.0 - pre.array().tanh().square()).matrix();
        case Activation::Identity: return Matrix::Ones(pre.rows(), pre.cols());
    }
    return pre;
}

Mlp::Mlp(std::vector<DenseLayer> layers, Activation activation)
    : layers_(std::move(layers)), activation_(activation), version_(next_version++) {
    if (layers_.empty()) throw ConfigError("mlp needs at least one layer");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        if (l.bias.size() != l.out()) throw ShapeError("mlp layer bias does not match its weight rows");
        if (i > 0 && l.in() != layers_[i - 1].out()) throw ShapeError("mlp layer widths do not chain");
        if (!l.weight.allFinite() || !l.bias.allFinite()) throw NumericError("mlp parameters must be finite");
    }
}

Mlp Mlp::random(const std::vector<Index>& widths, Activation activation, NoiseStream& rng) {
    if (widths.size() < 2) throw ConfigError("mlp needs an input and an output width");
    std::vector<DenseLayer> layers;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        if (widths[i] < 1 || widths[i + 1] < 1) throw ConfigError("mlp widths must be positive");
        const double scale = 1.0 / std::sqrt(static_cast<double>(widths[i]));
        layers.push_back({rng.normal(widths[i + 1], widths[i]) * scale, Vector::Zero(widths[i + 1])});
    }
    return Mlp(std::move(layers), activation);
}

std::vector<Index> Mlp::widths() const {
    std::vector<Index> w{input_width()};
    for (const auto& l : layers_) w.push_back(l.out());
    return w;
}

Index Mlp::parameter_count() const {
    Index n = 0;
    for (const auto& l : layers_) n += l.parameter_count();
    return n;
}

Vector Mlp::pack() const {
    Vector flat(parameter_count());
    Index at = 0;
    for (const auto& l : layers_) {
        flat.segment(at, l.weight.size()) = l.weight.reshaped();
        at += l.weight.size();
        flat.segment(at, l.bias.size()) = l.bias;
        at += l.bias.size();
    }
    return flat;
}

void Mlp::unpack(const Vector& flat) {
    if (flat.size() != parameter_count()) throw ShapeError("mlp unpack: parameter count mismatch");
    if (!flat.allFinite()) throw NumericError("mlp unpack: non-finite parameters");
    Index at = 0;
    for (auto& l : layers_) {
        l.weight.reshaped() = flat.segment(at, l.weight.size());
        at += l.weight.size();
        l.bias = flat.segment(at, l.bias.size());
        at += l.bias.size();
    }
    version_ = next_version++;
}

Vector MlpGradients::pack() const {
    Index n = 0;
    for (const auto& l : layers) n += l.parameter_count();
    Vector flat(n);
    Index at = 0;
    for (const auto& l : layers) {
        flat.segment(at, l.weight.size()) = l.weight.reshaped();
        at += l.weight.size();
        flat.segment(at, l.bias.size()) = l.bias;
        at += l.bias.size();
    }
    return flat;
}

std::pair<Matrix, MlpTape> mlp_forward(const Mlp& net, const Matrix& input) {
    if (input.rows() != net.input_width()) {
        throw ShapeError("mlp_forward: input width " + std::to_string(input.rows()) + " != " +
                         std::to_string(net.input_width()));
    }
    MlpTape tape;
    tape.owner = &net;
    tape.version = net.version();
    const auto& layers = net.layers();
    Matrix h = input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        Matrix pre = layers[i].weight * h;
        pre.colwise() += layers[i].bias;
        tape.inputs.push_back(std::move(h));
        h = (i + 1 < layers.size()) ? activate(net.activation(), pre) : pre;
        tape.pre.push_back(std::move(pre));
    }
    return {std::move(h), std::move(tape)};
}

Matrix mlp_infer(const Mlp& net, const Matrix& input) {
    if (input.rows() != net.input_width()) throw ShapeError("mlp_infer: input width mismatch");
    const auto& layers = net.layers();
    Matrix h = input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        Matrix pre = layers[i].weight * h;
        pre.colwise() += layers[i].bias;
        h = (i + 1 < layers.size()) ? activate(net.activation(), pre) : std::move(pre);
    }
    return h;
}

MlpGradients mlp_backprop(const Mlp& net, const MlpTape& tape, const Matrix& output_grad) {
    if (tape.owner != &net || tape.version != net.version() || tape.pre.size() != net.layers().size()) {
        throw ContractError("mlp_backprop: tape does not belong to the current network parameters");
    }
    const auto& layers = net.layers();
    if (output_grad.rows() != net.output_width() || output_grad.cols() != tape.pre.back().cols()) {
        throw ShapeError("mlp_backprop: output gradient shape mismatch");
    }
    MlpGradients grads;
    grads.layers.resize(layers.size());
    Matrix g = output_grad;  // dL/d(pre) of the current layer
    for (std::size_t k = layers.size(); k-- > 0;) {
        if (k + 1 < layers.size()) g = g.cwiseProduct(activate_derivative(net.activation(), tape.pre[k]));
        grads.layers[k].weight = g * tape.inputs[k].transpose();
        grads.layers[k].bias = g.rowwise().sum();
        g = layers[k].weight.transpose() * g;
    }
    grads.input = std::move(g);
    return grads;
}

Vector sinusoidal_time_embed(int t, int dim, int T) {
    if (dim < 2 || dim % 2 != 0) throw ConfigError("time embedding dim must be a positive even integer");
    if (T < 1) throw ConfigError("time embedding needs T >= 1");
    const int half = dim / 2;
    const double clock = static_cast<double>(t) * 1000.0 / static_cast<double>(T);
    const double step = half > 1 ? std::log(10000.0) / static_cast<double>(half - 1) : 0.0;
    Vector e(dim);
    for (int j = 0; j < half; ++j) {
        const double w = std::exp(-step * j);
        e[2 * j] = std::sin(clock * w);
        e[2 * j + 1] = std::cos(clock * w);
    }
    return e;
}

Matrix sinusoidal_time_embed(std::span<const int> t, int dim, int T) {
    Matrix e(dim, static_cast<Index>(t.size()));
    for (std::size_t j = 0; j < t.size(); ++j) e.col(static_cast<Index>(j)) = sinusoidal_time_embed(t[j], dim, T);
    return e;
}

MlpDenoiser::MlpDenoiser(MlpDenoiserShape shape, int T, Mlp net) : shape_(std::move(shape)), T_(T), net_(std::move(net)) {
    if (net_.input_width() != shape_.data_dim + shape_.time_embed_dim) {
        throw ShapeError("mlp denoiser: network input width must be data dim + time embedding dim");
    }
    if (net_.output_width() != shape_.data_dim) throw ShapeError("mlp denoiser: output width must equal data dim");
}

MlpDenoiser MlpDenoiser::random(const MlpDenoiserShape& shape, int T, NoiseStream& rng) {
    std::vector<Index> widths{shape.data_dim + shape.time_embed_dim};
    widths.insert(widths.end(), shape.hidden.begin(), shape.hidden.end());
    widths.push_back(shape.data_dim);
    return MlpDenoiser(shape, T, Mlp::random(widths, shape.activation, rng));
}

Matrix MlpDenoiser::build_input(const Matrix& x, std::span<const int> t) const {
    Matrix in(shape_.data_dim + shape_.time_embed_dim, x.cols());
    in.topRows(shape_.data_dim) = x;
    in.bottomRows(shape_.time_embed_dim) = sinusoidal_time_embed(t, shape_.time_embed_dim, T_);
    return in;
}

Matrix MlpDenoiser::do_estimate(const Matrix& x, std::span<const int> t) const {
    return mlp_infer(net_, build_input(x, t));
}

}  // namespace morse
