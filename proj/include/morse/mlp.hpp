#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "morse/estimator.hpp"
#include "morse/random.hpp"
#include "morse/types.hpp"

namespace morse {

enum class Activation { SiLU, ReLU, Tanh, Identity };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

Matrix activate(Activation a, const Matrix& pre);
// Elementwise derivative of the activation evaluated at the pre-activation.
Matrix activate_derivative(Activation a, const Matrix& pre);

struct DenseLayer {
    Matrix weight;  // out x in
    Vector bias;    // out

    Index in() const { return weight.cols(); }
    Index out() const { return weight.rows(); }
    Index parameter_count() const { return weight.size() + bias.size(); }
};

/// Affine-then-activation stack. The last layer is affine only.
class Mlp {
public:
    Mlp() = default;
    Mlp(std::vector<DenseLayer> layers, Activation activation);

    /// widths = {in, hidden..., out}. Weights ~ N(0, 1/fan_in), biases zero.
    static Mlp random(const std::vector<Index>& widths, Activation activation, NoiseStream& rng);

    const std::vector<DenseLayer>& layers() const { return layers_; }
    Activation activation() const { return activation_; }
    Index input_width() const { return layers_.front().in(); }
    Index output_width() const { return layers_.back().out(); }
    std::vector<Index> widths() const;
    Index parameter_count() const;

    Vector pack() const;
    void unpack(const Vector& flat);

    // Changes whenever parameters are replaced; tapes from older versions are rejected.
    std::uint64_t version() const { return version_; }

private:
    std::vector<DenseLayer> layers_;
    Activation activation_ = Activation::SiLU;
    std::uint64_t version_ = 0;
};

/// Intermediates retained by a forward pass for backpropagation.
struct MlpTape {
    const Mlp* owner = nullptr;
    std::uint64_t version = 0;
    std::vector<Matrix> inputs;  // input to each layer
    std::vector<Matrix> pre;     // pre-activation of each layer
};

/// Gradient of a scalar loss with respect to each layer's weight and bias.
struct MlpGradients {
    std::vector<DenseLayer> layers;
    Matrix input;  // gradient with respect to the network input

    Vector pack() const;
};

std::pair<Matrix, MlpTape> mlp_forward(const Mlp& net, const Matrix& input);
Matrix mlp_infer(const Mlp& net, const Matrix& input);
MlpGradients mlp_backprop(const Mlp& net, const MlpTape& tape, const Matrix& output_grad);

/// [sin(t w_j), cos(t w_j)] pairs with w_j = 10000^(-j / (dim/2 - 1)), t rescaled to a 1000-step clock.
Vector sinusoidal_time_embed(int t, int dim, int T);
Matrix sinusoidal_time_embed(std::span<const int> t, int dim, int T);

struct MlpDenoiserShape {
    Index data_dim = 2;
    std::vector<Index> hidden{128, 128, 128};
    Activation activation = Activation::SiLU;
    int time_embed_dim = 32;
};

/// Dash network: eps_hat = mlp([x; embed(t)]).
class MlpDenoiser final : public DashEstimator {
public:
    MlpDenoiser(MlpDenoiserShape shape, int T, Mlp net);
    static MlpDenoiser random(const MlpDenoiserShape& shape, int T, NoiseStream& rng);

    Index dim() const override { return shape_.data_dim; }
    const MlpDenoiserShape& shape() const { return shape_; }
    int schedule_length() const { return T_; }
    const Mlp& net() const { return net_; }
    Mlp& net() { return net_; }

    Matrix build_input(const Matrix& x, std::span<const int> t) const;

protected:
    Matrix do_estimate(const Matrix& x, std::span<const int> t) const override;

private:
    MlpDenoiserShape shape_;
    int T_;
    Mlp net_;
};

}  // namespace morse
