#pragma once

#include <vector>

#include "morse/mlp.hpp"
#include "morse/morse.hpp"
#include "morse/random.hpp"

namespace morse {

/// Low-rank update B A added to a frozen layer, scaled by the adapter scale.
struct LoraAdapter {
    Matrix down;  // A: rank x in
    Matrix up;    // B: out x rank
};

struct SharedDotOptions {
    InputMask mask{};
    int rank = 8;
    double lora_scale = 1.0;
    double lora_init_std = 0.02;
};

/// Dot network built around a frozen copy of a trained Dash MLP:
///   conditioning c = [x_cur; embed(t_cur); (x_anchor); (z_anchor); (embed(t_anchor))]
///   u = P_in c + p_in
///   each base layer: act(W h + b + scale * B A h)   (last layer affine)
///   residual = P_out h + p_out
/// Only the projections and adapters train. Masked-out inputs are dropped from c entirely.
class SharedDot final : public DotEstimator {
public:
    /// Input projection starts as the identity on the [x_cur; embed(t_cur)] block and zero on the
    /// anchor blocks; output projection and every B start at zero, so the initial residual is 0.
    static SharedDot build(const MlpDenoiser& base, const SharedDotOptions& options, NoiseStream& rng);

    SharedDot(MlpDenoiserShape base_shape, int T, Mlp base, SharedDotOptions options, DenseLayer in_proj,
              std::vector<LoraAdapter> adapters, DenseLayer out_proj);

    Index dim() const override { return base_shape_.data_dim; }
    const Mlp& base() const { return base_; }
    const MlpDenoiserShape& base_shape() const { return base_shape_; }
    int schedule_length() const { return T_; }
    const SharedDotOptions& options() const { return options_; }
    const InputMask& mask() const { return options_.mask; }
    const DenseLayer& in_proj() const { return in_proj_; }
    const DenseLayer& out_proj() const { return out_proj_; }
    const std::vector<LoraAdapter>& adapters() const { return adapters_; }

    Index conditioning_width() const;
    Index trainable_parameter_count() const;
    Index base_parameter_count() const { return base_.parameter_count(); }

    Vector pack_trainable() const;
    void unpack_trainable(const Vector& flat);

    Matrix build_input(const Matrix& x_anchor, const Matrix& x_cur, const Matrix& z_anchor,
                       std::span<const int> t_anchor, std::span<const int> t_cur) const;

    /// Pre-activation of base layer `layer` with its adapter applied.
    Matrix adapted_layer(std::size_t layer, const Matrix& h) const;

    struct Tape {
        Matrix conditioning;
        std::vector<Matrix> inputs;   // input to each base layer
        std::vector<Matrix> reduced;  // A h for each base layer
        std::vector<Matrix> pre;      // pre-activation of each base layer
        Matrix last;                  // base output fed to the output projection
    };

    Matrix forward(const Matrix& conditioning, Tape* tape = nullptr) const;
    /// Packed gradient of the trainable parameters (pack_trainable order).
    Vector backprop(const Tape& tape, const Matrix& output_grad) const;

protected:
    Matrix do_residual(const Matrix& x_anchor, const Matrix& x_cur, const Matrix& z_anchor,
                       std::span<const int> t_anchor, std::span<const int> t_cur) const override;

private:
    MlpDenoiserShape base_shape_;
    int T_;
    Mlp base_;
    SharedDotOptions options_;
    DenseLayer in_proj_;
    std::vector<LoraAdapter> adapters_;
    DenseLayer out_proj_;
};

}  // namespace morse
