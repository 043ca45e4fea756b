#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "morse/adam.hpp"
#include "morse/datasets.hpp"
#include "morse/morse.hpp"
#include "morse/shared_dot.hpp"

namespace morse {

struct StepPair {
    int t_s = 1;
    int t_o = 0;
};

/// Uniform over integer pairs T >= t_s > t_o >= 0, optionally with t_s - t_o <= max_gap.
StepPair sample_step_pair(NoiseStream& rng, int T, std::optional<int> max_gap = std::nullopt);

/// A batch of residual-regression examples, one per column.
struct DotBatch {
    Matrix x_anchor;  // x_{t_s}
    Matrix x_cur;     // x_{t_o}
    Matrix z_anchor;  // Dash estimate at (x_{t_s}, t_s)
    Matrix target;    // Dash estimate at (x_{t_o}, t_o) minus z_anchor
    std::vector<int> t_anchor;
    std::vector<int> t_cur;

    Index size() const { return x_cur.cols(); }
};

struct ExampleOptions {
    SamplerKind kind = SamplerKind::DDIM;
    // 0 or 1: x_{t_o} is one jump from x_{t_s} with z_{t_s}. m > 1: m uniform sub-steps, each after the
    // first re-evaluating Dash, which mimics the dense trajectory Morse approximates at inference.
    int rollout_steps = 0;
};

/// x_{t_s} = alpha x0 + sigma eps; z_{t_s} = dash(x_{t_s}); x_{t_o} = phi(x_{t_s}, z_{t_s}, t_s, t_o);
/// target = dash(x_{t_o}, t_o) - z_{t_s}. `rng` feeds the ancestral sampler when selected.
DotBatch make_training_batch(const Matrix& x0, const Matrix& eps, std::span<const StepPair> pairs,
                             const DashEstimator& dash, const NoiseSchedule<double>& sched,
                             const ExampleOptions& options = {}, NoiseStream* rng = nullptr);

/// Mean over the batch of ||target - residual||^2. Writes d(loss)/d(residual) when grad is set.
double dot_loss(const DotEstimator& dot, const DotBatch& batch, Matrix* grad = nullptr);
double dot_loss_from_residual(const Matrix& residual, const Matrix& target, Matrix* grad = nullptr);

struct DotTrainConfig {
    int iterations = 4000;
    Index batch = 256;
    AdamConfig adam{};
    std::uint64_t seed = 0;
    std::optional<int> max_gap;
    ExampleOptions examples{};
    Index validation_size = 4096;
};

struct DotValidation {
    double trained_mse = 0.0;
    double zero_mse = 0.0;
    Index examples = 0;
};

struct DotTrainReport {
    std::vector<double> loss;
    DotValidation validation;
};

/// Generates a held-out batch from a seed stream disjoint from training.
DotBatch make_validation_batch(const Dataset& data, const DashEstimator& dash, const NoiseSchedule<double>& sched,
                               const DotTrainConfig& config);

DotValidation validate_dot(const DotEstimator& dot, const DotBatch& held_out);

/// Trains only the projections and adapters of `dot`; the Dash model is read-only.
DotTrainReport train_dot(const DashEstimator& dash, SharedDot& dot, const Dataset& data,
                         const NoiseSchedule<double>& sched, const DotTrainConfig& config);

}  // namespace morse
