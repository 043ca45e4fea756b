#pragma once

#include <cstdint>
#include <vector>

#include "morse/adam.hpp"
#include "morse/datasets.hpp"
#include "morse/diffusion.hpp"
#include "morse/mlp.hpp"

namespace morse {

struct TrainConfig {
    int iterations = 2000;
    Index batch = 256;
    AdamConfig adam{};
    std::uint64_t seed = 0;
};

struct TrainReport {
    std::vector<double> loss;  // one entry per iteration
};

/// Noise-prediction training: x_t = alpha_t x0 + sigma_t eps with t ~ U{1..T}, loss = mean of (eps_hat - eps)^2
/// over every entry of the batch. Throws DivergenceError on a non-finite loss.
TrainReport train_dash(const Dataset& data, const NoiseSchedule<double>& sched, MlpDenoiser& net,
                       const TrainConfig& config);

/// Mean squared error over all entries, and its gradient with respect to prediction.
double mse_loss(const Matrix& prediction, const Matrix& target, Matrix* grad = nullptr);

}  // namespace morse
