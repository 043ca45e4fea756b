#include "morse/train_dash.hpp"

#include <cmath>
#include <string>

namespace morse {

double mse_loss(const Matrix& prediction, const Matrix& target, Matrix* grad) {
    if (prediction.rows() != target.rows() || prediction.cols() != target.cols()) throw ShapeError("mse_loss: shape");
    const Matrix diff = prediction - target;
    const double n = static_cast<double>(diff.size());
    if (grad) *grad = (2.0 / n) * diff;
    return diff.squaredNorm() / n;
}

TrainReport train_dash(const Dataset& data, const NoiseSchedule<double>& sched, MlpDenoiser& net,
                       const TrainConfig& config) {
    if (config.iterations < 1 || config.batch < 1) throw ConfigError("train_dash: iterations and batch must be >= 1");
    if (data.dim() != net.dim()) throw ShapeError("train_dash: dataset dim does not match the network");
    if (net.schedule_length() != sched.T()) throw ConfigError("train_dash: network and schedule disagree on T");

    NoiseStream data_rng(derive_seed(config.seed, SeedPurpose::Dataset));
    NoiseStream train_rng(derive_seed(config.seed, SeedPurpose::Training));
    Vector params = net.net().pack();
    AdamState adam(params.size(), config.adam);

    TrainReport report;
    report.loss.reserve(static_cast<std::size_t>(config.iterations));
    std::vector<int> ts(static_cast<std::size_t>(config.batch));
    for (int it = 0; it < config.iterations; ++it) {
        const Matrix x0 = data.sample(config.batch, data_rng);
        const Matrix eps = train_rng.normal(data.dim(), config.batch);
        Matrix x_t(data.dim(), config.batch);
        for (Index j = 0; j < config.batch; ++j) {
            const int t = train_rng.uniform_int(1, sched.T());
            ts[static_cast<std::size_t>(j)] = t;
            x_t.col(j) = sched.alpha(t) * x0.col(j) + sched.sigma(t) * eps.col(j);
        }
        auto [pred, tape] = mlp_forward(net.net(), net.build_input(x_t, ts));
        Matrix grad;
        const double loss = mse_loss(pred, eps, &grad);
        if (!std::isfinite(loss)) {
            throw DivergenceError("train_dash: non-finite loss at iteration " + std::to_string(it));
        }
        report.loss.push_back(loss);
        const MlpGradients g = mlp_backprop(net.net(), tape, grad);
        adam.update(params, g.pack());
        net.net().unpack(params);
    }
    return report;
}

}  // namespace morse
