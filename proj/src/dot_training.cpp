#include "morse/dot_training.hpp"

#include <cmath>
#include <string>

namespace morse {

StepPair sample_step_pair(NoiseStream& rng, int T, std::optional<int> max_gap) {
    if (T < 2) throw ConfigError("sample_step_pair: T must be >= 2");
    if (max_gap && *max_gap < 1) throw ConfigError("sample_step_pair: max_gap must be >= 1");
    const int gap_cap = max_gap ? std::min(*max_gap, T) : T;
    // Uniform on {(t_o, gap) : t_o + gap <= T}, which is uniform over the ordered pairs.
    for (;;) {
        const int t_o = rng.uniform_int(0, T - 1);
        const int gap = rng.uniform_int(1, gap_cap);
        if (t_o + gap <= T) return {t_o + gap, t_o};
    }
}

DotBatch make_training_batch(const Matrix& x0, const Matrix& eps, std::span<const StepPair> pairs,
                             const DashEstimator& dash, const NoiseSchedule<double>& sched,
                             const ExampleOptions& options, NoiseStream* rng) {
    const Index n = x0.cols();
    if (eps.rows() != x0.rows() || eps.cols() != n || static_cast<Index>(pairs.size()) != n) {
        throw ShapeError("make_training_batch: x0, eps and pairs must agree");
    }
    if (options.kind == SamplerKind::DDPMAncestral && rng == nullptr) {
        throw ContractError("make_training_batch: ancestral examples need a noise stream");
    }
    DotBatch b;
    b.t_anchor.resize(static_cast<std::size_t>(n));
    b.t_cur.resize(static_cast<std::size_t>(n));
    b.x_anchor.resize(x0.rows(), n);
    for (Index j = 0; j < n; ++j) {
        const StepPair p = pairs[static_cast<std::size_t>(j)];
        if (!(p.t_s > p.t_o && p.t_o >= 0 && p.t_s <= sched.T())) throw RangeError("make_training_batch: bad step pair");
        b.t_anchor[static_cast<std::size_t>(j)] = p.t_s;
        b.t_cur[static_cast<std::size_t>(j)] = p.t_o;
        b.x_anchor.col(j) = sched.alpha(p.t_s) * x0.col(j) + sched.sigma(p.t_s) * eps.col(j);
    }
    b.z_anchor = dash.estimate(b.x_anchor, std::span<const int>(b.t_anchor));

    const int sub_steps = std::max(options.rollout_steps, 1);
    Matrix x = b.x_anchor;
    Matrix z = b.z_anchor;
    std::vector<int> t_now = b.t_anchor;
    for (int k = 1; k <= sub_steps; ++k) {
        std::vector<int> t_next(static_cast<std::size_t>(n));
        for (Index j = 0; j < n; ++j) {
            const auto u = static_cast<std::size_t>(j);
            // Intermediate points round(t_s - k (t_s - t_o) / m), strictly decreasing when possible.
            const long long span = b.t_anchor[u] - b.t_cur[u];
            const long long drop = (2LL * k * span + sub_steps) / (2LL * sub_steps);
            t_next[u] = static_cast<int>(b.t_anchor[u] - drop);
        }
        if (k > 1) z = dash.estimate(x, std::span<const int>(t_now));
        Matrix next(x.rows(), n);
        for (Index j = 0; j < n; ++j) {
            const auto u = static_cast<std::size_t>(j);
            if (t_next[u] == t_now[u]) {
                next.col(j) = x.col(j);
                continue;
            }
            const auto c = step_coeffs(sched, t_now[u], t_next[u]);
            if (options.kind == SamplerKind::DDIM) {
                next.col(j) = ddim_step(x.col(j), z.col(j), c);
            } else {
                next.col(j) = ddpm_step(x.col(j), z.col(j), c, rng->normal(x.rows()));
            }
        }
        x = std::move(next);
        t_now = std::move(t_next);
    }
    b.x_cur = std::move(x);
    b.target = dash.estimate(b.x_cur, std::span<const int>(b.t_cur)) - b.z_anchor;
    return b;
}

double dot_loss_from_residual(const Matrix& residual, const Matrix& target, Matrix* grad) {
    if (target.cols() == 0) throw ContractError("dot_loss: empty batch");
    if (residual.rows() != target.rows() || residual.cols() != target.cols()) throw ShapeError("dot_loss: shape");
    const Matrix diff = residual - target;
    const double n = static_cast<double>(target.cols());
    if (grad) *grad = (2.0 / n) * diff;
    return diff.squaredNorm() / n;
}

double dot_loss(const DotEstimator& dot, const DotBatch& batch, Matrix* grad) {
    if (batch.size() == 0) throw ContractError("dot_loss: empty batch");
    const Matrix r = dot.residual(batch.x_anchor, batch.x_cur, batch.z_anchor, std::span<const int>(batch.t_anchor),
                                  std::span<const int>(batch.t_cur));
    return dot_loss_from_residual(r, batch.target, grad);
}

namespace {

DotBatch draw_batch(const Dataset& data, const DashEstimator& dash, const NoiseSchedule<double>& sched,
                    const DotTrainConfig& config, Index size, NoiseStream& data_rng, NoiseStream& rng) {
    const Matrix x0 = data.sample(size, data_rng);
    const Matrix eps = rng.normal(data.dim(), size);
    std::vector<StepPair> pairs(static_cast<std::size_t>(size));
    for (auto& p : pairs) {
        // The Dot is never queried at t = 0, and a noise estimate at sigma_0 = 0 is undefined.
        do {
            p = sample_step_pair(rng, sched.T(), config.max_gap);
        } while (p.t_o == 0);
    }
    return make_training_batch(x0, eps, pairs, dash, sched, config.examples, &rng);
}

}  // namespace

DotBatch make_validation_batch(const Dataset& data, const DashEstimator& dash, const NoiseSchedule<double>& sched,
                               const DotTrainConfig& config) {
    NoiseStream data_rng(derive_seed(config.seed, SeedPurpose::Validation, 0));
    NoiseStream rng(derive_seed(config.seed, SeedPurpose::Validation, 1));
    return draw_batch(data, dash, sched, config, config.validation_size, data_rng, rng);
}

DotValidation validate_dot(const DotEstimator& dot, const DotBatch& held_out) {
    DotValidation v;
    v.examples = held_out.size();
    v.trained_mse = dot_loss(dot, held_out);
    v.zero_mse = dot_loss_from_residual(Matrix::Zero(held_out.target.rows(), held_out.target.cols()), held_out.target);
    return v;
}

DotTrainReport train_dot(const DashEstimator& dash, SharedDot& dot, const Dataset& data,
                         const NoiseSchedule<double>& sched, const DotTrainConfig& config) {
    if (config.iterations < 1 || config.batch < 1 || config.validation_size < 1) {
        throw ConfigError("train_dot: iterations, batch and validation size must be >= 1");
    }
    if (dash.dim() != dot.dim() || data.dim() != dot.dim()) throw ShapeError("train_dot: dimension mismatch");
    if (dot.schedule_length() != sched.T()) throw ConfigError("train_dot: Dot and schedule disagree on T");

    NoiseStream data_rng(derive_seed(config.seed, SeedPurpose::Dataset, 1));
    NoiseStream rng(derive_seed(config.seed, SeedPurpose::Training, 1));
    Vector params = dot.pack_trainable();
    AdamState adam(params.size(), config.adam);

    DotTrainReport report;
    report.loss.reserve(static_cast<std::size_t>(config.iterations));
    for (int it = 0; it < config.iterations; ++it) {
        const DotBatch batch = draw_batch(data, dash, sched, config, config.batch, data_rng, rng);
        SharedDot::Tape tape;
        const Matrix r = dot.forward(
            dot.build_input(batch.x_anchor, batch.x_cur, batch.z_anchor, std::span<const int>(batch.t_anchor),
                            std::span<const int>(batch.t_cur)),
            &tape);
        Matrix grad;
        const double loss = dot_loss_from_residual(r, batch.target, &grad);
        if (!std::isfinite(loss)) throw DivergenceError("train_dot: non-finite loss at iteration " + std::to_string(it));
        report.loss.push_back(loss);
        adam.update(params, dot.backprop(tape, grad));
        dot.unpack_trainable(params);
    }
    report.validation = validate_dot(dot, make_validation_batch(data, dash, sched, config));
    return report;
}

}  // namespace morse
