#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "morse/diffusion.hpp"
#include "morse/random.hpp"
#include "morse/types.hpp"

namespace morse {

class DashEstimator;

/// Strictly decreasing visit sequence t_n > ... > t_0 with t_n = T and t_0 = 0.
class TimeGrid {
public:
    explicit TimeGrid(std::vector<int> points);

    const std::vector<int>& points() const { return points_; }
    int transitions() const { return static_cast<int>(points_.size()) - 1; }
    int front() const { return points_.front(); }
    // Step i runs from points[i] to points[i + 1].
    int t_in(int step) const { return points_[step]; }
    int t_out(int step) const { return points_[step + 1]; }

    bool operator==(const TimeGrid&) const = default;

private:
    std::vector<int> points_;
};

enum class GridStrategy { Uniform };

/// Uniform jump-sampling grid, t_i = round(i T / n) for i = n..0.
TimeGrid select_time_grid(int T, int n, GridStrategy strategy = GridStrategy::Uniform);

enum class SamplerKind { DDIM, DDPMAncestral };

/// Signal/noise coefficients at the two ends of one sampler step.
template <typename Scalar>
struct StepCoeffs {
    Scalar alpha;
    Scalar sigma;
    Scalar alpha_prev;
    Scalar sigma_prev;
};

template <typename Scalar>
StepCoeffs<Scalar> step_coeffs(const NoiseSchedule<Scalar>& sched, int t, int t_prev) {
    if (t_prev > t) {
        throw OrderingError("sampler step from t=" + std::to_string(t) + " to later t_prev=" + std::to_string(t_prev));
    }
    return {sched.alpha(t), sched.sigma(t), sched.alpha(t_prev), sched.sigma(t_prev)};
}

/// Deterministic DDIM map: x0_hat = (x - sigma z) / alpha, returns alpha' x0_hat + sigma' z.
template <typename DX, typename DZ, typename Scalar>
typename DX::PlainObject ddim_step(const Eigen::MatrixBase<DX>& x_t, const Eigen::MatrixBase<DZ>& z,
                                   const StepCoeffs<Scalar>& c) {
    detail::require_same_shape(x_t, z, "ddim_step");
    if (c.alpha == Scalar(0)) throw SingularityError("ddim_step: alpha_t = 0");
    const typename DX::PlainObject x0_hat = (x_t - c.sigma * z) / c.alpha;
    return c.alpha_prev * x0_hat + c.sigma_prev * z;
}

template <typename DX, typename DZ, typename Scalar>
typename DX::PlainObject ddim_step(const Eigen::MatrixBase<DX>& x_t, const Eigen::MatrixBase<DZ>& z, int t, int t_prev,
                                   const NoiseSchedule<Scalar>& sched) {
    const auto c = step_coeffs(sched, t, t_prev);
    if (t == t_prev) {
        detail::require_same_shape(x_t, z, "ddim_step");
        return x_t;
    }
    return ddim_step(x_t, z, c);
}

/// Posterior noise scale of the ancestral (eta = 1) jump step.
template <typename Scalar>
Scalar ancestral_variance(const StepCoeffs<Scalar>& c) {
    if (c.sigma == Scalar(0)) return Scalar(0);
    const Scalar ratio = c.alpha / c.alpha_prev;
    const Scalar v = (c.sigma_prev * c.sigma_prev) / (c.sigma * c.sigma) * (Scalar(1) - ratio * ratio);
    return std::max(v, Scalar(0));
}

/// Ancestral step: mean = alpha' x0_hat + sqrt(max(sigma'^2 - var, 0)) z, returns mean + sqrt(var) noise.
template <typename DX, typename DZ, typename DN, typename Scalar>
typename DX::PlainObject ddpm_step(const Eigen::MatrixBase<DX>& x_t, const Eigen::MatrixBase<DZ>& z,
                                   const StepCoeffs<Scalar>& c, const Eigen::MatrixBase<DN>& noise,
                                   Scalar variance) {
    detail::require_same_shape(x_t, z, "ddpm_step");
    detail::require_same_shape(x_t, noise, "ddpm_step noise");
    if (c.alpha == Scalar(0)) throw SingularityError("ddpm_step: alpha_t = 0");
    const typename DX::PlainObject x0_hat = (x_t - c.sigma * z) / c.alpha;
    using std::sqrt;
    const Scalar dir = sqrt(std::max(c.sigma_prev * c.sigma_prev - variance, Scalar(0)));
    return c.alpha_prev * x0_hat + dir * z + sqrt(variance) * noise;
}

template <typename DX, typename DZ, typename DN, typename Scalar>
typename DX::PlainObject ddpm_step(const Eigen::MatrixBase<DX>& x_t, const Eigen::MatrixBase<DZ>& z,
                                   const StepCoeffs<Scalar>& c, const Eigen::MatrixBase<DN>& noise) {
    return ddpm_step(x_t, z, c, noise, ancestral_variance(c));
}

template <typename DX, typename DZ, typename DN, typename Scalar>
typename DX::PlainObject ddpm_step(const Eigen::MatrixBase<DX>& x_t, const Eigen::MatrixBase<DZ>& z, int t, int t_prev,
                                   const NoiseSchedule<Scalar>& sched, const Eigen::MatrixBase<DN>& noise) {
    const auto c = step_coeffs(sched, t, t_prev);
    if (t == t_prev) {
        detail::require_same_shape(x_t, z, "ddpm_step");
        detail::require_same_shape(x_t, noise, "ddpm_step noise");
        return x_t;
    }
    return ddpm_step(x_t, z, c, noise);
}

/// One executed step of a sampling run. Matrices hold one column per chain.
struct TrajectoryStep {
    int t_in = 0;
    int t_out = 0;
    Matrix x_in;
    Matrix x_out;
    Matrix z;
    Executor executor = Executor::Dash;
};

using TrajectoryRecord = std::vector<TrajectoryStep>;

/// Draws x_T for each chain from its own stream, one standard-normal vector per chain.
Matrix draw_initial(Index dim, std::span<NoiseStream> streams);

/// Draws the per-step ancestral noise for each chain from its own stream.
Matrix draw_step_noise(Index dim, std::span<NoiseStream> streams);

/// Applies the sampler's update to a batch, drawing ancestral noise from the chain streams when needed.
Matrix apply_step(SamplerKind kind, const Matrix& x, const Matrix& z, int t, int t_prev,
                  const NoiseSchedule<double>& sched, std::span<NoiseStream> streams);

struct SampleResult {
    Matrix samples;
    TrajectoryRecord trajectory;
};

/// Dense jump sampling with the Dash model only. One chain per stream; column j of the result
/// is chain j. The trajectory is kept when record is set.
SampleResult run_sampler(const DashEstimator& dash, const TimeGrid& grid, SamplerKind kind,
                         const NoiseSchedule<double>& sched, std::span<NoiseStream> streams, bool record = true);

/// Single-chain convenience form.
SampleResult run_sampler(const DashEstimator& dash, const TimeGrid& grid, SamplerKind kind,
                         const NoiseSchedule<double>& sched, NoiseStream& stream);

}  // namespace morse
