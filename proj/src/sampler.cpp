#include "morse/sampler.hpp"

#include <string>

#include "morse/estimator.hpp"

namespace morse {

TimeGrid::TimeGrid(std::vector<int> points) : points_(std::move(points)) {
    if (points_.size() < 2) throw RangeError("time grid needs at least two points");
    if (points_.back() != 0) throw RangeError("time grid must end at t = 0");
    for (std::size_t i = 1; i < points_.size(); ++i) {
        if (points_[i] >= points_[i - 1]) throw RangeError("time grid must be strictly decreasing");
    }
}

TimeGrid select_time_grid(int T, int n, GridStrategy strategy) {
    if (strategy != GridStrategy::Uniform) throw ConfigError("unsupported grid strategy");
    if (n < 1 || n > T) {
        throw RangeError("grid size n=" + std::to_string(n) + " outside [1, T=" + std::to_string(T) + "]");
    }
    std::vector<int> points;
    points.reserve(static_cast<std::size_t>(n) + 1);
    for (int i = n; i >= 0; --i) {
        // round(i T / n), half up, in exact integer arithmetic.
        const long long num = 2LL * i * T + n;
        points.push_back(static_cast<int>(num / (2LL * n)));
    }
    points.erase(std::unique(points.begin(), points.end()), points.end());
    return TimeGrid(std::move(points));
}

Matrix draw_initial(Index dim, std::span<NoiseStream> streams) {
    Matrix x(dim, static_cast<Index>(streams.size()));
    for (std::size_t j = 0; j < streams.size(); ++j) x.col(static_cast<Index>(j)) = streams[j].normal(dim);
    return x;
}

Matrix draw_step_noise(Index dim, std::span<NoiseStream> streams) { return draw_initial(dim, streams); }

Matrix apply_step(SamplerKind kind, const Matrix& x, const Matrix& z, int t, int t_prev,
                  const NoiseSchedule<double>& sched, std::span<NoiseStream> streams) {
    if (kind == SamplerKind::DDIM) return ddim_step(x, z, t, t_prev, sched);
    // Each ancestral step consumes exactly one draw per chain, even when its variance is zero.
    const Matrix noise = draw_step_noise(x.rows(), streams);
    return ddpm_step(x, z, t, t_prev, sched, noise);
}

SampleResult run_sampler(const DashEstimator& dash, const TimeGrid& grid, SamplerKind kind,
                         const NoiseSchedule<double>& sched, std::span<NoiseStream> streams, bool record) {
    if (grid.front() > sched.T()) throw RangeError("time grid starts beyond the schedule length");
    SampleResult result;
    Matrix x = draw_initial(dash.dim(), streams);
    for (int i = 0; i < grid.transitions(); ++i) {
        const int t = grid.t_in(i);
        const int t_prev = grid.t_out(i);
        Matrix z = dash.estimate(x, t);
        Matrix next = apply_step(kind, x, z, t, t_prev, sched, streams);
        if (record) {
            result.trajectory.push_back({t, t_prev, std::move(x), next, std::move(z), Executor::Dash});
        }
        x = std::move(next);
    }
    result.samples = std::move(x);
    return result;
}

SampleResult run_sampler(const DashEstimator& dash, const TimeGrid& grid, SamplerKind kind,
                         const NoiseSchedule<double>& sched, NoiseStream& stream) {
    return run_sampler(dash, grid, kind, sched, std::span<NoiseStream>(&stream, 1), true);
}

}  // namespace morse
