#include "morse/morse.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace morse {

Matrix DotEstimator::residual(const Matrix& x_anchor, const Matrix& x_cur, const Matrix& z_anchor, int t_anchor,
                              int t_cur) const {
    const std::vector<int> ta(static_cast<std::size_t>(x_cur.cols()), t_anchor);
    const std::vector<int> tc(static_cast<std::size_t>(x_cur.cols()), t_cur);
    return residual(x_anchor, x_cur, z_anchor, std::span<const int>(ta), std::span<const int>(tc));
}

Matrix DotEstimator::residual(const Matrix& x_anchor, const Matrix& x_cur, const Matrix& z_anchor,
                              std::span<const int> t_anchor, std::span<const int> t_cur) const {
    if (x_cur.rows() != dim() || x_anchor.rows() != dim() || z_anchor.rows() != dim()) {
        throw ShapeError("dot residual: inputs must have the data dimension");
    }
    if (x_anchor.cols() != x_cur.cols() || z_anchor.cols() != x_cur.cols() ||
        static_cast<Index>(t_anchor.size()) != x_cur.cols() || static_cast<Index>(t_cur.size()) != x_cur.cols()) {
        throw ShapeError("dot residual: batch sizes disagree");
    }
    Matrix out = do_residual(x_anchor, x_cur, z_anchor, t_anchor, t_cur);
    if (out.rows() != x_cur.rows() || out.cols() != x_cur.cols()) throw ShapeError("dot residual: mis-shaped result");
    return out;
}

MorseSchedule::MorseSchedule(TimeGrid grid, std::vector<Executor> executors, double speed_ratio)
    : grid_(std::move(grid)), executors_(std::move(executors)), speed_ratio_(speed_ratio) {
    if (static_cast<int>(executors_.size()) != grid_.transitions()) {
        throw ScheduleError("morse schedule: one executor per grid transition required");
    }
    if (executors_.front() != Executor::Dash) throw ScheduleError("morse schedule: the first step must be Dash");
    if (!(speed_ratio_ > 1.0) || !std::isfinite(speed_ratio_)) throw ConfigError("morse schedule: speed ratio N must be > 1");
}

int MorseSchedule::dash_steps() const {
    return static_cast<int>(std::count(executors_.begin(), executors_.end(), Executor::Dash));
}

MorseSchedule build_morse_schedule(const TimeGrid& grid, int dash_count, double speed_ratio) {
    const int n = grid.transitions();
    if (dash_count < 1 || dash_count > n) {
        throw RangeError("dash count " + std::to_string(dash_count) + " outside [1, " + std::to_string(n) + "]");
    }
    std::vector<Executor> executors(static_cast<std::size_t>(n), Executor::Dot);
    for (int j = 0; j < dash_count; ++j) {
        // round(j n / d), half up.
        const long long idx = (2LL * j * n + dash_count) / (2LL * dash_count);
        executors[static_cast<std::size_t>(idx)] = Executor::Dash;
    }
    return MorseSchedule(grid, std::move(executors), speed_ratio);
}

double lsd_cost(std::span<const Executor> executors, double speed_ratio) {
    if (!(speed_ratio > 1.0)) throw ConfigError("lsd_cost: speed ratio N must be > 1");
    const auto dash = std::count(executors.begin(), executors.end(), Executor::Dash);
    const auto dot = static_cast<std::ptrdiff_t>(executors.size()) - dash;
    return static_cast<double>(dash) + static_cast<double>(dot) / speed_ratio;
}

double lsd_cost(const MorseSchedule& schedule) {
    return lsd_cost(std::span<const Executor>(schedule.executors()), schedule.speed_ratio());
}

double upper_bound_speedup(int n, int k, double speed_ratio) {
    if (n < 1) throw RangeError("upper_bound_speedup: n must be >= 1");
    if (k < 0 || k >= n) throw RangeError("upper_bound_speedup: k must lie in [0, n)");
    if (!(speed_ratio > 1.0)) throw ConfigError("upper_bound_speedup: N must be > 1");
    return (static_cast<double>(n - k) + speed_ratio * k) / static_cast<double>(n);
}

ExchangePlan plan_exchange(int latency, int exchanged, double speed_ratio) {
    if (latency < 1) throw RangeError("plan_exchange: latency must be >= 1 LSD");
    if (exchanged < 0 || exchanged >= latency) throw RangeError("plan_exchange: k must lie in [0, n)");
    if (!(speed_ratio > 1.0)) throw ConfigError("plan_exchange: N must be > 1");
    const double dots = speed_ratio * exchanged;
    ExchangePlan plan{latency, exchanged, latency - exchanged, static_cast<int>(std::lround(dots))};
    return plan;
}

ExchangePlan plan_exchange_ratio(int latency, double ratio, double speed_ratio) {
    if (!(ratio >= 0.0 && ratio < 1.0)) throw RangeError("plan_exchange_ratio: ratio must lie in [0, 1)");
    const int k = std::clamp(static_cast<int>(std::lround(ratio * latency)), 0, latency - 1);
    return plan_exchange(latency, k, speed_ratio);
}

std::vector<int> recommended_exchanges(int latency, double speed_ratio, double lo, double hi) {
    std::vector<int> ks;
    for (int k = 0; k < latency; ++k) {
        const double s = upper_bound_speedup(latency, k, speed_ratio);
        if (s >= lo && s <= hi) ks.push_back(k);
    }
    return ks;
}

Matrix OracleDot::do_residual(const Matrix&, const Matrix& x_cur, const Matrix& z_anchor, std::span<const int>,
                              std::span<const int> t_cur) const {
    return dash_.estimate(x_cur, t_cur) - z_anchor;
}

Matrix morse_estimate(MorseAnchor& anchor, const Matrix& x_cur, int t_cur, Executor executor,
                      const DashEstimator& dash, const DotEstimator& dot, ChainSource chain) {
    Matrix z;
    if (executor == Executor::Dash) {
        z = dash.estimate(x_cur, t_cur);
    } else {
        if (!anchor.valid) throw ScheduleError("morse: Dot step before any Dash step");
        z = anchor.z + dot.residual(anchor.x, x_cur, anchor.z, anchor.t, t_cur);
    }
    if (executor == Executor::Dash || chain == ChainSource::FromPrevious) {
        anchor.x = x_cur;
        anchor.z = z;
        anchor.t = t_cur;
        anchor.valid = true;
    }
    return z;
}

MorseResult morse_sample(const DashEstimator& dash, const DotEstimator& dot, const MorseSchedule& schedule,
                         SamplerKind kind, ChainSource chain, const NoiseSchedule<double>& sched,
                         std::span<NoiseStream> streams, bool record) {
    if (dash.dim() != dot.dim()) throw ShapeError("morse_sample: Dash and Dot disagree on the data dimension");
    const TimeGrid& grid = schedule.grid();
    if (grid.front() > sched.T()) throw RangeError("morse_sample: time grid starts beyond the schedule length");
    MorseResult result;
    Matrix x = draw_initial(dash.dim(), streams);
    MorseAnchor anchor;
    for (int i = 0; i < grid.transitions(); ++i) {
        const int t = grid.t_in(i);
        const int t_prev = grid.t_out(i);
        const Executor executor = schedule.executors()[static_cast<std::size_t>(i)];
        Matrix z = morse_estimate(anchor, x, t, executor, dash, dot, chain);
        Matrix next = apply_step(kind, x, z, t, t_prev, sched, streams);
        if (record) result.trajectory.push_back({t, t_prev, std::move(x), next, std::move(z), executor});
        x = std::move(next);
    }
    result.samples = std::move(x);
    result.cost = lsd_cost(schedule);
    return result;
}

MorseResult morse_sample(const DashEstimator& dash, const DotEstimator& dot, const MorseSchedule& schedule,
                         SamplerKind kind, ChainSource chain, const NoiseSchedule<double>& sched,
                         NoiseStream& stream) {
    return morse_sample(dash, dot, schedule, kind, chain, sched, std::span<NoiseStream>(&stream, 1), true);
}

}  // namespace morse
