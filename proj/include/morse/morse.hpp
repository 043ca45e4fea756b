#pragma once

#include <optional>
#include <span>
#include <vector>

#include "morse/estimator.hpp"
#include "morse/sampler.hpp"
#include "morse/types.hpp"

namespace morse {

/// Residual estimator: given the anchor observation (x_anchor, z_anchor, t_anchor) and the current
/// sample (x_cur, t_cur), predicts the correction added to z_anchor.
class DotEstimator {
public:
    virtual ~DotEstimator() = default;

    virtual Index dim() const = 0;

    Matrix residual(const Matrix& x_anchor, const Matrix& x_cur, const Matrix& z_anchor, int t_anchor,
                    int t_cur) const;
    Matrix residual(const Matrix& x_anchor, const Matrix& x_cur, const Matrix& z_anchor,
                    std::span<const int> t_anchor, std::span<const int> t_cur) const;

protected:
    virtual Matrix do_residual(const Matrix& x_anchor, const Matrix& x_cur, const Matrix& z_anchor,
                               std::span<const int> t_anchor, std::span<const int> t_cur) const = 0;
};

/// Which trajectory observations reach the Dot network besides x_cur and t_cur.
struct InputMask {
    bool use_x_anchor = true;
    bool use_z_anchor = true;
    bool use_t_anchor = true;

    static InputMask full() { return {}; }
    static InputMask none() { return {false, false, false}; }
    bool operator==(const InputMask&) const = default;
};

enum class ChainSource { FromDash, FromPrevious };

/// Executor assignment over the transitions of a time grid, plus the Dash/Dot speed ratio N.
class MorseSchedule {
public:
    MorseSchedule(TimeGrid grid, std::vector<Executor> executors, double speed_ratio);

    const TimeGrid& grid() const { return grid_; }
    const std::vector<Executor>& executors() const { return executors_; }
    double speed_ratio() const { return speed_ratio_; }
    int steps() const { return static_cast<int>(executors_.size()); }
    int dash_steps() const;
    int dot_steps() const { return steps() - dash_steps(); }

private:
    TimeGrid grid_;
    std::vector<Executor> executors_;
    double speed_ratio_;
};

/// Dash at transition indices round(j n / d), j = 0..d-1; Dot elsewhere.
MorseSchedule build_morse_schedule(const TimeGrid& grid, int dash_count, double speed_ratio = 4.0);

/// Latency in baseline steps: 1 per Dash step, 1/N per Dot step.
double lsd_cost(std::span<const Executor> executors, double speed_ratio);
double lsd_cost(const MorseSchedule& schedule);

/// (n - k + N k) / n, the speedup when Dot matches Dash exactly.
double upper_bound_speedup(int n, int k, double speed_ratio);

/// Step budget at a latency of n LSD after exchanging k Dash steps for N k Dot steps.
struct ExchangePlan {
    int latency = 0;
    int exchanged = 0;
    int dash_steps = 0;
    int dot_steps = 0;
};

ExchangePlan plan_exchange(int latency, int exchanged, double speed_ratio);
/// k = round(ratio n), clamped to [0, n - 1].
ExchangePlan plan_exchange_ratio(int latency, double ratio, double speed_ratio);
/// Every k whose ideal speedup lies within [lo, hi]; the default band is the recommended 2x-3x.
std::vector<int> recommended_exchanges(int latency, double speed_ratio, double lo = 2.0, double hi = 3.0);

/// Test oracle: residual = dash(x_cur, t_cur) - z_anchor, so Morse reproduces dense Dash sampling.
class OracleDot final : public DotEstimator {
public:
    explicit OracleDot(const DashEstimator& dash) : dash_(dash) {}
    Index dim() const override { return dash_.dim(); }

protected:
    Matrix do_residual(const Matrix& x_anchor, const Matrix& x_cur, const Matrix& z_anchor,
                       std::span<const int> t_anchor, std::span<const int> t_cur) const override;

private:
    const DashEstimator& dash_;
};

/// Dot whose residual is identically zero: Morse then reuses the anchor estimate, i.e. plain jump sampling.
class ZeroDot final : public DotEstimator {
public:
    explicit ZeroDot(Index dim) : dim_(dim) {}
    Index dim() const override { return dim_; }

protected:
    Matrix do_residual(const Matrix&, const Matrix& x_cur, const Matrix&, std::span<const int>,
                       std::span<const int>) const override {
        return Matrix::Zero(x_cur.rows(), x_cur.cols());
    }

private:
    Index dim_;
};

/// Anchor observation carried between Morse steps.
struct MorseAnchor {
    Matrix x;
    Matrix z;
    int t = 0;
    bool valid = false;
};

/// Noise estimate for one step: Dash evaluates directly, Dot corrects the anchor estimate.
/// Updates the anchor according to the chain source.
Matrix morse_estimate(MorseAnchor& anchor, const Matrix& x_cur, int t_cur, Executor executor,
                      const DashEstimator& dash, const DotEstimator& dot, ChainSource chain);

struct MorseResult {
    Matrix samples;
    TrajectoryRecord trajectory;
    double cost = 0.0;
};

MorseResult morse_sample(const DashEstimator& dash, const DotEstimator& dot, const MorseSchedule& schedule,
                         SamplerKind kind, ChainSource chain, const NoiseSchedule<double>& sched,
                         std::span<NoiseStream> streams, bool record = true);

MorseResult morse_sample(const DashEstimator& dash, const DotEstimator& dot, const MorseSchedule& schedule,
                         SamplerKind kind, ChainSource chain, const NoiseSchedule<double>& sched,
                         NoiseStream& stream);

}  // namespace morse
