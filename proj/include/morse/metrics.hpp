#pragma once

#include <optional>
#include <string>
#include <vector>

#include "morse/estimator.hpp"
#include "morse/sampler.hpp"
#include "morse/types.hpp"

namespace morse {

struct GaussianMoments {
    Vector mean;
    Matrix cov;

    GaussianMoments(Vector m, Matrix c);
    Index dim() const { return mean.size(); }
};

/// Closed-form 2-Wasserstein distance between Gaussians.
double gaussian_w2(const GaussianMoments& a, const GaussianMoments& b);

/// Sample mean and unbiased covariance of the columns.
GaussianMoments fit_gaussian(const Matrix& samples);

/// Median pairwise Euclidean distance over the columns (the median heuristic bandwidth).
/// Uses at most `max_points` leading columns.
double median_pairwise_distance(const Matrix& samples, Index max_points = 2000);

/// Unbiased U-statistic estimate of squared MMD with kernel exp(-|u - v|^2 / (2 h^2)).
/// `threads` > 1 splits the sums into fixed row blocks; the result does not depend on it.
double mmd_rbf(const Matrix& x, const Matrix& y, double bandwidth, int threads = 1);

/// Squared MMD with the Y-Y term supplied by the caller (it is constant across a benchmark).
double mmd_rbf_with_yy(const Matrix& x, const Matrix& y, double bandwidth, double yy_mean, int threads = 1);
double mmd_within_mean(const Matrix& x, double bandwidth, int threads = 1);

/// Output law of DDIM with the analytic Dash on Gaussian data, starting from N(0, I):
/// each step is affine in x, so moments compose exactly.
GaussianMoments exact_ddim_gaussian_oracle(const TimeGrid& grid, const GaussianDataSpec& data,
                                           const NoiseSchedule<double>& sched);

struct CurvePoint {
    double latency = 0.0;  // LSD
    double quality = 0.0;  // lower is better
};

/// Piecewise-linear latency -> quality map.
class QualityCurve {
public:
    QualityCurve(std::vector<CurvePoint> points, std::string label = {});

    const std::vector<CurvePoint>& points() const { return points_; }
    const std::string& label() const { return label_; }
    double min_latency() const { return points_.front().latency; }
    double max_latency() const { return points_.back().latency; }

    /// Running minimum of quality along latency: the lower monotone envelope.
    QualityCurve envelope() const;

private:
    std::vector<CurvePoint> points_;
    std::string label_;
};

/// Linear interpolation; no extrapolation.
double interpolate(const QualityCurve& curve, double latency);

enum class SpeedupStatus {
    Ok,
    NotApplicable,     // candidate beats every baseline point: no room to accelerate
    NotApplicableLow,  // candidate is worse than the worst baseline point
};

struct Speedup {
    SpeedupStatus status = SpeedupStatus::Ok;
    double value = 0.0;
    double matched_latency = 0.0;  // baseline latency reaching the candidate's quality

    bool ok() const { return status == SpeedupStatus::Ok; }
};

/// n / l where n is the smallest baseline latency whose envelope quality reaches the candidate's.
Speedup speedup_at(const QualityCurve& baseline, CurvePoint candidate);

struct SpeedupDetail {
    double latency = 0.0;
    double candidate_quality = 0.0;
    Speedup speedup;
};

struct AverageSpeedup {
    double mean = 0.0;
    std::vector<SpeedupDetail> details;
    std::vector<double> excluded;  // latencies whose speedup was not applicable
};

/// Mean of speedup_at over the latencies; not-applicable points are excluded.
AverageSpeedup average_speedup(const QualityCurve& baseline, const QualityCurve& candidate,
                               const std::vector<double>& latencies);

std::string to_string(SpeedupStatus s);

}  // namespace morse
