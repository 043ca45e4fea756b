#pragma once

#include <span>
#include <vector>

#include "morse/diffusion.hpp"
#include "morse/types.hpp"

namespace morse {

/// Noise estimator eps_hat(x_t, t). Columns of x are independent samples; evaluation is
/// read-only and safe to call concurrently.
class DashEstimator {
public:
    virtual ~DashEstimator() = default;

    virtual Index dim() const = 0;

    Matrix estimate(const Matrix& x, int t) const;
    // One timestep per column.
    Matrix estimate(const Matrix& x, std::span<const int> t) const;

protected:
    virtual Matrix do_estimate(const Matrix& x, std::span<const int> t) const = 0;
};

/// Gaussian data model N(mu, cov) used by the closed-form denoiser and the exact oracles.
struct GaussianDataSpec {
    Vector mu;
    Matrix cov;

    GaussianDataSpec(Vector mean, Matrix covariance);
    Index dim() const { return mu.size(); }
};

/// Bayes-optimal noise prediction for Gaussian data:
/// x0_hat = mu + alpha cov (alpha^2 cov + sigma^2 I)^-1 (x - alpha mu), eps_hat = (x - alpha x0_hat) / sigma.
Matrix analytic_gaussian_eps(const Matrix& x_t, int t, const GaussianDataSpec& data, const NoiseSchedule<double>& sched);

/// The affine posterior-mean map x0_hat = gain x + offset at timestep t.
struct PosteriorMeanMap {
    Matrix gain;
    Vector offset;
};
PosteriorMeanMap gaussian_posterior_mean_map(int t, const GaussianDataSpec& data, const NoiseSchedule<double>& sched);

class AnalyticGaussianDash final : public DashEstimator {
public:
    AnalyticGaussianDash(GaussianDataSpec data, NoiseSchedule<double> sched);

    Index dim() const override { return data_.dim(); }
    const GaussianDataSpec& data() const { return data_; }

protected:
    Matrix do_estimate(const Matrix& x, std::span<const int> t) const override;

private:
    GaussianDataSpec data_;
    NoiseSchedule<double> sched_;
};

}  // namespace morse
