#include "morse/estimator.hpp"

#include <cmath>
#include <map>
#include <string>

namespace morse {

Matrix DashEstimator::estimate(const Matrix& x, int t) const {
    std::vector<int> ts(static_cast<std::size_t>(x.cols()), t);
    return estimate(x, std::span<const int>(ts));
}

Matrix DashEstimator::estimate(const Matrix& x, std::span<const int> t) const {
    if (x.rows() != dim()) {
        throw ShapeError("dash estimate: input dim " + std::to_string(x.rows()) + " != " + std::to_string(dim()));
    }
    if (static_cast<Index>(t.size()) != x.cols()) {
        throw ShapeError("dash estimate: one timestep per column required");
    }
    Matrix out = do_estimate(x, t);
    if (out.rows() != x.rows() || out.cols() != x.cols()) {
        throw ShapeError("dash estimate: estimator returned a mis-shaped result");
    }
    return out;
}

GaussianDataSpec::GaussianDataSpec(Vector mean, Matrix covariance) : mu(std::move(mean)), cov(std::move(covariance)) {
    if (mu.size() < 1) throw ShapeError("gaussian data: empty mean");
    if (cov.rows() != mu.size() || cov.cols() != mu.size()) throw ShapeError("gaussian data: covariance shape");
    if (!mu.allFinite() || !cov.allFinite()) throw DomainError("gaussian data: non-finite entries");
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw DomainError("gaussian data: covariance not symmetric");
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(cov, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-12) throw DomainError("gaussian data: covariance not PSD");
}

PosteriorMeanMap gaussian_posterior_mean_map(int t, const GaussianDataSpec& data, const NoiseSchedule<double>& sched) {
    const double a = sched.alpha(t);
    const double s = sched.sigma(t);
    const Index d = data.dim();
    if (s == 0.0) {
        // Clean data: the observation is the sample itself.
        return {Matrix::Identity(d, d), Vector::Zero(d)};
    }
    const Matrix system = a * a * data.cov + s * s * Matrix::Identity(d, d);
    const Eigen::LLT<Matrix> llt(system);
    if (llt.info() != Eigen::Success) throw NumericError("posterior mean: singular system");
    // gain = a cov S^-1 = (S^-1 a cov)^T since both are symmetric.
    Matrix gain = llt.solve(a * data.cov).transpose();
    Vector offset = data.mu - a * (gain * data.mu);
    return {std::move(gain), std::move(offset)};
}

Matrix analytic_gaussian_eps(const Matrix& x_t, int t, const GaussianDataSpec& data, const NoiseSchedule<double>& sched) {
    if (x_t.rows() != data.dim()) throw ShapeError("analytic_gaussian_eps: dim mismatch");
    if (sched.sigma(t) == 0.0) throw SingularityError("analytic_gaussian_eps: sigma_t = 0");
    const PosteriorMeanMap map = gaussian_posterior_mean_map(t, data, sched);
    const Matrix x0_hat = (map.gain * x_t).colwise() + map.offset;
    return x0_to_eps(x_t, x0_hat, t, sched);
}

AnalyticGaussianDash::AnalyticGaussianDash(GaussianDataSpec data, NoiseSchedule<double> sched)
    : data_(std::move(data)), sched_(std::move(sched)) {}

Matrix AnalyticGaussianDash::do_estimate(const Matrix& x, std::span<const int> t) const {
    Matrix out(x.rows(), x.cols());
    // Group columns by timestep so each distinct t costs one factorization.
    std::map<int, std::vector<Index>> by_t;
    for (Index j = 0; j < x.cols(); ++j) by_t[t[static_cast<std::size_t>(j)]].push_back(j);
    for (const auto& [step, cols] : by_t) {
        if (cols.size() == static_cast<std::size_t>(x.cols())) {
            out = analytic_gaussian_eps(x, step, data_, sched_);
            break;
        }
        Matrix block(x.rows(), static_cast<Index>(cols.size()));
        for (std::size_t k = 0; k < cols.size(); ++k) block.col(static_cast<Index>(k)) = x.col(cols[k]);
        const Matrix eps = analytic_gaussian_eps(block, step, data_, sched_);
        for (std::size_t k = 0; k < cols.size(); ++k) out.col(cols[k]) = eps.col(static_cast<Index>(k));
    }
    return out;
}

}  // namespace morse
