#include "morse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "morse/parallel.hpp"

namespace morse {

namespace {

void check_moments(const Vector& mean, const Matrix& cov, double slack) {
    if (mean.size() < 1 || cov.rows() != mean.size() || cov.cols() != mean.size()) {
        throw ShapeError("gaussian moments: shape mismatch");
    }
    if (!mean.allFinite() || !cov.allFinite()) throw DomainError("gaussian moments: non-finite entries");
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, cov.cwiseAbs().maxCoeff())) {
        throw DomainError("gaussian moments: covariance not symmetric");
    }
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(cov, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -slack) throw DomainError("gaussian moments: covariance not PSD");
}

// Symmetric PSD square root; tiny negative eigenvalues are clamped.
Matrix psd_sqrt(const Matrix& m) {
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
    const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

GaussianMoments::GaussianMoments(Vector m, Matrix c) : mean(std::move(m)), cov(std::move(c)) {
    check_moments(mean, cov, 1e-10);
}

double gaussian_w2(const GaussianMoments& a, const GaussianMoments& b) {
    if (a.dim() != b.dim()) throw ShapeError("gaussian_w2: dimension mismatch");
    const Matrix root_b = psd_sqrt(b.cov);
    Matrix middle = root_b * a.cov * root_b;
    middle = 0.5 * (middle + middle.transpose());
    const double cross = psd_sqrt(middle).trace();
    const double mean_term = (a.mean - b.mean).squaredNorm();
    const double cov_term = a.cov.trace() + b.cov.trace() - 2.0 * cross;
    return std::sqrt(std::max(mean_term + cov_term, 0.0));
}

GaussianMoments fit_gaussian(const Matrix& samples) {
    const Index n = samples.cols();
    if (n < 2) throw ContractError("fit_gaussian: at least two samples required");
    const Vector mean = samples.rowwise().mean();
    const Matrix centered = samples.colwise() - mean;
    Matrix cov = centered * centered.transpose() / static_cast<double>(n - 1);
    cov = 0.5 * (cov + cov.transpose());
    return GaussianMoments(mean, cov);
}

double median_pairwise_distance(const Matrix& samples, Index max_points) {
    const Index n = std::min(samples.cols(), max_points);
    if (n < 2) throw ContractError("median_pairwise_distance: at least two samples required");
    std::vector<double> d;
    d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) d.push_back((samples.col(i) - samples.col(j)).norm());
    auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    double med = *mid;
    if (d.size() % 2 == 0) med = 0.5 * (med + *std::max_element(d.begin(), mid));
    return med;
}

namespace {

constexpr Index kKernelBlock = 64;

// Coordinates stored one contiguous array per dimension.
using Coords = std::vector<Eigen::ArrayXd>;

Coords split_rows(const Matrix& x) {
    Coords c;
    for (Index k = 0; k < x.rows(); ++k) c.emplace_back(x.row(k).transpose().array());
    return c;
}

// Sum of exp(-gamma |x_i - y_j|^2) over j in [from, y.size), for one point x_i.
double kernel_row_sum(const Coords& x, Index i, const Coords& y, Index from, Eigen::ArrayXd& buf, double gamma) {
    const Index n = y.front().size() - from;
    if (n <= 0) return 0.0;
    auto sq = buf.head(n);
    sq = (y[0].tail(n) - x[0][i]).square();
    for (std::size_t k = 1; k < x.size(); ++k) sq += (y[k].tail(n) - x[k][i]).square();
    return (-gamma * sq).exp().sum();
}

template <typename BlockSum>
double blocked_sum(Index m, int threads, BlockSum&& block_sum) {
    const long blocks = static_cast<long>((m + kKernelBlock - 1) / kKernelBlock);
    std::vector<double> partial(static_cast<std::size_t>(blocks), 0.0);
    parallel_for(blocks, threads, [&](long b) {
        const Index lo = b * kKernelBlock;
        partial[static_cast<std::size_t>(b)] = block_sum(lo, std::min(kKernelBlock, m - lo));
    });
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

}  // namespace

double mmd_within_mean(const Matrix& x, double bandwidth, int threads) {
    const Index m = x.cols();
    if (m < 2) throw ContractError("mmd_rbf: each sample set needs at least two points");
    const double gamma = 1.0 / (2.0 * bandwidth * bandwidth);
    const Coords c = split_rows(x);
    const double total = blocked_sum(m, threads, [&](Index lo, Index len) {
        Eigen::ArrayXd buf(m);
        double acc = 0.0;
        for (Index i = lo; i < lo + len; ++i) acc += kernel_row_sum(c, i, c, i + 1, buf, gamma);
        return acc;
    });
    return 2.0 * total / (static_cast<double>(m) * static_cast<double>(m - 1));
}

namespace {

double cross_mean(const Matrix& x, const Matrix& y, double bandwidth, int threads) {
    const double gamma = 1.0 / (2.0 * bandwidth * bandwidth);
    const Coords cx = split_rows(x);
    const Coords cy = split_rows(y);
    const double total = blocked_sum(x.cols(), threads, [&](Index lo, Index len) {
        Eigen::ArrayXd buf(y.cols());
        double acc = 0.0;
        for (Index i = lo; i < lo + len; ++i) acc += kernel_row_sum(cx, i, cy, 0, buf, gamma);
        return acc;
    });
    return total / (static_cast<double>(x.cols()) * static_cast<double>(y.cols()));
}

}  // namespace

double mmd_rbf_with_yy(const Matrix& x, const Matrix& y, double bandwidth, double yy_mean, int threads) {
    if (x.cols() < 2 || y.cols() < 2) throw ContractError("mmd_rbf: each sample set needs at least two points");
    if (x.rows() != y.rows()) throw ShapeError("mmd_rbf: dimension mismatch");
    if (!(bandwidth > 0.0)) throw DomainError("mmd_rbf: bandwidth must be > 0");
    return mmd_within_mean(x, bandwidth, threads) + yy_mean - 2.0 * cross_mean(x, y, bandwidth, threads);
}

double mmd_rbf(const Matrix& x, const Matrix& y, double bandwidth, int threads) {
    if (x.cols() < 2 || y.cols() < 2) throw ContractError("mmd_rbf: each sample set needs at least two points");
    if (!(bandwidth > 0.0)) throw DomainError("mmd_rbf: bandwidth must be > 0");
    return mmd_rbf_with_yy(x, y, bandwidth, mmd_within_mean(y, bandwidth, threads), threads);
}

GaussianMoments exact_ddim_gaussian_oracle(const TimeGrid& grid, const GaussianDataSpec& data,
                                           const NoiseSchedule<double>& sched) {
    const Index d = data.dim();
    Vector mean = Vector::Zero(d);
    Matrix cov = Matrix::Identity(d, d);
    for (int i = 0; i < grid.transitions(); ++i) {
        const int t = grid.t_in(i);
        const int t_prev = grid.t_out(i);
        const auto c = step_coeffs(sched, t, t_prev);
        if (c.sigma == 0.0) throw SingularityError("exact oracle: step starting at sigma_t = 0");
        const PosteriorMeanMap post = gaussian_posterior_mean_map(t, data, sched);
        // x' = (s'/s) x + (a' - s' a / s) x0_hat, with x0_hat = gain x + offset.
        const double w = c.alpha_prev - c.sigma_prev * c.alpha / c.sigma;
        const Matrix step = (c.sigma_prev / c.sigma) * Matrix::Identity(d, d) + w * post.gain;
        mean = step * mean + w * post.offset;
        cov = step * cov * step.transpose();
        cov = 0.5 * (cov + cov.transpose());
    }
    return GaussianMoments(mean, cov);
}

QualityCurve::QualityCurve(std::vector<CurvePoint> points, std::string label)
    : points_(std::move(points)), label_(std::move(label)) {
    if (points_.size() < 2) throw ContractError("quality curve needs at least two points");
    for (std::size_t i = 0; i < points_.size(); ++i) {
        if (!(points_[i].latency > 0.0) || !std::isfinite(points_[i].quality)) {
            throw DomainError("quality curve: latencies must be > 0 and qualities finite");
        }
        if (i > 0 && !(points_[i].latency > points_[i - 1].latency)) {
            throw ContractError("quality curve: latencies must be strictly increasing");
        }
    }
}

QualityCurve QualityCurve::envelope() const {
    std::vector<CurvePoint> env = points_;
    for (std::size_t i = 1; i < env.size(); ++i) env[i].quality = std::min(env[i].quality, env[i - 1].quality);
    return QualityCurve(std::move(env), label_);
}

double interpolate(const QualityCurve& curve, double latency) {
    const auto& p = curve.points();
    if (!(latency >= p.front().latency && latency <= p.back().latency)) {
        throw RangeError("interpolate: latency " + std::to_string(latency) + " outside curve range [" +
                         std::to_string(p.front().latency) + ", " + std::to_string(p.back().latency) + "]");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i].latency == latency) return p[i].quality;
        if (p[i].latency > latency) {
            const CurvePoint& a = p[i - 1];
            const CurvePoint& b = p[i];
            const double w = (latency - a.latency) / (b.latency - a.latency);
            return a.quality + w * (b.quality - a.quality);
        }
    }
    return p.back().quality;
}

Speedup speedup_at(const QualityCurve& baseline, CurvePoint candidate) {
    if (!(candidate.latency > 0.0)) throw DomainError("speedup_at: candidate latency must be > 0");
    const QualityCurve env = baseline.envelope();
    const auto& p = env.points();
    Speedup s;
    if (candidate.quality > p.front().quality) {
        s.status = SpeedupStatus::NotApplicableLow;
        return s;
    }
    if (candidate.quality < p.back().quality) {
        s.status = SpeedupStatus::NotApplicable;
        return s;
    }
    double matched = p.front().latency;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i].quality <= candidate.quality) {
            if (i == 0) {
                matched = p[0].latency;
            } else {
                const CurvePoint& a = p[i - 1];
                const CurvePoint& b = p[i];
                const double w = (a.quality - candidate.quality) / (a.quality - b.quality);
                matched = a.latency + w * (b.latency - a.latency);
            }
            break;
        }
    }
    s.matched_latency = matched;
    s.value = matched / candidate.latency;
    return s;
}

AverageSpeedup average_speedup(const QualityCurve& baseline, const QualityCurve& candidate,
                               const std::vector<double>& latencies) {
    AverageSpeedup out;
    double sum = 0.0;
    int used = 0;
    for (double l : latencies) {
        SpeedupDetail detail;
        detail.latency = l;
        detail.candidate_quality = interpolate(candidate, l);
        detail.speedup = speedup_at(baseline, {l, detail.candidate_quality});
        if (detail.speedup.ok()) {
            sum += detail.speedup.value;
            ++used;
        } else {
            out.excluded.push_back(l);
        }
        out.details.push_back(detail);
    }
    if (used == 0) throw EmptyAverageError("average_speedup: every latency point was not applicable");
    out.mean = sum / used;
    return out;
}

std::string to_string(SpeedupStatus s) {
    switch (s) {
        case SpeedupStatus::Ok: return "ok";
        case SpeedupStatus::NotApplicable: return "NA";
        case SpeedupStatus::NotApplicableLow: return "NA_low";
    }
    return "?";
}

}  // namespace morse
