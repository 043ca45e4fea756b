#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "morse/errors.hpp"
#include "morse/types.hpp"

namespace morse {

/// Variance-preserving forward process coefficients, x_t = alpha_t x_0 + sigma_t eps,
/// tabulated for integer timesteps 0..T. Index 0 is exactly clean data.
template <typename Scalar>
class NoiseSchedule {
public:
    using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

    NoiseSchedule(Array alpha, Array sigma) : alpha_(std::move(alpha)), sigma_(std::move(sigma)) {
        validate();
    }

    int T() const { return static_cast<int>(alpha_.size()) - 1; }

    Scalar alpha(int t) const {
        check_timestep(t);
        return alpha_[t];
    }
    Scalar sigma(int t) const {
        check_timestep(t);
        return sigma_[t];
    }

    /// alpha_T^2 <= 1e-3, i.e. x_T is close enough to N(0, I) to start sampling from pure noise.
    bool terminal_is_noise() const {
        const Scalar a = alpha_[alpha_.size() - 1];
        return a * a <= Scalar(1e-3);
    }

    const Array& alphas() const { return alpha_; }
    const Array& sigmas() const { return sigma_; }

    void check_timestep(int t) const {
        if (t < 0 || t > T()) {
            throw RangeError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(T()) + "]");
        }
    }

    /// FNV-1a over the little-endian bytes of alpha then sigma.
    std::uint64_t fingerprint() const {
        std::uint64_t h = 1469598103934665603ull;
        auto mix = [&h](const Array& a) {
            for (Eigen::Index i = 0; i < a.size(); ++i) {
                const double v = static_cast<double>(a[i]);
                std::uint64_t bits;
                static_assert(sizeof(bits) == sizeof(v));
                std::memcpy(&bits, &v, sizeof(v));
                for (int b = 0; b < 8; ++b) {
                    h ^= (bits >> (8 * b)) & 0xffu;
                    h *= 1099511628211ull;
                }
            }
        };
        mix(alpha_);
        mix(sigma_);
        return h;
    }

private:
    void validate() const {
        if (alpha_.size() < 2 || alpha_.size() != sigma_.size()) {
            throw ConfigError("noise schedule needs matching alpha/sigma arrays with T >= 1");
        }
        if (alpha_[0] != Scalar(1) || sigma_[0] != Scalar(0)) {
            throw ConfigError("noise schedule must start at alpha_0 = 1, sigma_0 = 0");
        }
        for (Eigen::Index t = 0; t < alpha_.size(); ++t) {
            if (!std::isfinite(static_cast<double>(alpha_[t])) || !std::isfinite(static_cast<double>(sigma_[t]))) {
                throw ConfigError("noise schedule has non-finite entries");
            }
            using std::abs;
            if (abs(alpha_[t] * alpha_[t] + sigma_[t] * sigma_[t] - Scalar(1)) > Scalar(1e-12)) {
                throw ConfigError("noise schedule is not variance preserving at t=" + std::to_string(t));
            }
            if (t > 0 && !(alpha_[t] < alpha_[t - 1] && sigma_[t] > sigma_[t - 1])) {
                throw ConfigError("noise schedule must be strictly monotone at t=" + std::to_string(t));
            }
        }
    }

    Array alpha_;
    Array sigma_;
};

/// Standard DDPM linear-beta schedule: alpha_t^2 = prod_{s<=t} (1 - beta_s).
template <typename Scalar = double>
NoiseSchedule<Scalar> make_linear_schedule(int T, Scalar beta_start, Scalar beta_end) {
    if (T < 1) throw ConfigError("schedule length T must be >= 1");
    if (!(beta_start > Scalar(0) && beta_start < Scalar(1) && beta_end > Scalar(0) && beta_end < Scalar(1)) ||
        beta_start > beta_end) {
        throw ConfigError("beta range must satisfy 0 < beta_start <= beta_end < 1");
    }
    typename NoiseSchedule<Scalar>::Array alpha(T + 1), sigma(T + 1);
    alpha[0] = Scalar(1);
    sigma[0] = Scalar(0);
    // Accumulate log(alpha_t^2) so that sigma_t^2 = -expm1(.) stays accurate for small t.
    Scalar log_abar = Scalar(0);
    for (int t = 1; t <= T; ++t) {
        const Scalar beta =
            T == 1 ? beta_start : beta_start + (beta_end - beta_start) * Scalar(t - 1) / Scalar(T - 1);
        log_abar += std::log1p(-beta);
        alpha[t] = std::exp(Scalar(0.5) * log_abar);
        sigma[t] = std::sqrt(-std::expm1(log_abar));
    }
    return NoiseSchedule<Scalar>(std::move(alpha), std::move(sigma));
}

namespace detail {

template <typename DA, typename DB>
void require_same_shape(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
    }
}

}  // namespace detail

/// alpha_t x0 + sigma_t eps. Columns are independent samples.
template <typename DX, typename DE, typename Scalar>
typename DX::PlainObject forward_diffuse(const Eigen::MatrixBase<DX>& x0, int t, const Eigen::MatrixBase<DE>& eps,
                                         const NoiseSchedule<Scalar>& sched) {
    detail::require_same_shape(x0, eps, "forward_diffuse");
    return sched.alpha(t) * x0 + sched.sigma(t) * eps;
}

/// Data estimate from a noise estimate, (x_t - sigma_t eps_hat) / alpha_t.
template <typename DX, typename DE, typename Scalar>
typename DX::PlainObject eps_to_x0(const Eigen::MatrixBase<DX>& x_t, const Eigen::MatrixBase<DE>& eps_hat, int t,
                                   const NoiseSchedule<Scalar>& sched) {
    detail::require_same_shape(x_t, eps_hat, "eps_to_x0");
    const Scalar a = sched.alpha(t);
    if (a == Scalar(0)) throw SingularityError("eps_to_x0: alpha_t = 0");
    return (x_t - sched.sigma(t) * eps_hat) / a;
}

/// Noise estimate from a data estimate, (x_t - alpha_t x0_hat) / sigma_t.
template <typename DX, typename DE, typename Scalar>
typename DX::PlainObject x0_to_eps(const Eigen::MatrixBase<DX>& x_t, const Eigen::MatrixBase<DE>& x0_hat, int t,
                                   const NoiseSchedule<Scalar>& sched) {
    detail::require_same_shape(x_t, x0_hat, "x0_to_eps");
    const Scalar s = sched.sigma(t);
    if (s == Scalar(0)) throw SingularityError("x0_to_eps: sigma_t = 0");
    return (x_t - sched.alpha(t) * x0_hat) / s;
}

enum class Parameterization { NoisePrediction, DataPrediction };

/// Converts an estimate into noise-prediction form, the convention every sampler step expects.
template <typename DX, typename DE, typename Scalar>
typename DX::PlainObject to_noise_prediction(Parameterization kind, const Eigen::MatrixBase<DX>& x_t,
                                             const Eigen::MatrixBase<DE>& estimate, int t,
                                             const NoiseSchedule<Scalar>& sched) {
    if (kind == Parameterization::NoisePrediction) {
        detail::require_same_shape(x_t, estimate, "to_noise_prediction");
        return estimate;
    }
    return x0_to_eps(x_t, estimate, t, sched);
}

}  // namespace morse
