#include <doctest.h>

#include <cmath>

#include "morse/diffusion.hpp"
#include "morse/random.hpp"
#include "test_util.hpp"

using namespace morse;
using Eigen::Vector2d;

TEST_CASE("linear schedule: single step") {
    const auto s = make_linear_schedule(1, 0.1, 0.1);
    CHECK(s.T() == 1);
    CHECK(s.alpha(1) == doctest::Approx(std::sqrt(0.9)).epsilon(1e-15));
    CHECK(s.alpha(0) == 1.0);
    CHECK(s.sigma(0) == 0.0);
}

TEST_CASE("linear schedule: default terminal signal level") {
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    // Product of (1 - beta_t) evaluated independently in float64.
    CHECK(s.alpha(1000) * s.alpha(1000) == doctest::Approx(4.03583e-5).epsilon(1e-5));
    CHECK(s.terminal_is_noise());
}

TEST_CASE("linear schedule: variance preserving and monotone") {
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    for (int t = 0; t <= 1000; ++t) {
        CHECK(std::abs(s.alpha(t) * s.alpha(t) + s.sigma(t) * s.sigma(t) - 1.0) < 1e-12);
        if (t > 0) {
            CHECK(s.alpha(t) < s.alpha(t - 1));
            CHECK(s.sigma(t) > s.sigma(t - 1));
        }
    }
}

TEST_CASE("linear schedule: invalid arguments") {
    CHECK_THROWS_AS(make_linear_schedule(0, 1e-4, 0.02), ConfigError);
    CHECK_THROWS_AS(make_linear_schedule(10, 0.02, 1e-4), ConfigError);
    CHECK_THROWS_AS(make_linear_schedule(10, 0.0, 0.02), ConfigError);
    CHECK_THROWS_AS(make_linear_schedule(10, 1e-4, 1.0), ConfigError);
    const auto s = make_linear_schedule(10, 1e-4, 0.02);
    CHECK_THROWS_AS(s.alpha(11), RangeError);
    CHECK_THROWS_AS(s.sigma(-1), RangeError);
}

TEST_CASE("schedule validation rejects broken tables") {
    NoiseSchedule<double>::Array a(3), s(3);
    a << 1.0, 0.8, 0.8;
    s << 0.0, 0.6, 0.6;
    CHECK_THROWS(NoiseSchedule<double>(a, s));
    a << 0.9, 0.8, 0.6;
    s << std::sqrt(1 - 0.81), 0.6, 0.8;
    CHECK_THROWS(NoiseSchedule<double>(a, s));
    a << 1.0, 0.8, 0.6;
    s << 0.0, 0.6, 0.7;
    CHECK_THROWS(NoiseSchedule<double>(a, s));
}

TEST_CASE("schedule fingerprint distinguishes tables") {
    const auto a = make_linear_schedule(100, 1e-4, 0.02);
    const auto b = make_linear_schedule(100, 1e-4, 0.02);
    const auto c = make_linear_schedule(100, 2e-4, 0.02);
    CHECK(a.fingerprint() == b.fingerprint());
    CHECK(a.fingerprint() != c.fingerprint());
}

TEST_CASE("forward_diffuse examples") {
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    const Vector x0 = Vector::Constant(3, 1.5);
    const Vector eps = (Vector(3) << 0.3, -1.0, 2.0).finished();
    CHECK(forward_diffuse(x0, 0, eps, s) == x0);
    CHECK(test::max_abs(forward_diffuse(Vector::Zero(3), 500, eps, s), s.sigma(500) * eps) == 0.0);

    const auto one = test::one_step_schedule(0.8);
    const Vector out = forward_diffuse(Vector2d(1, 0), 1, Vector2d(0, 1), one);
    CHECK(out[0] == doctest::Approx(0.8));
    CHECK(out[1] == doctest::Approx(0.6));

    CHECK_THROWS_AS(forward_diffuse(Vector::Zero(2), 1, Vector::Zero(3), one), ShapeError);
    CHECK_THROWS_AS(forward_diffuse(Vector::Zero(2), 2, Vector::Zero(2), one), RangeError);
}

TEST_CASE("forward_diffuse is linear") {
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    NoiseStream rng(11);
    const Vector x0 = rng.normal(4), eps = rng.normal(4);
    const double a = -2.75;
    const Vector lhs = forward_diffuse((a * x0).eval(), 321, (a * eps).eval(), s);
    const Vector rhs = a * forward_diffuse(x0, 321, eps, s);
    CHECK(test::max_abs(lhs, rhs) < 1e-14);
}

TEST_CASE("eps_to_x0 and x0_to_eps") {
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    NoiseStream rng(3);
    const Vector x0 = rng.normal(2), eps = rng.normal(2);
    for (int t : {1, 10, 250, 999}) {
        const Vector xt = forward_diffuse(x0, t, eps, s);
        CHECK(test::max_abs(eps_to_x0(xt, eps, t, s), x0) < 1e-12 * std::max(1.0, x0.cwiseAbs().maxCoeff()) / s.alpha(t) * 10);
        const Vector eh = rng.normal(2);
        const Vector back = x0_to_eps(xt, eps_to_x0(xt, eh, t, s), t, s);
        CHECK(test::max_abs(back, eh) < 1e-12 * 100);
    }
    const Vector xt = rng.normal(2);
    CHECK(eps_to_x0(xt, rng.normal(2), 0, s) == xt);

    const auto one = test::one_step_schedule(0.8);
    const Vector x0h = eps_to_x0(Vector2d(0.8, 0.6), Vector2d(0, 1), 1, one);
    CHECK(x0h[0] == doctest::Approx(1.0));
    CHECK(x0h[1] == doctest::Approx(0.0));
    const Vector e = x0_to_eps(Vector2d(1, 0), Vector2d(0, 0), 1, one);
    CHECK(e[0] == doctest::Approx(1.0 / 0.6));
    CHECK(e[1] == 0.0);
    const Vector x0p = Vector2d(0.4, -0.2);
    CHECK(x0_to_eps((one.alpha(1) * x0p).eval(), x0p, 1, one).cwiseAbs().maxCoeff() < 1e-15);
    CHECK_THROWS_AS(x0_to_eps(xt, xt, 0, s), SingularityError);
}

TEST_CASE("parameterization conversion") {
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    NoiseStream rng(5);
    const Vector x0 = rng.normal(2), eps = rng.normal(2);
    const Vector xt = forward_diffuse(x0, 400, eps, s);
    CHECK(to_noise_prediction(Parameterization::NoisePrediction, xt, eps, 400, s) == eps);
    CHECK(test::max_abs(to_noise_prediction(Parameterization::DataPrediction, xt, x0, 400, s), eps) < 1e-12);
}

TEST_CASE("forward_diffuse matches its law over many draws") {
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    const int t = 300;
    const Vector x0 = Vector2d(1.0, -2.0);
    NoiseStream rng(17);
    const int n = 100000;
    Matrix xs(2, n);
    for (int i = 0; i < n; ++i) xs.col(i) = forward_diffuse(x0, t, rng.normal(2), s);
    const Vector mean = xs.rowwise().mean();
    const Matrix c = xs.colwise() - mean;
    const Matrix cov = c * c.transpose() / (n - 1);
    const double var = s.sigma(t) * s.sigma(t);
    const double se_mean = std::sqrt(var / n);
    const double se_var = var * std::sqrt(2.0 / (n - 1));
    for (int k = 0; k < 2; ++k) {
        CHECK(std::abs(mean[k] - s.alpha(t) * x0[k]) < 3 * se_mean);
        CHECK(std::abs(cov(k, k) - var) < 3 * se_var);
    }
    CHECK(std::abs(cov(0, 1)) < 3 * var / std::sqrt(n));
}
