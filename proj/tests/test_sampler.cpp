#include <doctest.h>

#include <cmath>

#include "morse/datasets.hpp"
#include "morse/estimator.hpp"
#include "morse/metrics.hpp"
#include "morse/sampler.hpp"
#include "test_util.hpp"

using namespace morse;
using Eigen::Vector2d;

TEST_CASE("uniform time grids") {
    CHECK(select_time_grid(1000, 4).points() == std::vector<int>{1000, 750, 500, 250, 0});
    CHECK(select_time_grid(1000, 1).points() == std::vector<int>{1000, 0});
    CHECK(select_time_grid(10, 10).points() == std::vector<int>{10, 9, 8, 7, 6, 5, 4, 3, 2, 1, 0});
    CHECK(select_time_grid(1000, 3).points() == std::vector<int>{1000, 667, 333, 0});
    CHECK_THROWS_AS(select_time_grid(10, 0), RangeError);
    CHECK_THROWS_AS(select_time_grid(10, 11), RangeError);
    for (int n = 1; n <= 200; n += 7) {
        const TimeGrid g = select_time_grid(200, n);
        CHECK(g.transitions() == n);
        CHECK(g.front() == 200);
        CHECK(g.points().back() == 0);
    }
}

TEST_CASE("time grid validation") {
    CHECK_THROWS(TimeGrid({5}));
    CHECK_THROWS(TimeGrid({5, 5, 0}));
    CHECK_THROWS(TimeGrid({5, 3, 1}));
    CHECK_THROWS(TimeGrid({3, 5, 0}));
    CHECK_NOTHROW(TimeGrid({7, 2, 0}));
}

TEST_CASE("ddim step examples") {
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    const Vector x = Vector2d(0.3, -1.2), z = Vector2d(0.5, 0.1);
    CHECK(ddim_step(x, z, 600, 600, s) == x);
    CHECK(test::max_abs(ddim_step(x, z, 600, 0, s), eps_to_x0(x, z, 600, s)) == 0.0);
    CHECK_THROWS_AS(ddim_step(x, z, 100, 200, s), OrderingError);

    const StepCoeffs<double> c{0.8, 0.6, 0.9486833, 0.3162278};
    const Vector out = ddim_step(Vector2d(0.8, 0.6), Vector2d(0, 1), c);
    CHECK(out[0] == doctest::Approx(0.9486833).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(0.3162278).epsilon(1e-12));
}

TEST_CASE("ddim semigroup under a frozen estimate") {
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    NoiseStream rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const Vector x = rng.normal(3), z = rng.normal(3);
        const int t = rng.uniform_int(2, 1000);
        const int u = rng.uniform_int(1, t - 1);
        const int v = rng.uniform_int(0, u - 1);
        const Vector two = ddim_step(ddim_step(x, z, t, u, s), z, u, v, s);
        CHECK(test::max_abs(two, ddim_step(x, z, t, v, s)) < 1e-10);
    }
}

TEST_CASE("ddpm step examples") {
    // sigma~^2 = (sigma'^2 / sigma^2)(1 - alpha^2 / alpha'^2); values evaluated independently.
    const StepCoeffs<double> c{0.6, 0.8, 0.9, 0.43589};
    CHECK(ancestral_variance(c) == doctest::Approx(0.164930635503472).epsilon(1e-12));
    const Vector out = ddpm_step(Vector::Constant(1, 1.0), Vector::Constant(1, 0.5), c, Vector::Constant(1, 1.0));
    CHECK(out[0] == doctest::Approx(1.38528).epsilon(1e-5));
    CHECK(out[0] == doctest::Approx(1.3852832153176573).epsilon(1e-12));

    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    NoiseStream rng(8);
    const Vector x = rng.normal(2), z = rng.normal(2), n = rng.normal(2);
    const auto cc = step_coeffs(s, 700, 300);
    CHECK(ddpm_step(x, z, cc, Vector::Zero(2), 0.0) == ddim_step(x, z, cc));
    CHECK(test::max_abs(ddpm_step(x, z, 700, 0, s, n), eps_to_x0(x, z, 700, s)) < 1e-15);
    CHECK(ddpm_step(x, z, 700, 700, s, n) == x);
    CHECK_THROWS_AS(ddpm_step(x, z, 300, 700, s, n), OrderingError);
}

TEST_CASE("point-mass analytic Dash recovers the point from any grid") {
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    const Vector mu = Vector2d(1.5, -0.5);
    const AnalyticGaussianDash dash(GaussianDataSpec(mu, Matrix::Zero(2, 2)), s);
    for (int n : {1, 3, 10, 37}) {
        NoiseStream rng(n);
        const SampleResult r = run_sampler(dash, select_time_grid(1000, n), SamplerKind::DDIM, s, rng);
        CHECK(test::max_abs(r.samples, mu) < 1e-9);
        CHECK(static_cast<int>(r.trajectory.size()) == n);
    }
}

TEST_CASE("trajectory records chain and are reproducible") {
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    const auto data = make_anisotropic_gaussian();
    const AnalyticGaussianDash dash(*data->gaussian(), s);
    for (SamplerKind kind : {SamplerKind::DDIM, SamplerKind::DDPMAncestral}) {
        std::vector<NoiseStream> a, b;
        for (int j = 0; j < 5; ++j) {
            a.emplace_back(100 + j);
            b.emplace_back(100 + j);
        }
        const TimeGrid grid = select_time_grid(1000, 8);
        const SampleResult ra = run_sampler(dash, grid, kind, s, a);
        const SampleResult rb = run_sampler(dash, grid, kind, s, b);
        CHECK(ra.samples == rb.samples);
        REQUIRE(ra.trajectory.size() == 8);
        for (std::size_t i = 0; i + 1 < ra.trajectory.size(); ++i) {
            CHECK(ra.trajectory[i].x_out == ra.trajectory[i + 1].x_in);
            CHECK(ra.trajectory[i].t_out == ra.trajectory[i + 1].t_in);
            CHECK(ra.trajectory[i].executor == Executor::Dash);
        }
        CHECK(ra.trajectory.back().x_out == ra.samples);
        CHECK(ra.trajectory.front().t_in == 1000);
    }
}

TEST_CASE("ancestral sampling consumes one draw per chain per step") {
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    const auto data = make_isotropic_gaussian(2);
    const AnalyticGaussianDash dash(*data->gaussian(), s);
    NoiseStream used(42), reference(42);
    run_sampler(dash, select_time_grid(1000, 6), SamplerKind::DDPMAncestral, s, used);
    for (int i = 0; i < 7; ++i) reference.normal(2);  // x_T plus six steps
    CHECK(used.engine() == reference.engine());
}

TEST_CASE("chains are independent of batching") {
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    const auto data = make_anisotropic_gaussian();
    const AnalyticGaussianDash dash(*data->gaussian(), s);
    std::vector<NoiseStream> all;
    for (int j = 0; j < 4; ++j) all.emplace_back(7 + j);
    const TimeGrid grid = select_time_grid(1000, 5);
    const Matrix joint = run_sampler(dash, grid, SamplerKind::DDPMAncestral, s, all, false).samples;
    for (int j = 0; j < 4; ++j) {
        NoiseStream one(7 + j);
        CHECK(run_sampler(dash, grid, SamplerKind::DDPMAncestral, s, one).samples == joint.col(j));
    }
}

TEST_CASE("sampled moments match the exact affine oracle") {
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    const auto data = make_anisotropic_gaussian();
    const GaussianDataSpec spec = *data->gaussian();
    const AnalyticGaussianDash dash(spec, s);
    const int chains = 100000;
    for (int n : {3, 5, 10, 20, 50}) {
        const TimeGrid grid = select_time_grid(1000, n);
        std::vector<NoiseStream> streams;
        for (int j = 0; j < chains; ++j) streams.emplace_back(derive_seed(n, SeedPurpose::Chains, j));
        const Matrix x = run_sampler(dash, grid, SamplerKind::DDIM, s, streams, false).samples;
        const GaussianMoments emp = fit_gaussian(x);
        const GaussianMoments exact = exact_ddim_gaussian_oracle(grid, spec, s);
        for (int k = 0; k < 2; ++k) {
            const double var = exact.cov(k, k);
            CHECK(std::abs(emp.mean[k] - exact.mean[k]) < 3 * std::sqrt(var / chains));
            CHECK(std::abs(emp.cov(k, k) - var) < 3 * var * std::sqrt(2.0 / (chains - 1)));
        }
        const double off_se = std::sqrt((exact.cov(0, 0) * exact.cov(1, 1) + exact.cov(0, 1) * exact.cov(0, 1)) / chains);
        CHECK(std::abs(emp.cov(0, 1) - exact.cov(0, 1)) < 3 * off_se);
    }
}
