#include <doctest.h>

#include <cmath>

#include "morse/datasets.hpp"
#include "morse/metrics.hpp"
#include "test_util.hpp"

using namespace morse;
using Eigen::Vector2d;

namespace {

GaussianMoments moments_1d(double mean, double sd) {
    return {Vector::Constant(1, mean), Matrix::Constant(1, 1, sd * sd)};
}

GaussianMoments random_moments(NoiseStream& rng, Index d) {
    const Matrix a = rng.normal(d, d);
    return {rng.normal(d), a * a.transpose()};
}

GaussianMoments moments_of(const GaussianDataSpec& g) { return {g.mu, g.cov}; }

QualityCurve curve(std::vector<CurvePoint> pts) { return QualityCurve(std::move(pts)); }

}  // namespace

TEST_CASE("gaussian_w2 examples") {
    NoiseStream rng(1);
    const GaussianMoments a = random_moments(rng, 3);
    CHECK(gaussian_w2(a, a) < 1e-6);
    const Vector d = (Vector(3) << 0.3, -1.2, 2.0).finished();
    const GaussianMoments shifted(a.mean + d, a.cov);
    CHECK(gaussian_w2(a, shifted) == doctest::Approx(d.norm()).epsilon(1e-6));
    CHECK(gaussian_w2(moments_1d(0, 1), moments_1d(0, 2)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(gaussian_w2(moments_1d(0, 1), a), ShapeError);
    CHECK_THROWS_AS(GaussianMoments(Vector::Zero(1), Matrix::Constant(1, 1, -1.0)), DomainError);
    CHECK_THROWS_AS(GaussianMoments(Vector::Zero(2), (Matrix(2, 2) << 1, 0.5, 0, 1).finished()), DomainError);
}

TEST_CASE("gaussian_w2 is a metric on random instances") {
    NoiseStream rng(2);
    for (int i = 0; i < 100; ++i) {
        const GaussianMoments a = random_moments(rng, 3), b = random_moments(rng, 3), c = random_moments(rng, 3);
        const double ab = gaussian_w2(a, b), ba = gaussian_w2(b, a);
        CHECK(ab == doctest::Approx(ba).epsilon(1e-9));
        CHECK(ab > 0.0);
        CHECK(gaussian_w2(a, c) <= ab + gaussian_w2(b, c) + 1e-9);
    }
}

TEST_CASE("fit_gaussian examples") {
    const GaussianMoments m = fit_gaussian((Matrix(2, 2) << 0, 2, 0, 0).finished());
    CHECK(m.mean == Vector2d(1, 0));
    CHECK(m.cov == (Matrix(2, 2) << 2, 0, 0, 0).finished());
    const GaussianMoments same = fit_gaussian(Matrix::Constant(2, 5, 3.0));
    CHECK(same.cov.isZero(0.0));
    CHECK_THROWS_AS(fit_gaussian(Matrix::Zero(2, 1)), ContractError);

    NoiseStream rng(3);
    const int n = 100000;
    const GaussianMoments big = fit_gaussian(rng.normal(2, n));
    const double se_mean = 1.0 / std::sqrt(n), se_var = std::sqrt(2.0 / n), se_cov = 1.0 / std::sqrt(n);
    CHECK(std::abs(big.mean[0]) < 3 * se_mean);
    CHECK(std::abs(big.mean[1]) < 3 * se_mean);
    CHECK(std::abs(big.cov(0, 0) - 1) < 3 * se_var);
    CHECK(std::abs(big.cov(1, 1) - 1) < 3 * se_var);
    CHECK(std::abs(big.cov(0, 1)) < 3 * se_cov);
}

TEST_CASE("mmd_rbf examples") {
    const Matrix x = (Matrix(1, 2) << 0.0, 1.0).finished();
    CHECK(mmd_rbf(x, x, 1.0) == doctest::Approx(-0.39346934028736658).epsilon(1e-14));
    CHECK(mmd_rbf(Matrix::Zero(1, 2), Matrix::Constant(1, 2, 1e3), 1.0) == 2.0);

    NoiseStream rng(4);
    const RingMixture ring;
    const Matrix a = ring.sample(1000, rng), b = ring.sample(1000, rng);
    const double h = median_pairwise_distance(b);
    CHECK(std::abs(mmd_rbf(a, b, h)) < 0.01);

    CHECK_THROWS_AS(mmd_rbf(Matrix::Zero(1, 1), x, 1.0), ContractError);
    CHECK_THROWS_AS(mmd_rbf(x, x, 0.0), DomainError);
    CHECK_THROWS_AS(mmd_rbf(Matrix::Zero(2, 2), x, 1.0), ShapeError);
}

TEST_CASE("mmd_rbf does not depend on the thread count") {
    NoiseStream rng(5);
    const Matrix a = rng.normal(2, 700), b = rng.normal(2, 900) * 1.3;
    const double one = mmd_rbf(a, b, 0.8, 1);
    CHECK(mmd_rbf(a, b, 0.8, 3) == one);
    CHECK(mmd_rbf(a, b, 0.8, 8) == one);
    const double yy = mmd_within_mean(b, 0.8);
    CHECK(mmd_rbf_with_yy(a, b, 0.8, yy, 4) == one);
}

TEST_CASE("exact DDIM oracle examples") {
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    const GaussianDataSpec point(Vector2d(1.0, -2.0), Matrix::Zero(2, 2));
    for (int n : {1, 3, 10, 1000}) {
        const GaussianMoments m = exact_ddim_gaussian_oracle(select_time_grid(1000, n), point, s);
        CHECK(test::max_abs(m.mean, Vector2d(1.0, -2.0)) < 1e-9);
        CHECK(m.cov.cwiseAbs().maxCoeff() < 1e-9);
    }

    const auto dense = make_linear_schedule(200, 5e-4, 0.1);
    const auto data = make_anisotropic_gaussian();
    const GaussianDataSpec g = *data->gaussian();
    const double w2 = gaussian_w2(exact_ddim_gaussian_oracle(select_time_grid(200, 200), g, dense), moments_of(g));
    CHECK(w2 < 0.02);
    CHECK(w2 == doctest::Approx(0.0164426).epsilon(1e-5));
}

TEST_CASE("jump degradation is monotone in the grid size") {
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    const auto data = make_anisotropic_gaussian();
    const GaussianDataSpec g = *data->gaussian();
    const std::vector<std::pair<int, double>> pinned{
        {3, 0.7505109405}, {5, 0.4829978156}, {10, 0.2576307638}, {20, 0.134158119}, {50, 0.05583036775}};
    double prev = INFINITY;
    for (const auto& [n, expected] : pinned) {
        const double w2 = gaussian_w2(exact_ddim_gaussian_oracle(select_time_grid(1000, n), g, s), moments_of(g));
        CAPTURE(n);
        CHECK(w2 == doctest::Approx(expected).epsilon(1e-8));
        CHECK(w2 <= prev + 1e-6);
        prev = w2;
    }
}

TEST_CASE("interpolate examples") {
    const QualityCurve c = curve({{10, 5.0}, {20, 3.0}});
    CHECK(interpolate(c, 10) == 5.0);
    CHECK(interpolate(c, 20) == 3.0);
    CHECK(interpolate(c, 15) == 4.0);
    CHECK(interpolate(c, 12.5) == doctest::Approx(4.5).epsilon(1e-15));
    CHECK_THROWS_AS(interpolate(c, 9.9), RangeError);
    CHECK_THROWS_AS(interpolate(c, 20.1), RangeError);
    CHECK_THROWS_AS(curve({{10, 1.0}}), ContractError);
    CHECK_THROWS_AS(curve({{10, 1.0}, {10, 2.0}}), ContractError);
}

TEST_CASE("envelope is the running minimum") {
    const QualityCurve c = curve({{1, 5.0}, {2, 3.0}, {3, 4.0}, {4, 2.0}});
    const QualityCurve e = c.envelope();
    CHECK(e.points()[2].quality == 3.0);
    CHECK(e.points()[3].quality == 2.0);
}

TEST_CASE("speedup_at examples") {
    const QualityCurve base = curve({{10, 5.0}, {20, 3.0}});
    const Speedup two = speedup_at(base, {10, 3.0});
    CHECK(two.ok());
    CHECK(two.value == 2.0);
    CHECK(two.matched_latency == 20.0);
    CHECK(speedup_at(base, {10, 5.0}).value == 1.0);
    CHECK(speedup_at(base, {10, 4.0}).value == 1.5);
    CHECK(speedup_at(base, {10, 2.0}).status == SpeedupStatus::NotApplicable);
    CHECK(speedup_at(base, {10, 6.0}).status == SpeedupStatus::NotApplicableLow);
    CHECK(to_string(SpeedupStatus::NotApplicable) == "NA");
}

TEST_CASE("average_speedup examples") {
    const QualityCurve base = curve({{1, 10.0}, {2, 8.0}, {4, 6.0}, {6, 4.0}, {9, 2.0}, {12, 1.0}});
    CHECK(average_speedup(base, base, {1, 2, 4, 6, 9}).mean == doctest::Approx(1.0).epsilon(1e-15));

    // At l=1 quality 8 matches n=2; at l=2 quality 6 matches n=4; at l=3 quality 2 matches n=9.
    const QualityCurve cand = curve({{1, 8.0}, {2, 6.0}, {3, 2.0}});
    const AverageSpeedup avg = average_speedup(base, cand, {1, 2, 3});
    CHECK(avg.mean == doctest::Approx(7.0 / 3.0).epsilon(1e-15));
    CHECK(avg.excluded.empty());

    const QualityCurve with_na = curve({{1, 8.0}, {2, 0.5}, {3, 2.0}});
    const AverageSpeedup na = average_speedup(base, with_na, {1, 2, 3});
    CHECK(na.mean == 2.5);
    CHECK(na.excluded == std::vector<double>{2.0});
    CHECK(na.details.size() == 3);

    const QualityCurve all_na = curve({{1, 0.5}, {2, 0.2}});
    CHECK_THROWS_AS(average_speedup(base, all_na, {1, 2}), EmptyAverageError);
    CHECK_THROWS_AS(average_speedup(base, cand, {4}), RangeError);
}

TEST_CASE("speedups are invariant to latency scale") {
    NoiseStream rng(6);
    std::vector<CurvePoint> b, c;
    double q = 10.0;
    for (int i = 1; i <= 8; ++i) {
        q -= rng.uniform() + 0.1;
        b.push_back({static_cast<double>(i), q});
    }
    for (int i = 1; i <= 4; ++i) c.push_back({static_cast<double>(i), b[static_cast<std::size_t>(2 * i - 1)].quality});
    for (double scale : {0.37, 3.0, 1000.0}) {
        std::vector<CurvePoint> bs = b, cs = c;
        for (auto& p : bs) p.latency *= scale;
        for (auto& p : cs) p.latency *= scale;
        for (std::size_t i = 0; i < c.size(); ++i) {
            const Speedup s0 = speedup_at(curve(b), c[i]);
            const Speedup s1 = speedup_at(curve(bs), cs[i]);
            CHECK(s0.status == s1.status);
            CHECK(s1.value == doctest::Approx(s0.value).epsilon(1e-12));
        }
    }
}
