#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "morse/adam.hpp"
#include "morse/datasets.hpp"
#include "morse/estimator.hpp"
#include "morse/mlp.hpp"
#include "morse/train_dash.hpp"
#include "test_util.hpp"

using namespace morse;
using Eigen::Vector2d;

namespace {

double weighted_output(const Mlp& net, const Matrix& input, const Matrix& weights) {
    return (mlp_infer(net, input).array() * weights.array()).sum();
}

}  // namespace

TEST_CASE("analytic Gaussian denoiser examples") {
    const auto one = test::one_step_schedule(0.8);
    const GaussianDataSpec unit(Vector::Zero(1), Matrix::Identity(1, 1));
    CHECK(analytic_gaussian_eps(Vector::Constant(1, 1.0), 1, unit, one)(0, 0) == doctest::Approx(0.6).epsilon(1e-14));

    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    const Vector mu = Vector2d(2.0, -1.0);
    const GaussianDataSpec point(mu, Matrix::Zero(2, 2));
    const Vector x = Vector2d(0.3, 0.7);
    const Vector expected = (x - s.alpha(400) * mu) / s.sigma(400);
    CHECK(test::max_abs(analytic_gaussian_eps(x, 400, point, s), expected) < 1e-12);

    const GaussianDataSpec iso(mu, 0.7 * Matrix::Identity(2, 2));
    CHECK(analytic_gaussian_eps((s.alpha(250) * mu).eval(), 250, iso, s).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(analytic_gaussian_eps(x, 0, iso, s), SingularityError);
}

TEST_CASE("Gaussian data spec validation") {
    Matrix asym(2, 2);
    asym << 1.0, 0.5, 0.0, 1.0;
    CHECK_THROWS(GaussianDataSpec(Vector::Zero(2), asym));
    CHECK_THROWS(GaussianDataSpec(Vector::Zero(2), -Matrix::Identity(2, 2)));
    CHECK_THROWS(GaussianDataSpec(Vector::Zero(3), Matrix::Identity(2, 2)));
}

TEST_CASE("analytic denoiser is the conditional expectation of the noise") {
    // 1-D: bin x_t and compare the empirical mean of eps per bin with the closed form at the bin centre.
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    const int t = 200;
    const GaussianDataSpec spec(Vector::Constant(1, 0.5), Matrix::Constant(1, 1, 0.8));
    NoiseStream rng(31);
    const int n = 100000;
    const double lo = -1.0, width = 0.1;
    const int bins = 20;
    std::vector<double> sum(bins, 0.0), sum_sq(bins, 0.0), centre_x(bins, 0.0);
    std::vector<int> count(bins, 0);
    for (int i = 0; i < n; ++i) {
        const double x0 = 0.5 + std::sqrt(0.8) * rng.normal();
        const double eps = rng.normal();
        const double xt = s.alpha(t) * x0 + s.sigma(t) * eps;
        const int b = static_cast<int>(std::floor((xt - lo) / width));
        if (b < 0 || b >= bins) continue;
        sum[b] += eps;
        sum_sq[b] += eps * eps;
        centre_x[b] += xt;
        ++count[b];
    }
    int tested = 0;
    for (int b = 0; b < bins; ++b) {
        if (count[b] < 500) continue;
        const double mean = sum[b] / count[b];
        const double var = sum_sq[b] / count[b] - mean * mean;
        const double xbar = centre_x[b] / count[b];
        // eps_hat is affine in x_t, so its bin average equals its value at the bin's mean x_t.
        const double predicted = analytic_gaussian_eps(Vector::Constant(1, xbar), t, spec, s)(0, 0);
        CHECK(std::abs(mean - predicted) < 3 * std::sqrt(var / count[b]));
        ++tested;
    }
    CHECK(tested >= 10);
}

TEST_CASE("analytic Dash evaluates mixed timesteps per column") {
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    const auto data = make_anisotropic_gaussian();
    const AnalyticGaussianDash dash(*data->gaussian(), s);
    NoiseStream rng(4);
    const Matrix x = rng.normal(2, 3);
    const std::vector<int> ts{10, 500, 10};
    const Matrix z = dash.estimate(x, std::span<const int>(ts));
    for (int j = 0; j < 3; ++j) CHECK(z.col(j) == dash.estimate(Matrix(x.col(j)), ts[j]));
    CHECK(dash.estimate(x, 77) == dash.estimate(x, 77));
    CHECK_THROWS_AS(dash.estimate(rng.normal(3, 2), 5), ShapeError);
}

TEST_CASE("sinusoidal time embedding") {
    const Vector e0 = sinusoidal_time_embed(0, 8, 1000);
    for (int j = 0; j < 8; ++j) CHECK(e0[j] == (j % 2 == 0 ? 0.0 : 1.0));
    const Vector e = sinusoidal_time_embed(1000, 4, 1000);
    CHECK(e[0] == doctest::Approx(0.8268795405320025).epsilon(1e-12));
    CHECK(e[1] == doctest::Approx(0.5623790762907029).epsilon(1e-12));
    CHECK(e[2] == doctest::Approx(0.09983341664682815).epsilon(1e-12));
    CHECK(e[3] == doctest::Approx(0.9950041652780258).epsilon(1e-12));
    for (int t = 0; t <= 1000; t += 37) CHECK(sinusoidal_time_embed(t, 32, 1000).cwiseAbs().maxCoeff() <= 1.0);
    CHECK_THROWS_AS(sinusoidal_time_embed(3, 5, 1000), ConfigError);
}

TEST_CASE("mlp forward examples") {
    NoiseStream rng(9);
    Mlp zero({{Matrix::Zero(4, 3), Vector::Zero(4)}, {Matrix::Zero(2, 4), Vector::Zero(2)}}, Activation::SiLU);
    CHECK(mlp_infer(zero, rng.normal(3, 5)).isZero(0.0));

    const Matrix w = rng.normal(2, 3);
    const Vector b = rng.normal(2);
    const Mlp linear({{w, b}}, Activation::Identity);
    const Matrix in = rng.normal(3, 4);
    CHECK(mlp_infer(linear, in) == Matrix((w * in).colwise() + b));

    const Mlp net = Mlp::random({5, 16, 16, 2}, Activation::Tanh, rng);
    const Matrix x = rng.normal(5, 7);
    CHECK(mlp_infer(net, x) == mlp_infer(net, x));
    CHECK(mlp_forward(net, x).first == mlp_infer(net, x));
    CHECK_THROWS_AS(mlp_infer(net, rng.normal(4, 2)), ShapeError);
}

TEST_CASE("mlp backprop examples") {
    NoiseStream rng(10);
    const Mlp net = Mlp::random({3, 8, 2}, Activation::SiLU, rng);
    const Matrix x = rng.normal(3, 4);
    auto [y, tape] = mlp_forward(net, x);
    const MlpGradients zero = mlp_backprop(net, tape, Matrix::Zero(2, 4));
    CHECK(zero.pack().isZero(0.0));

    const Mlp linear({{rng.normal(2, 3), rng.normal(2)}}, Activation::Identity);
    auto [ly, ltape] = mlp_forward(linear, x);
    const MlpGradients g = mlp_backprop(linear, ltape, ly);  // L = 0.5 |y|^2
    CHECK(test::max_abs(g.layers[0].weight, ly * x.transpose()) < 1e-13);
    CHECK(test::max_abs(g.layers[0].bias, ly.rowwise().sum()) < 1e-13);
}

TEST_CASE("stale tapes are rejected") {
    NoiseStream rng(12);
    Mlp net = Mlp::random({3, 4, 2}, Activation::SiLU, rng);
    const Mlp other = Mlp::random({3, 4, 2}, Activation::SiLU, rng);
    auto [y, tape] = mlp_forward(net, rng.normal(3, 2));
    CHECK_THROWS_AS(mlp_backprop(other, tape, y), ContractError);
    net.unpack(net.pack());
    CHECK_THROWS_AS(mlp_backprop(net, tape, y), ContractError);
}

TEST_CASE("mlp gradients match central differences") {
    for (Activation act : {Activation::SiLU, Activation::Tanh, Activation::ReLU}) {
        CAPTURE(to_string(act));
        NoiseStream rng(20);
        Mlp net = Mlp::random({4, 12, 12, 3}, act, rng);
        const Matrix x = rng.normal(4, 5);
        const Matrix w = rng.normal(3, 5);
        auto [y, tape] = mlp_forward(net, x);
        const MlpGradients g = mlp_backprop(net, tape, w);
        Mlp probe = net;
        const auto r = test::finite_difference_check(net.pack(), g.pack(), [&](const Vector& p) {
            probe.unpack(p);
            return weighted_output(probe, x, w);
        });
        CHECK(r.max_rel_error < 1e-5);

        Vector xin = x.reshaped();
        const auto ri = test::finite_difference_check(xin, g.input.reshaped(), [&](const Vector& p) {
            return weighted_output(net, p.reshaped(4, 5), w);
        });
        CHECK(ri.max_rel_error < 1e-5);
    }
}

TEST_CASE("adam update examples") {
    AdamConfig cfg;
    cfg.lr = 0.1;
    AdamState zero(3, cfg);
    Vector p = Vector::Constant(3, 0.25);
    zero.update(p, Vector::Zero(3));
    CHECK(p == Vector::Constant(3, 0.25));

    AdamState first(3, cfg);
    Vector q = Vector::Zero(3);
    first.update(q, (Vector(3) << 5.0, -0.3, 1e3).finished());
    CHECK(q[0] == doctest::Approx(-0.1).epsilon(1e-6));
    CHECK(q[1] == doctest::Approx(0.1).epsilon(1e-6));
    CHECK(q[2] == doctest::Approx(-0.1).epsilon(1e-6));

    // Two steps with g = 1: both bias-corrected updates equal lr / (1 + eps).
    AdamState two(1, cfg);
    Vector r = Vector::Zero(1);
    two.update(r, Vector::Ones(1));
    two.update(r, Vector::Ones(1));
    CHECK(r[0] == doctest::Approx(-0.19999999799999935).epsilon(1e-14));
    CHECK(two.step() == 2);
    CHECK_THROWS_AS(two.update(r, Vector::Ones(2)), ShapeError);
}

TEST_CASE("train_dash overfits a single point and is deterministic") {
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    const auto data = make_point_mass(Vector2d(1.0, -2.0));
    MlpDenoiserShape shape;
    shape.hidden = {64, 64};
    TrainConfig cfg;
    cfg.iterations = 2000;
    cfg.batch = 128;
    cfg.seed = 3;
    NoiseStream init(1);
    MlpDenoiser a = MlpDenoiser::random(shape, 1000, init);
    MlpDenoiser b = a;
    const TrainReport ra = train_dash(*data, s, a, cfg);
    const TrainReport rb = train_dash(*data, s, b, cfg);
    CHECK(ra.loss == rb.loss);
    CHECK(a.net().pack() == b.net().pack());
    auto window = [](const std::vector<double>& l, std::size_t from, std::size_t n) {
        double acc = 0.0;
        for (std::size_t i = from; i < from + n; ++i) acc += l[i];
        return acc / static_cast<double>(n);
    };
    CHECK(window(ra.loss, ra.loss.size() - 100, 100) < 0.05 * window(ra.loss, 0, 10));
}

TEST_CASE("train_dash on N(0, I) approaches the analytic denoiser") {
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    const auto data = make_isotropic_gaussian(2);
    TrainConfig cfg;
    cfg.seed = 5;
    NoiseStream init(2);
    MlpDenoiser net = MlpDenoiser::random(MlpDenoiserShape{}, 1000, init);
    train_dash(*data, s, net, cfg);

    const AnalyticGaussianDash exact(*data->gaussian(), s);
    NoiseStream probe(99);
    const int n = 2000;
    std::vector<int> ts(n);
    for (auto& t : ts) t = probe.uniform_int(1, 1000);
    Matrix x(2, n);
    for (int j = 0; j < n; ++j) x.col(j) = forward_diffuse(probe.normal(2), ts[j], probe.normal(2), s);
    const double mse = mse_loss(net.estimate(x, std::span<const int>(ts)), exact.estimate(x, std::span<const int>(ts)));
    CHECK(mse < 0.05);
}

TEST_CASE("train_dash loss falls on the ring mixture") {
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    const RingMixture data;
    TrainConfig cfg;
    cfg.iterations = 1000;
    cfg.seed = 6;
    NoiseStream init(6);
    MlpDenoiser net = MlpDenoiser::random(MlpDenoiserShape{}, 1000, init);
    const TrainReport r = train_dash(data, s, net, cfg);
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 100; ++i) {
        first += r.loss[static_cast<std::size_t>(i)];
        last += r.loss[r.loss.size() - 100 + static_cast<std::size_t>(i)];
    }
    CHECK(last < 0.75 * first);
    CHECK(last / 100.0 < 0.45);
}

TEST_CASE("mse loss and its gradient") {
    const Matrix p = (Matrix(2, 2) << 1, 2, 3, 4).finished();
    const Matrix t = Matrix::Zero(2, 2);
    Matrix g;
    CHECK(mse_loss(p, t, &g) == doctest::Approx(7.5));
    CHECK(g == p / 2.0);
}

TEST_CASE("datasets") {
    NoiseStream rng(1);
    const RingMixture ring;
    const Matrix x = ring.sample(4000, rng);
    CHECK(x.rows() == 2);
    const Vector r = x.colwise().norm();
    CHECK(r.mean() == doctest::Approx(4.0).epsilon(0.02));
    const auto aniso = make_anisotropic_gaussian();
    CHECK(aniso->gaussian()->mu == Vector2d(1.0, -1.0));
    CHECK(aniso->gaussian()->cov.diagonal() == Vector2d(0.5, 2.0));
    const auto pm = make_point_mass(Vector2d(3, 4));
    CHECK(pm->sample(5, rng) == Matrix(Vector2d(3, 4).replicate(1, 5)));
}
