#include "morse/datasets.hpp"

#include <cmath>
#include <numbers>

namespace morse {

GaussianDataset::GaussianDataset(GaussianDataSpec spec, std::string name) : spec_(std::move(spec)), name_(std::move(name)) {
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(spec_.cov);
    const Vector root_vals = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    root_ = eig.eigenvectors() * root_vals.asDiagonal() * eig.eigenvectors().transpose();
}

Matrix GaussianDataset::sample(Index count, NoiseStream& rng) const {
    Matrix x = root_ * rng.normal(dim(), count);
    x.colwise() += spec_.mu;
    return x;
}

RingMixture::RingMixture(int modes, double radius, double component_std) : centers_(2, modes), std_(component_std) {
    if (modes < 1 || !(radius >= 0.0) || !(component_std >= 0.0)) throw ConfigError("ring mixture: invalid parameters");
    for (int k = 0; k < modes; ++k) {
        const double angle = 2.0 * std::numbers::pi * k / modes;
        centers_(0, k) = radius * std::cos(angle);
        centers_(1, k) = radius * std::sin(angle);
    }
}

Matrix RingMixture::sample(Index count, NoiseStream& rng) const {
    Matrix x(2, count);
    const int modes = static_cast<int>(centers_.cols());
    for (Index j = 0; j < count; ++j) {
        const int k = rng.uniform_int(0, modes - 1);
        const double u = rng.normal();
        const double v = rng.normal();
        x(0, j) = centers_(0, k) + std_ * u;
        x(1, j) = centers_(1, k) + std_ * v;
    }
    return x;
}

std::unique_ptr<Dataset> make_isotropic_gaussian(Index dim) {
    return std::make_unique<GaussianDataset>(GaussianDataSpec(Vector::Zero(dim), Matrix::Identity(dim, dim)),
                                             "gaussian_iso");
}

std::unique_ptr<Dataset> make_anisotropic_gaussian() {
    Vector mu(2);
    mu << 1.0, -1.0;
    Matrix cov = Matrix::Zero(2, 2);
    cov.diagonal() << 0.5, 2.0;
    return std::make_unique<GaussianDataset>(GaussianDataSpec(mu, cov), "gaussian_aniso");
}

std::unique_ptr<Dataset> make_point_mass(Vector point) {
    const Index d = point.size();
    return std::make_unique<GaussianDataset>(GaussianDataSpec(std::move(point), Matrix::Zero(d, d)), "point_mass");
}

}  // namespace morse
