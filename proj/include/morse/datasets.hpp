#pragma once

#include <memory>
#include <optional>
#include <string>

#include "morse/estimator.hpp"
#include "morse/random.hpp"
#include "morse/types.hpp"

namespace morse {

/// Source of clean training/target samples x_0.
class Dataset {
public:
    virtual ~Dataset() = default;
    virtual Index dim() const = 0;
    virtual std::string name() const = 0;
    virtual Matrix sample(Index count, NoiseStream& rng) const = 0;
    // Exact moments when the data law is Gaussian.
    virtual std::optional<GaussianDataSpec> gaussian() const { return std::nullopt; }
};

class GaussianDataset final : public Dataset {
public:
    GaussianDataset(GaussianDataSpec spec, std::string name = "gaussian");

    Index dim() const override { return spec_.dim(); }
    std::string name() const override { return name_; }
    Matrix sample(Index count, NoiseStream& rng) const override;
    std::optional<GaussianDataSpec> gaussian() const override { return spec_; }

private:
    GaussianDataSpec spec_;
    Matrix root_;  // symmetric square root of the covariance
    std::string name_;
};

/// Equal-weight isotropic Gaussian modes evenly spaced on a circle in the first two coordinates.
class RingMixture final : public Dataset {
public:
    RingMixture(int modes = 8, double radius = 4.0, double component_std = 0.3);

    Index dim() const override { return 2; }
    std::string name() const override { return "gmm8"; }
    Matrix sample(Index count, NoiseStream& rng) const override;

    const Matrix& centers() const { return centers_; }
    double component_std() const { return std_; }

private:
    Matrix centers_;  // 2 x modes
    double std_;
};

std::unique_ptr<Dataset> make_isotropic_gaussian(Index dim);
// N((1, -1), diag(0.5, 2.0)).
std::unique_ptr<Dataset> make_anisotropic_gaussian();
std::unique_ptr<Dataset> make_point_mass(Vector point);

}  // namespace morse
