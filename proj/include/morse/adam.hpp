#pragma once

#include <cstdint>

#include "morse/types.hpp"

namespace morse {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam over a flat parameter vector.
class AdamState {
public:
    AdamState(Index parameter_count, AdamConfig config);

    const AdamConfig& config() const { return config_; }
    std::uint64_t step() const { return step_; }
    const Vector& first_moment() const { return m_; }
    const Vector& second_moment() const { return v_; }

    /// Advances one step in place.
    void update(Vector& params, const Vector& grads);

private:
    AdamConfig config_;
    std::uint64_t step_ = 0;
    Vector m_;
    Vector v_;
};

}  // namespace morse
