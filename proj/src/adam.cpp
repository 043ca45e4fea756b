#include "morse/adam.hpp"

#include <cmath>

#include "morse/errors.hpp"

namespace morse {

AdamState::AdamState(Index parameter_count, AdamConfig config)
    : config_(config), m_(Vector::Zero(parameter_count)), v_(Vector::Zero(parameter_count)) {
    if (!(config_.lr > 0.0) || !(config_.beta1 >= 0.0 && config_.beta1 < 1.0) ||
        !(config_.beta2 >= 0.0 && config_.beta2 < 1.0) || !(config_.eps > 0.0)) {
        throw ConfigError("adam: invalid hyperparameters");
    }
}

void AdamState::update(Vector& params, const Vector& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) throw ShapeError("adam: shape mismatch");
    ++step_;
    m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grads;
    v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grads.cwiseAbs2();
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    params.array() -= config_.lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.eps);
}

}  // namespace morse
