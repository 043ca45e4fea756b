#pragma once

#include <Eigen/Dense>

namespace morse {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Samples are columns. A single vector is a one-column batch.
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

enum class Executor { Dash, Dot };

inline const char* to_string(Executor e) { return e == Executor::Dash ? "dash" : "dot"; }

}  // namespace morse
