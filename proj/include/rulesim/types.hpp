#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace rulesim {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Time-major batch tensor. Element t holds one column per trial
/// (features × trials), so a whole batch advances with one GEMM per step.
using Sequence = std::vector<Matrix>;

using Seed = std::uint64_t;

}  // namespace rulesim
