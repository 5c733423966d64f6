#pragma once
// Shared dense-matrix aliases.  Eigen supplies storage and vectorized kernels;
// all algorithmic math in this project is written out explicitly on top.

#include <Eigen/Dense>

namespace treeflow {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

}  // namespace treeflow
