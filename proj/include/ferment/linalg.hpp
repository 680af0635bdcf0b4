#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace ferment {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Index = Eigen::Index;

}  // namespace ferment
