#pragma once

// Dense linear-algebra helpers shared by the solvers.

#include <string>

#include <Eigen/Dense>

#include "deltavar/error.hpp"

namespace deltavar::detail {

/// Solves A x = b, throwing Degenerate when A is numerically singular.
inline Eigen::VectorXd solve_nonsingular(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                         const std::string& what) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  lu.setThreshold(1e-13);
  if (!lu.isInvertible()) {
    throw Error(ErrorCode::Degenerate,
                what + " is singular (rank " + std::to_string(lu.rank()) + " of " +
                    std::to_string(A.rows()) + ")");
  }
  return lu.solve(b);
}

/// Orthonormal basis of the numerical nullspace of A (columns), with the rank
/// cut at cutoff * σ_max.
inline Eigen::MatrixXd nullspace(const Eigen::MatrixXd& A, double cutoff = 1e-10) {
  const Eigen::Index cols = A.cols();
  if (A.rows() == 0) return Eigen::MatrixXd::Identity(cols, cols);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double smax = s.size() > 0 ? s(0) : 0.0;
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff * smax && s(i) > 0.0) ++rank;
  }
  return svd.matrixV().rightCols(cols - rank);
}

inline double max_abs(const Eigen::MatrixXd& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

}  // namespace deltavar::detail
