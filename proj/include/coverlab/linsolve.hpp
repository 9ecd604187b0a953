#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace coverlab {

struct SolveInfo {
  bool dense = false;
  int iterations = 0;
  double residual = 0.0;  // max-norm of A x - b, relative to max(1, |b|_inf)
};

inline constexpr int kDenseSolveLimit = 3000;
inline constexpr double kSolveTolerance = 1e-10;

// Solves A X = B for a nonsingular sparse A (dense LU below kDenseSolveLimit unknowns,
// conjugate gradients above when `symmetric`, BiCGSTAB otherwise). Throws NumericalError
// if the residual exceeds kSolveTolerance.
Eigen::MatrixXd solve_sparse(const Eigen::SparseMatrix<double>& A, const Eigen::MatrixXd& B, bool symmetric,
                             SolveInfo* info = nullptr);

}  // namespace coverlab
