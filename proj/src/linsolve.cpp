#include "coverlab/linsolve.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <algorithm>

#include "coverlab/errors.hpp"

namespace coverlab {

namespace {

double relative_residual(const Eigen::SparseMatrix<double>& A, const Eigen::MatrixXd& X, const Eigen::MatrixXd& B) {
  const Eigen::MatrixXd R = A * X - B;
  const double scale = std::max(1.0, B.cwiseAbs().maxCoeff());
  return R.size() ? R.cwiseAbs().maxCoeff() / scale : 0.0;
}

}  // namespace

Eigen::MatrixXd solve_sparse(const Eigen::SparseMatrix<double>& A, const Eigen::MatrixXd& B, bool symmetric,
                             SolveInfo* info) {
  if (A.rows() != A.cols() || A.rows() != B.rows()) throw NumericalError("solve_sparse: shape mismatch");
  SolveInfo local;
  Eigen::MatrixXd X(B.rows(), B.cols());
  if (A.rows() == 0) return X;
  if (A.rows() < kDenseSolveLimit) {
    local.dense = true;
    const Eigen::MatrixXd D(A);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(D);
    X = lu.solve(B);
    // One step of iterative refinement keeps the residual at the 1e-10 level for stiff systems.
    X += lu.solve(B - D * X);
  } else if (symmetric) {
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(kSolveTolerance * 1e-2);
    cg.setMaxIterations(std::max<int>(1000, static_cast<int>(20 * A.rows())));
    cg.compute(A);
    for (Eigen::Index c = 0; c < B.cols(); ++c) {
      X.col(c) = cg.solve(B.col(c));
      local.iterations = std::max<int>(local.iterations, static_cast<int>(cg.iterations()));
    }
  } else {
    Eigen::BiCGSTAB<Eigen::SparseMatrix<double>> bi;
    bi.setTolerance(kSolveTolerance * 1e-2);
    bi.setMaxIterations(std::max<int>(1000, static_cast<int>(20 * A.rows())));
    bi.compute(A);
    for (Eigen::Index c = 0; c < B.cols(); ++c) {
      X.col(c) = bi.solve(B.col(c));
      local.iterations = std::max<int>(local.iterations, static_cast<int>(bi.iterations()));
    }
  }
  local.residual = relative_residual(A, X, B);
  if (info) *info = local;
  if (!(local.residual <= kSolveTolerance)) throw NumericalError("linear solve residual " + std::to_string(local.residual) + " above tolerance");
  return X;
}

}  // namespace coverlab
