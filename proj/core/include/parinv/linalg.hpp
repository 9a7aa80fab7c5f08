#pragma once

// Dense kernels for the regularized linear sub-problem
//
//     min_g  |A g - u|^2 + alpha <g, K g>,      K = R'R,
//
// written so that everything expensive happens on the n x n side. With
// C = A K^{-1} A' and B = I_n + C / alpha, the hat complement
// I_n - A (A'A + alpha K)^{-1} A' equals B^{-1}, the energy at the minimizer is
// u' B^{-1} u, and det(alpha^{-1} K^{-1/2} A'A K^{-1/2} + I_p) = det B.

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <memory>

namespace parinv {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Index = Eigen::Index;

/// Linear map A : R^p -> R^n held as a dense coefficient table.
class ForwardOperator {
 public:
  explicit ForwardOperator(Matrix coefficients);

  Index n() const noexcept { return a_.rows(); }
  Index p() const noexcept { return a_.cols(); }

  Vector apply(const Vector& g) const;
  Vector apply_transpose(const Vector& v) const;

  const Matrix& dense() const noexcept { return a_; }

 private:
  Matrix a_;
};

/// The Gram matrix K = R'R of the regularizer. R itself is never formed.
///
/// Non-identity Grams carry a sparse Cholesky factorization built once at
/// construction; copies share it read-only.
class RegularizerGram {
 public:
  static RegularizerGram identity(Index p);
  /// Throws FactorizationFailure if `gram` is not symmetric positive definite.
  static RegularizerGram from_sparse(SparseMatrix gram);

  Index p() const noexcept { return p_; }
  bool is_identity() const noexcept { return factor_ == nullptr; }

  /// g -> K g
  Vector apply(const Vector& g) const;
  /// b -> K^{-1} b
  Vector solve(const Vector& b) const;
  /// Returns W with W'W = rhs' K^{-1} rhs (W = L^{-1} P rhs for K = P'LL'P).
  Matrix whiten(const Matrix& rhs) const;
  /// Row form of whiten: returns whiten(rows')'.
  Matrix whiten_rows(const Matrix& rows) const;

  /// Assembled K; for the identity Gram this is the sparse identity.
  SparseMatrix matrix() const;

 private:
  struct Factor;
  RegularizerGram(Index p, std::shared_ptr<const Factor> factor)
      : p_(p), factor_(std::move(factor)) {}

  Index p_ = 0;
  std::shared_ptr<const Factor> factor_;
};

/// Cholesky factor of B = I_n + alpha^{-1} C with C = A K^{-1} A'.
struct LowRankFactor {
  double alpha = 1.0;
  Matrix chol_lower;  // B = L L'
  double logdet = 0.0;
  bool jittered = false;

  Index n() const noexcept { return chol_lower.rows(); }
  /// B^{-1} rhs
  Vector solve(const Vector& rhs) const;
  /// u' B^{-1} u
  double quadratic(const Vector& u) const;
  /// Explicit B^{-1}; only for the n x n selector formulas.
  Matrix inverse() const;
};

/// C = A K^{-1} A' (symmetric positive semidefinite, n x n). Independent of alpha.
Matrix coupling_matrix(const ForwardOperator& op, const RegularizerGram& gram);

/// Factorizes B = I + C / alpha. On Cholesky failure a diagonal jitter of
/// 1e-12 * trace(B) / n is added and the factorization retried once.
LowRankFactor factorize_low_rank(const Matrix& coupling, double alpha);
/// Same factor, obtained by orthogonal reductions of the whitened operator
/// without forming C. Slower, but B^{-1} stays accurate for tiny alpha.
LowRankFactor factorize_low_rank(const ForwardOperator& op, const RegularizerGram& gram,
                                 double alpha);

struct SolverOptions {
  double relative_tolerance = 1e-10;
  /// 0 selects the default cap of 50 * p iterations.
  Index max_iterations = 0;
};

struct SolveReport {
  Index iterations = 0;
  double relative_residual = 0.0;
};

/// g_min = (A'A + alpha K)^{-1} A'u by conjugate gradients, preconditioned
/// with alpha K through the cached Gram factorization.
Vector solve_regularized(const ForwardOperator& op, const RegularizerGram& gram, double alpha,
                         const Vector& u, const SolverOptions& options = {},
                         SolveReport* report = nullptr);

/// u' (I + alpha^{-1} A K^{-1} A')^{-1} u, i.e. |u - A g_min|^2 + alpha <g_min, K g_min>.
double misfit_quadratic(const ForwardOperator& op, const RegularizerGram& gram, double alpha,
                        const Vector& u);

/// log det(I_n + alpha^{-1} A K^{-1} A').
double logdet_term(const ForwardOperator& op, const RegularizerGram& gram, double alpha);

/// g -> (A'A + alpha K) g without forming A'A.
Vector apply_normal_operator(const ForwardOperator& op, const RegularizerGram& gram, double alpha,
                             const Vector& g);

}  // namespace parinv
