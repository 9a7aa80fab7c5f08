#include "parinv/linalg.hpp"

#include "parinv/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <string>

namespace parinv {

namespace {

void require_length(const Vector& v, Index expected, const char* what) {
  if (v.size() != expected) {
    throw DimensionMismatch(std::string(what) + ": expected length " + std::to_string(expected) +
                            ", got " + std::to_string(v.size()));
  }
}

void require_positive_alpha(double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw std::invalid_argument("alpha must be positive and finite");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// ForwardOperator

ForwardOperator::ForwardOperator(Matrix coefficients) : a_(std::move(coefficients)) {
  if (a_.rows() < 1 || a_.cols() < 1) {
    throw DimensionMismatch("forward operator needs n >= 1 and p >= 1");
  }
}

Vector ForwardOperator::apply(const Vector& g) const {
  require_length(g, p(), "ForwardOperator::apply");
  return a_ * g;
}

Vector ForwardOperator::apply_transpose(const Vector& v) const {
  require_length(v, n(), "ForwardOperator::apply_transpose");
  return a_.transpose() * v;
}

// ---------------------------------------------------------------------------
// RegularizerGram

struct RegularizerGram::Factor {
  SparseMatrix gram;
  Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower> llt;
  SparseMatrix lower;  // L, column-major, diagonal first in each column
};

RegularizerGram RegularizerGram::identity(Index p) {
  if (p < 1) throw DimensionMismatch("regularizer dimension must be >= 1");
  return RegularizerGram(p, nullptr);
}

RegularizerGram RegularizerGram::from_sparse(SparseMatrix gram) {
  if (gram.rows() != gram.cols() || gram.rows() < 1) {
    throw DimensionMismatch("regularizer Gram must be square and non-empty");
  }
  auto factor = std::make_shared<Factor>();
  factor->gram = std::move(gram);
  factor->gram.makeCompressed();
  factor->llt.compute(factor->gram);
  if (factor->llt.info() != Eigen::Success) {
    throw FactorizationFailure("regularizer Gram is not positive definite");
  }
  factor->lower = factor->llt.matrixL();
  factor->lower.makeCompressed();
  const Index p = factor->gram.rows();
  return RegularizerGram(p, std::move(factor));
}

Vector RegularizerGram::apply(const Vector& g) const {
  require_length(g, p_, "RegularizerGram::apply");
  if (is_identity()) return g;
  return factor_->gram.selfadjointView<Eigen::Lower>() * g;
}

Vector RegularizerGram::solve(const Vector& b) const {
  require_length(b, p_, "RegularizerGram::solve");
  if (is_identity()) return b;
  return factor_->llt.solve(b);
}

Matrix RegularizerGram::whiten(const Matrix& rhs) const {
  if (rhs.rows() != p_) throw DimensionMismatch("RegularizerGram::whiten: row count != p");
  if (is_identity()) return rhs;
  return whiten_rows(rhs.transpose()).transpose();
}

Matrix RegularizerGram::whiten_rows(const Matrix& rows) const {
  if (rows.cols() != p_) throw DimensionMismatch("RegularizerGram::whiten_rows: column count != p");
  if (is_identity()) return rows;
  // Solve X L' = rows P' one column of L at a time; each update is a
  // contiguous axpy over the rows.
  Matrix x = rows * factor_->llt.permutationP().transpose();
  const SparseMatrix& l = factor_->lower;
  const int* outer = l.outerIndexPtr();
  const int* inner = l.innerIndexPtr();
  const double* values = l.valuePtr();
  for (Index j = 0; j < p_; ++j) {
    const int begin = outer[j];
    const int end = outer[j + 1];
    x.col(j) /= values[begin];
    for (int k = begin + 1; k < end; ++k) x.col(inner[k]) -= values[k] * x.col(j);
  }
  return x;
}

SparseMatrix RegularizerGram::matrix() const {
  if (!is_identity()) {
    // The factor holds the full symmetric matrix.
    return factor_->gram;
  }
  SparseMatrix eye(p_, p_);
  eye.setIdentity();
  return eye;
}

// ---------------------------------------------------------------------------
// LowRankFactor

Vector LowRankFactor::solve(const Vector& rhs) const {
  require_length(rhs, n(), "LowRankFactor::solve");
  Vector x = chol_lower.triangularView<Eigen::Lower>().solve(rhs);
  chol_lower.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
  return x;
}

double LowRankFactor::quadratic(const Vector& u) const {
  require_length(u, n(), "LowRankFactor::quadratic");
  const Vector y = chol_lower.triangularView<Eigen::Lower>().solve(u);
  return y.squaredNorm();
}

Matrix LowRankFactor::inverse() const {
  Matrix inv = Matrix::Identity(n(), n());
  chol_lower.triangularView<Eigen::Lower>().solveInPlace(inv);
  chol_lower.transpose().triangularView<Eigen::Upper>().solveInPlace(inv);
  return inv;
}

Matrix coupling_matrix(const ForwardOperator& op, const RegularizerGram& gram) {
  if (gram.p() != op.p()) throw DimensionMismatch("operator and regularizer disagree on p");
  const Index n = op.n();
  Matrix c = Matrix::Zero(n, n);
  if (gram.is_identity()) {
    c.selfadjointView<Eigen::Lower>().rankUpdate(op.dense());
  } else {
    c.selfadjointView<Eigen::Lower>().rankUpdate(gram.whiten_rows(op.dense()));
  }
  c.triangularView<Eigen::StrictlyUpper>() = c.transpose();
  return c;
}

LowRankFactor factorize_low_rank(const Matrix& coupling, double alpha) {
  require_positive_alpha(alpha);
  if (coupling.rows() != coupling.cols()) throw DimensionMismatch("coupling matrix not square");
  const Index n = coupling.rows();

  Matrix b = coupling / alpha;
  b.diagonal().array() += 1.0;

  LowRankFactor out;
  out.alpha = alpha;
  Eigen::LLT<Matrix> llt(b);
  if (llt.info() != Eigen::Success) {
    b.diagonal().array() += 1e-12 * b.trace() / static_cast<double>(n);
    llt.compute(b);
    if (llt.info() != Eigen::Success) {
      throw FactorizationFailure("I + C/alpha is numerically indefinite (alpha = " +
                                 std::to_string(alpha) + ")");
    }
    out.jittered = true;
  }
  out.chol_lower = llt.matrixL();
  out.logdet = 2.0 * out.chol_lower.diagonal().array().log().sum();
  if (!std::isfinite(out.logdet)) {
    throw FactorizationFailure("non-finite log-determinant");
  }
  return out;
}

LowRankFactor factorize_low_rank(const ForwardOperator& op, const RegularizerGram& gram,
                                 double alpha) {
  require_positive_alpha(alpha);
  if (gram.p() != op.p()) throw DimensionMismatch("operator and regularizer disagree on p");
  const Index n = op.n();
  const Index p = op.p();

  // B = S'S with S = [I; R_w / sqrt(alpha)], R_w the triangular factor of W.
  // Never forming W'W keeps B^{-1} accurate when C is nearly singular and
  // alpha is small.
  const Matrix w = gram.whiten_rows(op.dense()).transpose();
  Matrix top;
  if (p > n) {
    Eigen::HouseholderQR<Matrix> qr(w);
    top = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
  } else {
    top = w;
  }
  Matrix stacked(n + top.rows(), n);
  stacked.topRows(n).setIdentity();
  stacked.bottomRows(top.rows()) = top / std::sqrt(alpha);
  if (!stacked.allFinite()) throw FactorizationFailure("non-finite whitened operator");
  Eigen::HouseholderQR<Matrix> qr(stacked);
  Matrix upper = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
  for (Index i = 0; i < n; ++i) {
    if (upper(i, i) < 0.0) upper.row(i) *= -1.0;
  }

  LowRankFactor out;
  out.alpha = alpha;
  out.chol_lower = upper.transpose();
  out.logdet = 2.0 * out.chol_lower.diagonal().array().log().sum();
  if (!std::isfinite(out.logdet)) {
    throw FactorizationFailure("non-finite log-determinant");
  }
  return out;
}

Vector apply_normal_operator(const ForwardOperator& op, const RegularizerGram& gram, double alpha,
                             const Vector& g) {
  require_length(g, op.p(), "apply_normal_operator");
  if (gram.p() != op.p()) throw DimensionMismatch("operator and regularizer disagree on p");
  return op.dense().transpose() * (op.dense() * g) + alpha * gram.apply(g);
}

Vector solve_regularized(const ForwardOperator& op, const RegularizerGram& gram, double alpha,
                         const Vector& u, const SolverOptions& options, SolveReport* report) {
  require_positive_alpha(alpha);
  require_length(u, op.n(), "solve_regularized");
  if (gram.p() != op.p()) throw DimensionMismatch("operator and regularizer disagree on p");
  if (!u.allFinite()) throw std::invalid_argument("solve_regularized: data not finite");

  const Index p = op.p();
  const Index cap = options.max_iterations > 0 ? options.max_iterations : 50 * p;
  const Vector rhs = op.apply_transpose(u);
  const double rhs_norm = rhs.norm();

  Vector g = Vector::Zero(p);
  if (rhs_norm == 0.0) {
    if (report) *report = {};
    return g;
  }

  const double target = options.relative_tolerance * rhs_norm;
  Vector r = rhs;
  Vector z = gram.solve(r) / alpha;
  Vector dir = z;
  double rz = r.dot(z);
  Index it = 0;
  double res = r.norm();
  while (res > target) {
    if (it >= cap) {
      throw NonConvergence("conjugate gradients hit the iteration cap (" + std::to_string(cap) +
                           ") at relative residual " + std::to_string(res / rhs_norm));
    }
    const Vector q = apply_normal_operator(op, gram, alpha, dir);
    const double step = rz / dir.dot(q);
    g.noalias() += step * dir;
    r.noalias() -= step * q;
    z = gram.solve(r) / alpha;
    const double rz_next = r.dot(z);
    dir = z + (rz_next / rz) * dir;
    rz = rz_next;
    res = r.norm();
    ++it;
  }

  if (report) {
    report->iterations = it;
    report->relative_residual = (apply_normal_operator(op, gram, alpha, g) - rhs).norm() / rhs_norm;
  }
  return g;
}

double misfit_quadratic(const ForwardOperator& op, const RegularizerGram& gram, double alpha,
                        const Vector& u) {
  require_length(u, op.n(), "misfit_quadratic");
  return factorize_low_rank(op, gram, alpha).quadratic(u);
}

double logdet_term(const ForwardOperator& op, const RegularizerGram& gram, double alpha) {
  return factorize_low_rank(op, gram, alpha).logdet;
}

}  // namespace parinv
