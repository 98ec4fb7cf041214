#pragma once
#include <Eigen/Dense>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "pim/errors.hpp"

namespace pim {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Symmetric real matrix. Construction symmetrizes (A + A^T)/2 so the
// upper and lower triangles always agree exactly.
class SymMatrix {
 public:
  explicit SymMatrix(const MatrixXd& a) {
    if (a.rows() != a.cols() || a.rows() < 1)
      throw DimensionMismatch("SymMatrix requires a square matrix, got " +
                              std::to_string(a.rows()) + "x" +
                              std::to_string(a.cols()));
    m_ = 0.5 * (a + a.transpose());
  }

  static SymMatrix identity(Eigen::Index d) { return SymMatrix(MatrixXd::Identity(d, d)); }
  static SymMatrix zero(Eigen::Index d) { return SymMatrix(MatrixXd::Zero(d, d)); }
  static SymMatrix diagonal(const VectorXd& d) {
    return SymMatrix(MatrixXd(d.asDiagonal()));
  }

  Eigen::Index dim() const { return m_.rows(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }
  const MatrixXd& mat() const { return m_; }
  double trace() const { return m_.trace(); }
  double frobenius() const { return m_.norm(); }

  SymMatrix operator+(const SymMatrix& o) const { return SymMatrix(m_ + o.m_); }
  SymMatrix operator-(const SymMatrix& o) const { return SymMatrix(m_ - o.m_); }
  SymMatrix scaled(double a) const { return SymMatrix(a * m_); }

 private:
  MatrixXd m_;
};

struct LoewnerReport {
  bool holds;
  double min_eigenvalue;  // of (B - A)
  double tolerance_used;  // absolute, after relative scaling
};

namespace detail {

// Lower Cholesky factor of a. Fails when a pivot drops at or below
// eps * trace / dim, which signals a singular or indefinite matrix.
inline MatrixXd cholesky_spd(const SymMatrix& a) {
  const Eigen::Index d = a.dim();
  const double pivot_floor =
      std::numeric_limits<double>::epsilon() * a.trace() / static_cast<double>(d);
  MatrixXd l = MatrixXd::Zero(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    double s = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) s -= l(j, k) * l(j, k);
    if (s <= pivot_floor)
      throw NotPositiveDefinite("pivot " + std::to_string(s) + " at column " +
                                std::to_string(j) + " below threshold " +
                                std::to_string(pivot_floor));
    l(j, j) = std::sqrt(s);
    for (Eigen::Index i = j + 1; i < d; ++i) {
      double t = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) t -= l(i, k) * l(j, k);
      l(i, j) = t / l(j, j);
    }
  }
  return l;
}

}  // namespace detail

// Solves A X = B for symmetric positive-definite A.
inline MatrixXd solve_spd(const SymMatrix& a, const MatrixXd& b) {
  if (b.rows() != a.dim())
    throw DimensionMismatch("solve_spd: A is " + std::to_string(a.dim()) +
                            "-dim but B has " + std::to_string(b.rows()) + " rows");
  const MatrixXd l = detail::cholesky_spd(a);
  MatrixXd y = l.triangularView<Eigen::Lower>().solve(b);
  return l.transpose().triangularView<Eigen::Upper>().solve(y);
}

inline VectorXd solve_spd(const SymMatrix& a, const VectorXd& b) {
  return VectorXd(solve_spd(a, MatrixXd(b)));
}

// Smallest eigenvalue via a symmetric eigensolve; real spectrum guaranteed.
inline double min_eigenvalue(const SymMatrix& a) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(a.mat(), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// Loewner comparison A <= B up to a relative tolerance. The tolerance is
// scaled by max(1, ||A||_F, ||B||_F) so comparisons behave uniformly across
// information matrices of very different magnitudes.
inline LoewnerReport loewner_leq(const SymMatrix& a, const SymMatrix& b,
                                 double rel_tol) {
  if (a.dim() != b.dim())
    throw DimensionMismatch("loewner_leq: dims " + std::to_string(a.dim()) +
                            " vs " + std::to_string(b.dim()));
  const double tol = rel_tol * std::max({1.0, a.frobenius(), b.frobenius()});
  const double lam = min_eigenvalue(b - a);
  return LoewnerReport{lam >= -tol, lam, tol};
}

// Text serialization: "dim=<d>" then d rows of d reals, 17 significant
// digits so round trips are value-exact.
inline void write_matrix_text(std::ostream& os, const MatrixXd& m) {
  os << "dim=" << m.rows() << "\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ' ';
      os << std::setprecision(17) << m(i, j);
    }
    os << "\n";
  }
}

inline MatrixXd read_matrix_text(std::istream& is) {
  std::string header;
  if (!std::getline(is, header) || header.rfind("dim=", 0) != 0)
    throw InvalidParameter("matrix text must start with dim=<d>");
  const long d = std::stol(header.substr(4));
  if (d < 1) throw InvalidParameter("matrix dim must be >= 1");
  MatrixXd m(d, d);
  for (long i = 0; i < d; ++i)
    for (long j = 0; j < d; ++j)
      if (!(is >> m(i, j))) throw InvalidParameter("truncated matrix text");
  return m;
}

}  // namespace pim
