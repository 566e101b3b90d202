#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <memory>
#include <vector>

namespace adaptcar {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

class SparseFactor;

/// Fill-reducing ordering computed once for a sparsity pattern, then reused for
/// every numeric factorization sharing that pattern. Not thread-safe: use one
/// instance per worker.
class SparseCholesky {
 public:
  explicit SparseCholesky(const SparseMatrix& pattern);
  ~SparseCholesky();
  SparseCholesky(SparseCholesky&&) noexcept;
  SparseCholesky& operator=(SparseCholesky&&) noexcept;

  /// Throws NumericalError when `a` is not positive definite.
  SparseFactor factorize(const SparseMatrix& a);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// A = P^T L L^T P for a symmetric positive definite A. Immutable value type;
/// safe to share across threads for concurrent solves.
class SparseFactor {
 public:
  /// One-shot factorization (analyses the pattern of `a`).
  static SparseFactor of(const SparseMatrix& a);

  Eigen::Index size() const { return lower_.rows(); }
  double log_determinant() const { return log_det_; }

  /// A^{-1} b.
  Vector solve(const Vector& b) const;
  /// P^T L^{-T} z: a draw from N(0, A^{-1}) when z is standard normal.
  Vector transform_standard_normal(const Vector& z) const;
  /// L^T P x; (x^T A x) equals the squared norm of the result.
  Vector half_product(const Vector& x) const;

  /// Entries of A^{-1} on the pattern of L (Takahashi recursion).
  class SelectedInverse {
   public:
    double variance(Eigen::Index i) const;
    /// Throws std::out_of_range when (i, j) lies outside the filled pattern.
    double covariance(Eigen::Index i, Eigen::Index j) const;
    bool has(Eigen::Index i, Eigen::Index j) const;

   private:
    friend class SparseFactor;
    const SparseFactor* owner_ = nullptr;
    std::vector<double> values_;
    double lookup(Eigen::Index pi, Eigen::Index pj) const;
    std::ptrdiff_t position(Eigen::Index row, Eigen::Index col) const;
  };
  /// The returned object refers back to this factor; keep the factor alive.
  SelectedInverse selected_inverse() const;

 private:
  friend class SparseCholesky;
  SparseMatrix lower_;                 // column-major, sorted row indices
  Eigen::VectorXi perm_;               // original index i -> permuted perm_[i]
  double log_det_ = 0.0;
};

}  // namespace adaptcar
