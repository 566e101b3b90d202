#include "adaptcar/sparse_factor.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "adaptcar/errors.hpp"

namespace adaptcar {

struct SparseCholesky::Impl {
  Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> llt;
};

SparseCholesky::SparseCholesky(const SparseMatrix& pattern)
    : impl_(std::make_unique<Impl>()) {
  impl_->llt.analyzePattern(pattern);
}

SparseCholesky::~SparseCholesky() = default;
SparseCholesky::SparseCholesky(SparseCholesky&&) noexcept = default;
SparseCholesky& SparseCholesky::operator=(SparseCholesky&&) noexcept = default;

SparseFactor SparseCholesky::factorize(const SparseMatrix& a) {
  auto& llt = impl_->llt;
  llt.factorize(a);
  if (llt.info() != Eigen::Success)
    throw NumericalError("sparse Cholesky: matrix is not positive definite");
  SparseFactor f;
  f.lower_ = llt.matrixL();
  f.lower_.makeCompressed();
  f.perm_ = llt.permutationP().indices();
  double ld = 0.0;
  for (Eigen::Index j = 0; j < f.lower_.cols(); ++j) {
    // Diagonal is the first stored entry of each column.
    double d = f.lower_.valuePtr()[f.lower_.outerIndexPtr()[j]];
    if (!(d > 0.0) || !std::isfinite(d))
      throw NumericalError("sparse Cholesky: non-positive pivot");
    ld += std::log(d);
  }
  f.log_det_ = 2.0 * ld;
  return f;
}

SparseFactor SparseFactor::of(const SparseMatrix& a) {
  SparseCholesky chol(a);
  return chol.factorize(a);
}

Vector SparseFactor::solve(const Vector& b) const {
  const Eigen::Index n = size();
  Vector pb(n);
  for (Eigen::Index i = 0; i < n; ++i) pb[perm_[i]] = b[i];
  lower_.triangularView<Eigen::Lower>().solveInPlace(pb);
  lower_.transpose().triangularView<Eigen::Upper>().solveInPlace(pb);
  Vector x(n);
  for (Eigen::Index i = 0; i < n; ++i) x[i] = pb[perm_[i]];
  return x;
}

Vector SparseFactor::transform_standard_normal(const Vector& z) const {
  Vector u = z;
  lower_.transpose().triangularView<Eigen::Upper>().solveInPlace(u);
  Vector x(size());
  for (Eigen::Index i = 0; i < size(); ++i) x[i] = u[perm_[i]];
  return x;
}

Vector SparseFactor::half_product(const Vector& x) const {
  Vector px(size());
  for (Eigen::Index i = 0; i < size(); ++i) px[perm_[i]] = x[i];
  return lower_.transpose() * px;
}

std::ptrdiff_t SparseFactor::SelectedInverse::position(Eigen::Index row,
                                                       Eigen::Index col) const {
  const auto& L = owner_->lower_;
  const int* outer = L.outerIndexPtr();
  const int* inner = L.innerIndexPtr();
  const int* begin = inner + outer[col];
  const int* end = inner + outer[col + 1];
  const int* it = std::lower_bound(begin, end, static_cast<int>(row));
  if (it == end || *it != row) return -1;
  return it - inner;
}

double SparseFactor::SelectedInverse::lookup(Eigen::Index pi, Eigen::Index pj) const {
  auto pos = pi >= pj ? position(pi, pj) : position(pj, pi);
  if (pos < 0) throw std::out_of_range("selected inverse: entry outside filled pattern");
  return values_[pos];
}

double SparseFactor::SelectedInverse::variance(Eigen::Index i) const {
  Eigen::Index p = owner_->perm_[i];
  return values_[owner_->lower_.outerIndexPtr()[p]];
}

double SparseFactor::SelectedInverse::covariance(Eigen::Index i, Eigen::Index j) const {
  return lookup(owner_->perm_[i], owner_->perm_[j]);
}

bool SparseFactor::SelectedInverse::has(Eigen::Index i, Eigen::Index j) const {
  Eigen::Index pi = owner_->perm_[i], pj = owner_->perm_[j];
  return (pi >= pj ? position(pi, pj) : position(pj, pi)) >= 0;
}

SparseFactor::SelectedInverse SparseFactor::selected_inverse() const {
  SelectedInverse s;
  s.owner_ = this;
  const auto& L = lower_;
  const int* outer = L.outerIndexPtr();
  const int* inner = L.innerIndexPtr();
  const double* val = L.valuePtr();
  s.values_.assign(L.nonZeros(), 0.0);

  for (Eigen::Index j = size() - 1; j >= 0; --j) {
    const int first = outer[j];
    const int last = outer[j + 1];
    const double ljj = val[first];
    // Off-diagonal entries of column j, bottom-up so each needed entry of a
    // later column already exists.
    for (int t = last - 1; t > first; --t) {
      const int i = inner[t];
      double acc = 0.0;
      for (int u = first + 1; u < last; ++u) acc += val[u] * s.lookup(inner[u], i);
      s.values_[t] = -acc / ljj;
    }
    double acc = 0.0;
    for (int u = first + 1; u < last; ++u) acc += val[u] * s.values_[u];
    s.values_[first] = 1.0 / (ljj * ljj) - acc / ljj;
  }
  return s;
}

}  // namespace adaptcar
