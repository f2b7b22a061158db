#pragma once

#include <Eigen/Sparse>
#include <memory>
#include <string>

namespace pmfield {

// Column-compressed sparse storage throughout; symmetric matrices are passed
// around as their lower triangle (the upper part is ignored when present).
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

enum class Ordering { Amd, Natural };

// Sparse Cholesky factorization P Q P^T = L L^T of a symmetric positive
// definite matrix, with a fill-reducing (AMD) or natural ordering. Backed by
// a simplicial LDLT so indefiniteness is detected without square roots; the
// failing pivot is reported in the original index order. A pivot is accepted
// when it exceeds 1e-12 times the largest diagonal entry of Q.
class CholeskyFactor {
 public:
  explicit CholeskyFactor(const SpMat& q, Ordering ordering = Ordering::Amd);
  ~CholeskyFactor();
  CholeskyFactor(CholeskyFactor&&) noexcept;
  CholeskyFactor& operator=(CholeskyFactor&&) noexcept;
  CholeskyFactor(const CholeskyFactor&) = delete;
  CholeskyFactor& operator=(const CholeskyFactor&) = delete;

  // Refactorizes a matrix with the same sparsity pattern, reusing the
  // symbolic analysis. Throws NotPositiveDefinite like the constructor.
  void refactorize(const SpMat& q);

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;

  // 2 * sum(log diag L); invariant under the fill-reducing permutation.
  double logdet() const;

  int dim() const;

  // L such that P Q P^T = L L^T (diagonal scaled out of the LDLT form).
  SpMat lower_factor() const;

  // Permutation P as a vector: row i of P Q P^T is original index perm[i].
  Eigen::VectorXi permutation() const;

  // Number of structural nonzeros in L (fill-in diagnostics).
  long long lower_nnz() const;

  // x = P^T L^{-T} D^{-1/2} e for a standard normal vector e, so that
  // Var(x) = Q^{-1}. Used by sample_field.
  Eigen::VectorXd backsolve_standard_normals(const Eigen::VectorXd& e) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

CholeskyFactor factorize(const SpMat& q, Ordering ordering = Ordering::Amd);

// y = Q x for a symmetric Q stored as lower triangle (or full).
Eigen::VectorXd sym_multiply(const SpMat& q, const Eigen::VectorXd& x);

SpMat lower_triangle(const SpMat& full);
SpMat full_from_lower(const SpMat& lower);

// Plain coordinate text exchange format: a "# rows cols nnz" header line
// followed by zero-based "row col value" triplets.
void write_coord(const SpMat& m, const std::string& path);
SpMat read_coord(const std::string& path);

}  // namespace pmfield
