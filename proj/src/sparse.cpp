#include "pmfield/sparse.hpp"

#include <Eigen/SparseCholesky>
#include <cmath>
#include <fstream>
#include <limits>
#include <variant>
#include <vector>

#include "pmfield/errors.hpp"

namespace pmfield {

namespace {

using LdltAmd = Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>>;
using LdltNatural = Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::NaturalOrdering<int>>;

constexpr double kPivotTolerance = 1e-12;  // relative to the largest diagonal of Q

double max_diagonal(const SpMat& q) {
  double best = 0.0;
  for (int k = 0; k < q.outerSize(); ++k)
    for (SpMat::InnerIterator it(q, k); it; ++it)
      if (it.row() == it.col()) best = std::max(best, std::abs(it.value()));
  return best;
}

}  // namespace

struct CholeskyFactor::Impl {
  std::variant<LdltAmd, LdltNatural> solver;
  int dim = 0;

  explicit Impl(Ordering ordering) {
    if (ordering == Ordering::Natural) solver.emplace<LdltNatural>();
  }

  template <typename F>
  decltype(auto) visit(F&& f) const {
    return std::visit(std::forward<F>(f), solver);
  }
  template <typename F>
  decltype(auto) visit(F&& f) {
    return std::visit(std::forward<F>(f), solver);
  }

  void check_spd(const SpMat& q) {
    const double threshold = kPivotTolerance * max_diagonal(q);
    visit([&](auto& s) {
      if (s.info() != Eigen::Success) throw NotPositiveDefinite(-1);
      const auto& d = s.vectorD();
      for (int i = 0; i < d.size(); ++i) {
        if (!std::isfinite(d[i]) || d[i] <= threshold) {
          // report the pivot in original ordering
          throw NotPositiveDefinite(s.permutationPinv().indices()[i]);
        }
      }
    });
  }
};

CholeskyFactor::CholeskyFactor(const SpMat& q, Ordering ordering)
    : impl_(std::make_unique<Impl>(ordering)) {
  if (q.rows() != q.cols()) throw DimensionMismatch("factorize requires a square matrix");
  impl_->dim = static_cast<int>(q.rows());
  if (impl_->dim == 0) return;
  impl_->visit([&](auto& s) { s.compute(q); });
  impl_->check_spd(q);
}

CholeskyFactor::~CholeskyFactor() = default;
CholeskyFactor::CholeskyFactor(CholeskyFactor&&) noexcept = default;
CholeskyFactor& CholeskyFactor::operator=(CholeskyFactor&&) noexcept = default;

void CholeskyFactor::refactorize(const SpMat& q) {
  if (static_cast<int>(q.rows()) != impl_->dim)
    throw DimensionMismatch("refactorize dimension changed");
  if (impl_->dim == 0) return;
  impl_->visit([&](auto& s) { s.factorize(q); });
  impl_->check_spd(q);
}

Eigen::VectorXd CholeskyFactor::solve(const Eigen::VectorXd& b) const {
  if (b.size() != impl_->dim) throw DimensionMismatch("solve rhs length");
  if (impl_->dim == 0) return Eigen::VectorXd();
  return impl_->visit([&](const auto& s) -> Eigen::VectorXd { return s.solve(b); });
}

Eigen::MatrixXd CholeskyFactor::solve(const Eigen::MatrixXd& b) const {
  if (b.rows() != impl_->dim) throw DimensionMismatch("solve rhs rows");
  if (impl_->dim == 0) return Eigen::MatrixXd(0, b.cols());
  return impl_->visit([&](const auto& s) -> Eigen::MatrixXd { return s.solve(b); });
}

double CholeskyFactor::logdet() const {
  if (impl_->dim == 0) return 0.0;
  return impl_->visit(
      [](const auto& s) { return s.vectorD().array().log().sum(); });
}

int CholeskyFactor::dim() const { return impl_->dim; }

SpMat CholeskyFactor::lower_factor() const {
  if (impl_->dim == 0) return SpMat(0, 0);
  return impl_->visit([](const auto& s) -> SpMat {
    SpMat l = s.matrixL();
    Eigen::VectorXd root_d = s.vectorD().array().sqrt();
    return l * root_d.asDiagonal();
  });
}

Eigen::VectorXi CholeskyFactor::permutation() const {
  if (impl_->dim == 0) return Eigen::VectorXi();
  return impl_->visit([](const auto& s) -> Eigen::VectorXi {
    // permutationPinv().indices()[i] is the original index of permuted row i
    return s.permutationPinv().indices();
  });
}

long long CholeskyFactor::lower_nnz() const {
  if (impl_->dim == 0) return 0;
  return impl_->visit([](const auto& s) -> long long {
    SpMat l = s.matrixL();
    return l.nonZeros();
  });
}

Eigen::VectorXd CholeskyFactor::backsolve_standard_normals(const Eigen::VectorXd& e) const {
  if (e.size() != impl_->dim) throw DimensionMismatch("backsolve rhs length");
  if (impl_->dim == 0) return Eigen::VectorXd();
  return impl_->visit([&](const auto& s) -> Eigen::VectorXd {
    Eigen::VectorXd w = s.vectorD().array().rsqrt() * e.array();
    Eigen::VectorXd v = s.matrixU().solve(w);  // L^T v = w
    return s.permutationPinv() * v;
  });
}

CholeskyFactor factorize(const SpMat& q, Ordering ordering) {
  return CholeskyFactor(q, ordering);
}

Eigen::VectorXd sym_multiply(const SpMat& q, const Eigen::VectorXd& x) {
  if (q.rows() != x.size()) throw DimensionMismatch("sym_multiply size");
  return q.selfadjointView<Eigen::Lower>() * x;
}

SpMat lower_triangle(const SpMat& full) {
  return full.triangularView<Eigen::Lower>();
}

SpMat full_from_lower(const SpMat& lower) {
  SpMat full = lower.selfadjointView<Eigen::Lower>();
  return full;
}

void write_coord(const SpMat& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.precision(17);
  out << "# " << m.rows() << " " << m.cols() << " " << m.nonZeros() << "\n";
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it)
      out << it.row() << " " << it.col() << " " << it.value() << "\n";
  if (!out) throw IoError("write failed: " + path);
}

SpMat read_coord(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string hash;
  long long rows = 0, cols = 0, nnz = 0;
  in >> hash >> rows >> cols >> nnz;
  if (hash != "#" || rows < 0 || cols < 0) throw ParseError("bad coordinate header", 1);
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<size_t>(nnz));
  long long r, c;
  double v;
  while (in >> r >> c >> v) {
    if (r < 0 || r >= rows || c < 0 || c >= cols)
      throw ParseError("coordinate out of range", static_cast<int>(triplets.size()) + 2);
    triplets.emplace_back(static_cast<int>(r), static_cast<int>(c), v);
  }
  SpMat m(static_cast<int>(rows), static_cast<int>(cols));
  m.setFromTriplets(triplets.begin(), triplets.end());
  return m;
}

}  // namespace pmfield
