#pragma once

// Test-only oracles, independent of the library code paths they check.

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

namespace oracles {

// K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt by composite Simpson on a
// truncated interval. Good to ~1e-12 relative for x in [1e-3, 60], nu in
// [0, 3].
inline double bessel_k_quadrature(double nu, double x) {
  const double t_max = std::log(2.0 * (800.0 / x + 10.0));
  const int n = 40000;  // even
  const double step = t_max / n;
  auto f = [&](double t) { return std::exp(-x * std::cosh(t)) * std::cosh(nu * t); };
  double sum = f(0.0) + f(t_max);
  for (int i = 1; i < n; ++i) sum += f(i * step) * (i % 2 ? 4.0 : 2.0);
  return sum * step / 3.0;
}

// log N(y | mean, cov) by dense Cholesky.
inline double dense_mvn_loglik(const Eigen::VectorXd& y, const Eigen::VectorXd& mean,
                               const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw std::runtime_error("oracle covariance not SPD");
  Eigen::VectorXd r = y - mean;
  double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  double quad = r.dot(llt.solve(r));
  return -0.5 * (y.size() * std::log(2.0 * M_PI) + logdet + quad);
}

// Dense posterior mean (Qp + B'B/s2)^{ -1} B' r / s2.
inline Eigen::VectorXd dense_posterior_mean(const Eigen::MatrixXd& qprior,
                                            const Eigen::MatrixXd& b, const Eigen::VectorXd& r,
                                            double sigma2) {
  Eigen::MatrixXd qpost = qprior + b.transpose() * b / sigma2;
  return qpost.ldlt().solve(b.transpose() * r / sigma2);
}

// Squared circumradius test: is p strictly inside the circumcircle of
// (a, b, c)? Direct center construction, no orientation assumptions.
inline bool circumcircle_contains(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                                  const Eigen::Vector2d& c, const Eigen::Vector2d& p,
                                  double tol = 1e-9) {
  double d = 2.0 * (a.x() * (b.y() - c.y()) + b.x() * (c.y() - a.y()) + c.x() * (a.y() - b.y()));
  double ux = (a.squaredNorm() * (b.y() - c.y()) + b.squaredNorm() * (c.y() - a.y()) +
               c.squaredNorm() * (a.y() - b.y())) /
              d;
  double uy = (a.squaredNorm() * (c.x() - b.x()) + b.squaredNorm() * (a.x() - c.x()) +
               c.squaredNorm() * (b.x() - a.x())) /
              d;
  Eigen::Vector2d center(ux, uy);
  double r2 = (a - center).squaredNorm();
  return (p - center).squaredNorm() < r2 * (1.0 - tol);
}

// Random symmetric positive definite matrix A = M M' + dim * I.
inline Eigen::MatrixXd random_spd(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) m(i, j) = normal(rng);
  return m * m.transpose() + dim * Eigen::MatrixXd::Identity(dim, dim);
}

inline Eigen::VectorXd random_vector(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = normal(rng);
  return v;
}

}  // namespace oracles
