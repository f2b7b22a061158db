#include "pmfield/matern.hpp"

#include <cmath>
#include <random>

#include "pmfield/errors.hpp"

namespace pmfield {

SpdeParams SpdeParams::from_range_sigma(double range, double sigma) {
  if (range <= 0 || sigma <= 0) throw ConfigError("range and sigma must be > 0");
  SpdeParams p;
  p.kappa = std::sqrt(8.0) / range;
  p.tau = 1.0 / (2.0 * std::sqrt(M_PI) * p.kappa * sigma);
  return p;
}

double SpdeParams::range() const { return std::sqrt(8.0) / kappa; }

double SpdeParams::sigma2() const { return 1.0 / (4.0 * M_PI * kappa * kappa * tau * tau); }

double matern_cov(double d, const MaternParams& params) {
  if (params.sigma2 <= 0 || params.kappa <= 0 || params.nu <= 0)
    throw ConfigError("MaternParams must be positive");
  if (d < 0) throw ConfigError("distance must be >= 0");
  double x = params.kappa * d;
  // (x^nu K_nu(x)) -> Gamma(nu) 2^(nu-1) as x -> 0; below ~1e-8 the direct
  // product underflows/overflows before cancelling, so return the limit.
  if (x < 1e-8) return params.sigma2;
  double scale = std::pow(2.0, 1.0 - params.nu) / std::tgamma(params.nu);
  double value = params.sigma2 * scale * std::pow(x, params.nu) * std::cyl_bessel_k(params.nu, x);
  return std::max(value, 0.0);
}

SpMat spde_precision(const FemMatrices& fem, const SpdeParams& params) {
  if (params.kappa <= 0 || params.tau <= 0) throw ConfigError("SpdeParams must be positive");
  const auto m = fem.mass_lumped.size();
  if (fem.stiffness.rows() != m) throw DimensionMismatch("FEM matrices disagree on size");
  if ((fem.mass_lumped.array() <= 0).any()) throw ConfigError("lumped mass must be positive");

  Eigen::VectorXd inv_mass = fem.mass_lumped.cwiseInverse();
  SpMat g2 = fem.stiffness * inv_mass.asDiagonal() * fem.stiffness;

  const double k2 = params.kappa * params.kappa;
  const double t2 = params.tau * params.tau;
  SpMat c(m, m);
  c.reserve(Eigen::VectorXi::Constant(m, 1));
  for (Eigen::Index i = 0; i < m; ++i) c.insert(i, i) = fem.mass_lumped[i];
  c.makeCompressed();

  SpMat q = t2 * (k2 * k2 * c + 2.0 * k2 * fem.stiffness + g2);
  q.makeCompressed();
  return q;
}

Eigen::VectorXd sample_field(const SpMat& q, std::uint64_t seed) {
  // Natural ordering keeps the map from seed to sample independent of any
  // fill-reducing heuristic.
  CholeskyFactor factor(q, Ordering::Natural);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd e(q.rows());
  for (Eigen::Index i = 0; i < e.size(); ++i) e[i] = normal(rng);
  return factor.backsolve_standard_normals(e);
}

}  // namespace pmfield
