#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "pmfield/mesh.hpp"
#include "pmfield/sparse.hpp"

namespace pmfield {

// Stationary isotropic Matern covariance parameters. nu is fixed to 1 in
// model use (SPDE order alpha = 2 in two dimensions) but matern_cov accepts
// any positive smoothness.
struct MaternParams {
  double sigma2 = 1.0;  // marginal variance
  double kappa = 1.0;   // inverse range, 1/km
  double nu = 1.0;      // smoothness
};

// SPDE parameterization of a nu = 1 Matern field on a mesh. The implied
// marginal variance is 1/(4 pi kappa^2 tau^2) and the implied range
// (correlation ~ 0.1 distance) is sqrt(8)/kappa.
struct SpdeParams {
  double kappa = 1.0;
  double tau = 1.0;

  static SpdeParams from_range_sigma(double range, double sigma);
  double range() const;
  double sigma2() const;
};

// sigma2 * 2^(1-nu)/Gamma(nu) * (kappa d)^nu K_nu(kappa d); sigma2 at d = 0.
double matern_cov(double d, const MaternParams& params);

// Q = tau^2 (kappa^4 C + 2 kappa^2 G + G C^{-1} G) with lumped mass C.
// Symmetric positive definite; pattern equals that of G C^{-1} G.
SpMat spde_precision(const FemMatrices& fem, const SpdeParams& params);

// Draws one zero-mean Gaussian vector with precision Q by back-substituting
// standard normals through a natural-ordering Cholesky factor. Deterministic
// for a given seed.
Eigen::VectorXd sample_field(const SpMat& q, std::uint64_t seed);

}  // namespace pmfield
