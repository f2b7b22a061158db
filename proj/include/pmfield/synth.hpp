#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "pmfield/dataset.hpp"
#include "pmfield/models.hpp"

namespace pmfield {

enum class TruthKind { GmrfTruth, LmmTruth };
enum class StationLayout { Uniform, Clustered };

// Ground-truth generator configuration. The gmrf-truth path samples the
// latent fields at station locations from the exact dense Matern covariance,
// deliberately bypassing the mesh/SPDE code path, so fits against it exercise
// the full approximation chain.
struct SimConfig {
  StationLayout layout = StationLayout::Uniform;
  int stations = 100;
  int days = 50;
  double domain_km = 100.0;
  TruthKind truth = TruthKind::GmrfTruth;

  double alpha = 10.0;
  std::vector<double> beta;  // covariate effects; filled with 1.0 when empty
  double beta_aod = 2.0;
  double sigma2_u = 1.0;
  double sigma2_v = 0.25;
  double sigma2_eps = 1.0;

  // lmm truth
  double sigma2_g = 1.0;
  double sigma2_h = 0.25;

  // gmrf truth (nu = 1 Matern at station locations)
  double range_gamma = 25.0;
  double sigma2_gamma = 1.0;
  double range_psi = 25.0;
  double sigma2_psi = 0.25;

  int covariate_count = 1;
  double region_cell_km = 25.0;
  std::uint64_t seed = 1;
};

struct TruthRecord {
  SimConfig config;
  Eigen::VectorXd u, v;        // day effects, length T
  Eigen::MatrixXd g, h;        // lmm truth: regions x days
  Eigen::MatrixXd gamma, psi;  // gmrf truth: stations x days
};

// Deterministic given the seed (bit-for-bit). Throws TooLarge above 3000
// stations (dense covariance path guard).
std::pair<Dataset, TruthRecord> simulate(const SimConfig& config);

// Brute-force Gaussian log-density of the PM vector under the stated model:
// builds the full dense n x n covariance of eta directly from the data fields
// (group identities for the LMM, the analytic Matern for the GMRF) and never
// touches the sparse engine. n <= 1000.
double dense_loglik_oracle(const Dataset& data, ModelKind kind, const Eigen::VectorXd& theta,
                           const Eigen::VectorXd& beta);

// The covariance matrix behind dense_loglik_oracle (test support).
Eigen::MatrixXd dense_eta_covariance(const Dataset& data, ModelKind kind,
                                     const Eigen::VectorXd& theta);

}  // namespace pmfield
