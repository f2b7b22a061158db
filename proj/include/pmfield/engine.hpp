#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "pmfield/sparse.hpp"

namespace pmfield {

// Rows [row_begin, row_end) of the observation vectors touch only latent
// columns [col_begin, col_end). Blocks are disjoint and ordered; they let the
// likelihood factorize day by day.
struct DayBlock {
  int row_begin = 0;
  int row_end = 0;
  int col_begin = 0;
  int col_end = 0;
};

// Prior precision of one latent block together with its log-determinant,
// supplied by the model builder (which can exploit structure such as SPDE
// blocks shared across days).
struct PriorBlock {
  std::shared_ptr<const SpMat> q;  // full symmetric storage
  double logdet = 0.0;
};

// y = X beta + B z + eps, with z ~ N(0, Qprior(theta)^{-1}) and
// eps ~ N(0, sigma2_eps(theta) I). Both the LMM and the GMRF instantiate
// this structure; they differ only in B and the prior.
struct LinearGaussianModel {
  Eigen::VectorXd y;
  Eigen::MatrixXd x;  // n x px fixed-effect design; px may be 0
  SpMat b;            // n x q latent design
  std::vector<DayBlock> blocks;  // empty means one block spanning everything
  std::function<std::vector<PriorBlock>(const Eigen::VectorXd&)> prior;
  std::function<double(const Eigen::VectorXd&)> sigma2_eps;
  int theta_dim = 0;

  int n() const { return static_cast<int>(y.size()); }
  int px() const { return static_cast<int>(x.cols()); }
  int q() const { return static_cast<int>(b.cols()); }
};

struct FitBounds {
  Eigen::VectorXd lower;  // natural scale, strictly positive
  Eigen::VectorXd upper;
};

struct FitOptions {
  int max_outer = 200;        // outer GLS/Nelder-Mead rounds
  double outer_tol = 1e-6;    // stop when the round improves loglik less
  int nm_max_evals = 500;     // per Nelder-Mead sweep
  double nm_ftol = 1e-8;      // simplex function-value spread
  double nm_step = 0.5;       // initial simplex step in log-theta
  std::string trace_csv;      // optional per-round trace output
};

struct FitConvergence {
  bool converged = false;
  int outer_rounds = 0;
  long evaluations = 0;
  std::string message;
};

struct FitResult {
  Eigen::VectorXd theta;
  Eigen::VectorXd beta;
  Eigen::VectorXd z_hat;
  double loglik = 0.0;
  FitConvergence convergence;
};

// Caches block slices of B, per-block cross products, and symbolic
// factorizations so repeated evaluations at new hyperparameters only pay the
// numeric work. Evaluations may run day blocks in parallel; results are
// reduced in a fixed order so they are deterministic.
class Evaluator {
 public:
  explicit Evaluator(const LinearGaussianModel& model);
  ~Evaluator();
  Evaluator(Evaluator&&) noexcept;

  // Exact marginal log-likelihood log N(y | X beta, sigma2 I + B Qp^-1 B').
  double loglik(const Eigen::VectorXd& theta, const Eigen::VectorXd& beta);

  // Same quantity via one joint factorization instead of per-block ones.
  double loglik_joint(const Eigen::VectorXd& theta, const Eigen::VectorXd& beta);

  // Posterior mean of the latent vector, Qpost^{-1} B' (y - X beta) / sigma2.
  Eigen::VectorXd posterior_mean(const Eigen::VectorXd& theta, const Eigen::VectorXd& beta);

  // Generalized-least-squares update of beta given theta.
  Eigen::VectorXd gls_beta(const Eigen::VectorXd& theta);

  const LinearGaussianModel& model() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

double marginal_loglik(const LinearGaussianModel& model, const Eigen::VectorXd& theta,
                       const Eigen::VectorXd& beta);

Eigen::VectorXd posterior_mean(const LinearGaussianModel& model, const Eigen::VectorXd& theta,
                               const Eigen::VectorXd& beta);

// Maximum marginal likelihood: alternates a GLS update of beta with a
// Nelder-Mead sweep over log(theta) until the outer improvement drops below
// outer_tol (or max_outer rounds). Never returns a loglik below the one at
// theta0. Throws NonFinite when the likelihood is not finite at theta0.
FitResult fit(const LinearGaussianModel& model, const Eigen::VectorXd& theta0,
              const FitBounds& bounds, const FitOptions& options = {});

}  // namespace pmfield
