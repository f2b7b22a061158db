#include "pmfield/engine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>

#include "pmfield/errors.hpp"
#include "pmfield/parallel.hpp"

namespace pmfield {

namespace {

constexpr int kDenseBlockLimit = 128;  // blocks at or below this use dense LLT
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct BlockData {
  DayBlock span;
  SpMat b;               // local rows x local cols
  SpMat btb;             // full symmetric B'B
  Eigen::MatrixXd btb_dense;  // only when the block takes the dense path
  Eigen::MatrixXd btx;   // q_t x px
  Eigen::VectorXd bty;   // q_t
  Eigen::MatrixXd xtx;   // px x px
  Eigen::VectorXd xty;   // px
  double yty = 0.0;
  int n_rows = 0;
  bool dense = false;
  std::optional<CholeskyFactor> factor;  // sparse path symbolic cache
};

// Per-block pieces of one likelihood evaluation, kept so GLS and the
// posterior mean can reuse the factorization-dependent solves.
struct BlockEval {
  double loglik = 0.0;
  Eigen::VectorXd w;  // Qpost^{-1} B'r
};

}  // namespace

struct Evaluator::Impl {
  LinearGaussianModel model;
  std::vector<BlockData> blocks;

  explicit Impl(const LinearGaussianModel& m) : model(m) {
    if (model.n() != model.x.rows() && model.px() > 0)
      throw DimensionMismatch("X rows != y length");
    if (model.n() < model.px()) throw DimensionMismatch("n must be >= number of fixed effects");
    if (model.b.rows() != model.n()) throw DimensionMismatch("B rows != y length");

    std::vector<DayBlock> spans = model.blocks;
    if (spans.empty()) spans.push_back({0, model.n(), 0, model.q()});
    validate_spans(spans);

    blocks.resize(spans.size());
    for (std::size_t i = 0; i < spans.size(); ++i) blocks[i].span = spans[i];

    slice_b(spans);
    for (auto& blk : blocks) precompute(blk);
  }

  void validate_spans(const std::vector<DayBlock>& spans) const {
    int row = 0, col = 0;
    for (const auto& s : spans) {
      if (s.row_begin != row || s.col_begin != col || s.row_end < s.row_begin ||
          s.col_end < s.col_begin)
        throw DimensionMismatch("day blocks must be contiguous and ordered");
      row = s.row_end;
      col = s.col_end;
    }
    if (row != model.n() || col != model.q())
      throw DimensionMismatch("day blocks must cover all rows and latent columns");
  }

  void slice_b(const std::vector<DayBlock>& spans) {
    // Column-major scan of B; each column belongs to exactly one block and
    // every nonzero row must fall inside that block's row range.
    std::vector<std::vector<Triplet>> triplets(spans.size());
    std::size_t blk_idx = 0;
    for (int col = 0; col < model.b.outerSize(); ++col) {
      while (blk_idx < spans.size() && col >= spans[blk_idx].col_end) ++blk_idx;
      std::size_t target = blk_idx < spans.size() ? blk_idx : spans.size() - 1;
      for (SpMat::InnerIterator it(model.b, col); it; ++it) {
        const auto& s = spans[target];
        if (it.row() < s.row_begin || it.row() >= s.row_end)
          throw DimensionMismatch("B has a nonzero outside its day block");
        triplets[target].emplace_back(static_cast<int>(it.row()) - s.row_begin,
                                      col - s.col_begin, it.value());
      }
    }
    for (std::size_t i = 0; i < spans.size(); ++i) {
      const auto& s = spans[i];
      blocks[i].b = SpMat(s.row_end - s.row_begin, s.col_end - s.col_begin);
      blocks[i].b.setFromTriplets(triplets[i].begin(), triplets[i].end());
      blocks[i].b.makeCompressed();
    }
  }

  void precompute(BlockData& blk) {
    const auto& s = blk.span;
    blk.n_rows = s.row_end - s.row_begin;
    const int q_t = s.col_end - s.col_begin;
    const int px = model.px();

    Eigen::VectorXd y_t = model.y.segment(s.row_begin, blk.n_rows);
    blk.yty = y_t.squaredNorm();
    if (px > 0) {
      Eigen::MatrixXd x_t = model.x.middleRows(s.row_begin, blk.n_rows);
      blk.xtx = x_t.transpose() * x_t;
      blk.xty = x_t.transpose() * y_t;
      blk.btx = blk.b.transpose() * x_t;
    } else {
      blk.xtx.resize(0, 0);
      blk.xty.resize(0);
      blk.btx.resize(q_t, 0);
    }
    blk.bty = blk.b.transpose() * y_t;

    if (q_t > 0) {
      SpMat bt = blk.b.transpose();
      blk.btb = (bt * blk.b).pruned(0.0);
      blk.btb.makeCompressed();
      blk.dense = q_t <= kDenseBlockLimit;
      if (blk.dense) blk.btb_dense = Eigen::MatrixXd(blk.btb);
    }
  }

  static void check_prior(const PriorBlock& prior, int q_t) {
    const int dim = prior.q ? static_cast<int>(prior.q->rows()) : 0;
    if (dim != q_t) throw DimensionMismatch("prior block dimension mismatch");
  }

  // r'r and B'r for the residual r = y - X beta restricted to the block.
  std::pair<double, Eigen::VectorXd> residual_pieces(const BlockData& blk,
                                                     const Eigen::VectorXd& beta) const {
    if (model.px() == 0) return {blk.yty, blk.bty};
    double rtr = blk.yty - 2.0 * beta.dot(blk.xty) + beta.dot(blk.xtx * beta);
    return {rtr, blk.bty - blk.btx * beta};
  }

  // One block's loglik contribution plus the solve needed downstream.
  BlockEval eval_block(BlockData& blk, const PriorBlock& prior, double sigma2,
                       const Eigen::VectorXd& beta, bool want_w) {
    const int q_t = static_cast<int>(blk.b.cols());
    auto [rtr, btr] = residual_pieces(blk, beta);
    BlockEval out;
    double ld_post = 0.0;
    double reduction = 0.0;  // (B'r)' Qpost^{-1} (B'r)

    if (q_t > 0) {
      if (blk.dense) {
        Eigen::MatrixXd qpost = Eigen::MatrixXd(*prior.q) + blk.btb_dense / sigma2;
        Eigen::LLT<Eigen::MatrixXd> llt(qpost);
        if (llt.info() != Eigen::Success) throw NotPositiveDefinite(blk.span.col_begin);
        ld_post = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        Eigen::VectorXd w = llt.solve(btr);
        reduction = btr.dot(w);
        if (want_w) out.w = std::move(w);
      } else {
        SpMat qpost = *prior.q + blk.btb * (1.0 / sigma2);
        if (blk.factor)
          blk.factor->refactorize(qpost);
        else
          blk.factor.emplace(qpost, Ordering::Amd);
        ld_post = blk.factor->logdet();
        Eigen::VectorXd w = blk.factor->solve(btr);
        reduction = btr.dot(w);
        if (want_w) out.w = std::move(w);
      }
    }

    double quad = std::max(rtr - reduction / sigma2, 0.0) / sigma2;
    out.loglik = -0.5 * blk.n_rows * std::log(2.0 * M_PI * sigma2) -
                 0.5 * (ld_post - prior.logdet) - 0.5 * quad;
    return out;
  }

  std::vector<PriorBlock> priors(const Eigen::VectorXd& theta) {
    std::vector<PriorBlock> out;
    if (model.prior) {
      out = model.prior(theta);
    } else {
      out.resize(blocks.size());
    }
    if (out.size() != blocks.size())
      throw DimensionMismatch("prior returned wrong number of blocks");
    for (std::size_t i = 0; i < blocks.size(); ++i)
      check_prior(out[i], static_cast<int>(blocks[i].b.cols()));
    return out;
  }

  double sigma2(const Eigen::VectorXd& theta) const {
    if (!model.sigma2_eps) throw ConfigError("model.sigma2_eps is not set");
    double s2 = model.sigma2_eps(theta);
    if (!(s2 > 0.0) || !std::isfinite(s2)) throw NonFinite("sigma2_eps(theta) must be positive");
    return s2;
  }

  void check_beta(const Eigen::VectorXd& beta) const {
    if (beta.size() != model.px()) throw DimensionMismatch("beta length != X columns");
  }
};

Evaluator::Evaluator(const LinearGaussianModel& model) : impl_(std::make_unique<Impl>(model)) {}
Evaluator::~Evaluator() = default;
Evaluator::Evaluator(Evaluator&&) noexcept = default;

const LinearGaussianModel& Evaluator::model() const { return impl_->model; }

double Evaluator::loglik(const Eigen::VectorXd& theta, const Eigen::VectorXd& beta) {
  impl_->check_beta(beta);
  auto priors = impl_->priors(theta);
  double s2 = impl_->sigma2(theta);
  std::vector<double> parts(impl_->blocks.size());
  parallel_for(static_cast<int>(impl_->blocks.size()), [&](int i) {
    parts[i] = impl_->eval_block(impl_->blocks[i], priors[i], s2, beta, false).loglik;
  });
  double total = 0.0;
  for (double part : parts) total += part;
  return total;
}

double Evaluator::loglik_joint(const Eigen::VectorXd& theta, const Eigen::VectorXd& beta) {
  impl_->check_beta(beta);
  auto priors = impl_->priors(theta);
  double s2 = impl_->sigma2(theta);
  const auto& model = impl_->model;
  const int n = model.n();
  const int q = model.q();

  // Assemble the full prior as one block-diagonal matrix and factorize both
  // it and the joint posterior precision.
  std::vector<Triplet> trip;
  for (std::size_t i = 0; i < impl_->blocks.size(); ++i) {
    const auto& span = impl_->blocks[i].span;
    if (!priors[i].q) continue;
    for (int k = 0; k < priors[i].q->outerSize(); ++k)
      for (SpMat::InnerIterator it(*priors[i].q, k); it; ++it)
        trip.emplace_back(static_cast<int>(it.row()) + span.col_begin,
                          static_cast<int>(it.col()) + span.col_begin, it.value());
  }
  SpMat qprior(q, q);
  qprior.setFromTriplets(trip.begin(), trip.end());

  Eigen::VectorXd r = model.y;
  if (model.px() > 0) r -= model.x * beta;

  double ld_prior = 0.0, ld_post = 0.0, reduction = 0.0;
  if (q > 0) {
    CholeskyFactor prior_factor(qprior, Ordering::Amd);
    ld_prior = prior_factor.logdet();
    SpMat bt = model.b.transpose();
    SpMat qpost = qprior + SpMat(bt * model.b) * (1.0 / s2);
    CholeskyFactor post_factor(qpost, Ordering::Amd);
    ld_post = post_factor.logdet();
    Eigen::VectorXd btr = bt * r;
    reduction = btr.dot(post_factor.solve(btr));
  }
  double quad = std::max(r.squaredNorm() - reduction / s2, 0.0) / s2;
  return -0.5 * n * std::log(2.0 * M_PI * s2) - 0.5 * (ld_post - ld_prior) - 0.5 * quad;
}

Eigen::VectorXd Evaluator::posterior_mean(const Eigen::VectorXd& theta,
                                          const Eigen::VectorXd& beta) {
  impl_->check_beta(beta);
  auto priors = impl_->priors(theta);
  double s2 = impl_->sigma2(theta);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(impl_->model.q());
  parallel_for(static_cast<int>(impl_->blocks.size()), [&](int i) {
    auto& blk = impl_->blocks[i];
    BlockEval eval = impl_->eval_block(blk, priors[i], s2, beta, true);
    if (eval.w.size() > 0)
      z.segment(blk.span.col_begin, blk.span.col_end - blk.span.col_begin) = eval.w / s2;
  });
  return z;
}

Eigen::VectorXd Evaluator::gls_beta(const Eigen::VectorXd& theta) {
  const auto& model = impl_->model;
  const int px = model.px();
  if (px == 0) return Eigen::VectorXd();
  auto priors = impl_->priors(theta);
  double s2 = impl_->sigma2(theta);

  std::vector<Eigen::MatrixXd> a_parts(impl_->blocks.size());
  std::vector<Eigen::VectorXd> b_parts(impl_->blocks.size());
  parallel_for(static_cast<int>(impl_->blocks.size()), [&](int i) {
    auto& blk = impl_->blocks[i];
    const int q_t = static_cast<int>(blk.b.cols());
    Eigen::MatrixXd a = blk.xtx;
    Eigen::VectorXd b = blk.xty;
    if (q_t > 0) {
      Eigen::MatrixXd rhs(q_t, px + 1);
      rhs.leftCols(px) = blk.btx;
      rhs.col(px) = blk.bty;
      Eigen::MatrixXd solved;
      if (blk.dense) {
        Eigen::MatrixXd qpost = Eigen::MatrixXd(*priors[i].q) + blk.btb_dense / s2;
        Eigen::LLT<Eigen::MatrixXd> llt(qpost);
        if (llt.info() != Eigen::Success) throw NotPositiveDefinite(blk.span.col_begin);
        solved = llt.solve(rhs);
      } else {
        SpMat qpost = *priors[i].q + blk.btb * (1.0 / s2);
        if (blk.factor)
          blk.factor->refactorize(qpost);
        else
          blk.factor.emplace(qpost, Ordering::Amd);
        solved = blk.factor->solve(rhs);
      }
      a -= blk.btx.transpose() * solved.leftCols(px) / s2;
      b -= blk.btx.transpose() * solved.col(px) / s2;
    }
    a_parts[i] = std::move(a);
    b_parts[i] = std::move(b);
  });

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(px, px);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(px);
  for (std::size_t i = 0; i < impl_->blocks.size(); ++i) {
    a += a_parts[i];
    b += b_parts[i];
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  if (ldlt.info() != Eigen::Success) throw NotPositiveDefinite(-1);
  return ldlt.solve(b);
}

double marginal_loglik(const LinearGaussianModel& model, const Eigen::VectorXd& theta,
                       const Eigen::VectorXd& beta) {
  Evaluator evaluator(model);
  return evaluator.loglik(theta, beta);
}

Eigen::VectorXd posterior_mean(const LinearGaussianModel& model, const Eigen::VectorXd& theta,
                               const Eigen::VectorXd& beta) {
  Evaluator evaluator(model);
  return evaluator.posterior_mean(theta, beta);
}

namespace {

struct NelderMeadResult {
  Eigen::VectorXd x;
  double f = kNegInf;
  long evaluations = 0;
};

// Box-constrained Nelder-Mead ascent on f (proposals are clamped into the
// box). Restarts once from the best vertex with a halved step.
NelderMeadResult nelder_mead_max(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x0, const Eigen::VectorXd& lo,
                                 const Eigen::VectorXd& hi, double step, double ftol,
                                 int max_evals) {
  const int dim = static_cast<int>(x0.size());
  NelderMeadResult result;
  result.x = x0;

  auto clamp = [&](Eigen::VectorXd x) {
    for (int i = 0; i < dim; ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
    return x;
  };

  long evals = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++evals;
    return f(x);
  };

  std::vector<Eigen::VectorXd> simplex;
  std::vector<double> value;
  auto init_simplex = [&](const Eigen::VectorXd& center, double s) {
    simplex.assign(1, clamp(center));
    value.assign(1, eval(simplex[0]));
    for (int i = 0; i < dim; ++i) {
      Eigen::VectorXd v = center;
      v[i] += (center[i] + s <= hi[i]) ? s : -s;
      simplex.push_back(clamp(v));
      value.push_back(eval(simplex.back()));
    }
  };

  init_simplex(x0, step);
  int restarts_left = 1;

  while (evals < max_evals) {
    // order: value[order[0]] best (largest)
    std::vector<int> order(simplex.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return value[a] > value[b]; });

    double best = value[order[0]];
    double worst = value[order[dim]];
    bool flat = std::isfinite(best) && std::isfinite(worst) && best - worst < ftol;
    if (flat) {
      if (restarts_left-- > 0) {
        Eigen::VectorXd center = simplex[order[0]];
        init_simplex(center, 0.5 * step);
        continue;
      }
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(dim);
    for (int i = 0; i < dim; ++i) centroid += simplex[order[i]];
    centroid /= dim;
    int iw = order[dim];

    Eigen::VectorXd reflected = clamp(centroid + (centroid - simplex[iw]));
    double fr = eval(reflected);
    if (fr > value[order[0]]) {
      Eigen::VectorXd expanded = clamp(centroid + 2.0 * (centroid - simplex[iw]));
      double fe = eval(expanded);
      if (fe > fr) {
        simplex[iw] = expanded;
        value[iw] = fe;
      } else {
        simplex[iw] = reflected;
        value[iw] = fr;
      }
    } else if (fr > value[order[dim - 1]]) {
      simplex[iw] = reflected;
      value[iw] = fr;
    } else {
      Eigen::VectorXd contracted = clamp(centroid + 0.5 * (simplex[iw] - centroid));
      double fc = eval(contracted);
      if (fc > value[iw]) {
        simplex[iw] = contracted;
        value[iw] = fc;
      } else {
        // shrink toward the best vertex
        for (std::size_t i = 0; i < simplex.size(); ++i) {
          if (static_cast<int>(i) == order[0]) continue;
          simplex[i] = clamp(simplex[order[0]] + 0.5 * (simplex[i] - simplex[order[0]]));
          value[i] = eval(simplex[i]);
        }
      }
    }
  }

  for (std::size_t i = 0; i < simplex.size(); ++i) {
    if (value[i] > result.f) {
      result.f = value[i];
      result.x = simplex[i];
    }
  }
  result.evaluations = evals;
  return result;
}

}  // namespace

FitResult fit(const LinearGaussianModel& model, const Eigen::VectorXd& theta0,
              const FitBounds& bounds, const FitOptions& options) {
  if (theta0.size() != model.theta_dim) throw DimensionMismatch("theta0 length != theta_dim");
  if (bounds.lower.size() != theta0.size() || bounds.upper.size() != theta0.size())
    throw DimensionMismatch("bounds length != theta_dim");
  if ((bounds.lower.array() <= 0).any()) throw ConfigError("bounds must be strictly positive");

  Evaluator evaluator(model);
  const int dim = static_cast<int>(theta0.size());

  Eigen::VectorXd lo = bounds.lower.array().log();
  Eigen::VectorXd hi = bounds.upper.array().log();
  Eigen::VectorXd u = theta0.array().log();
  for (int i = 0; i < dim; ++i) u[i] = std::clamp(u[i], lo[i], hi[i]);

  Eigen::VectorXd theta = u.array().exp();
  Eigen::VectorXd beta = evaluator.gls_beta(theta);
  double current = evaluator.loglik(theta, beta);
  if (!std::isfinite(current)) throw NonFinite("marginal likelihood not finite at theta0");

  FitResult best;
  best.theta = theta;
  best.beta = beta;
  best.loglik = current;

  std::ofstream trace;
  if (!options.trace_csv.empty()) {
    trace.open(options.trace_csv);
    trace.precision(12);
    trace << "round";
    for (int i = 0; i < dim; ++i) trace << ",theta" << i;
    trace << ",loglik\n";
    trace << 0;
    for (int i = 0; i < dim; ++i) trace << "," << theta[i];
    trace << "," << current << "\n";
  }

  long total_evals = 1;
  FitConvergence convergence;
  for (int round = 1; round <= options.max_outer; ++round) {
    convergence.outer_rounds = round;

    auto objective = [&](const Eigen::VectorXd& log_theta) -> double {
      try {
        double value = evaluator.loglik(log_theta.array().exp(), beta);
        return std::isfinite(value) ? value : kNegInf;
      } catch (const Error&) {
        return kNegInf;
      }
    };

    NelderMeadResult nm;
    if (dim > 0) {
      nm = nelder_mead_max(objective, u, lo, hi, options.nm_step, options.nm_ftol,
                           options.nm_max_evals);
      total_evals += nm.evaluations;
      u = nm.x;
      theta = u.array().exp();
    }

    Eigen::VectorXd new_beta = beta;
    try {
      new_beta = evaluator.gls_beta(theta);
    } catch (const Error&) {
      // keep the previous beta if the GLS system is ill-posed here
    }
    double updated = evaluator.loglik(theta, new_beta);
    total_evals += 1;

    if (std::isfinite(updated) && updated > best.loglik) {
      best.theta = theta;
      best.beta = new_beta;
      best.loglik = updated;
    }
    if (trace.is_open()) {
      trace << round;
      for (int i = 0; i < dim; ++i) trace << "," << theta[i];
      trace << "," << updated << "\n";
    }

    double improvement = updated - current;
    beta = new_beta;
    current = updated;
    if (dim == 0 || improvement < options.outer_tol) {
      convergence.converged = true;
      break;
    }
  }

  if (!convergence.converged)
    convergence.message = "reached max_outer rounds without meeting outer_tol";
  convergence.evaluations = total_evals;

  best.z_hat = evaluator.posterior_mean(best.theta, best.beta);
  best.convergence = convergence;
  return best;
}

}  // namespace pmfield
