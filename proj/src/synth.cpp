#include "pmfield/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "pmfield/errors.hpp"
#include "pmfield/matern.hpp"

namespace pmfield {

namespace {

Eigen::MatrixXd dense_matern_chol(const std::vector<Station>& stations, double range,
                                  double sigma2) {
  const int n = static_cast<int>(stations.size());
  MaternParams params{sigma2, std::sqrt(8.0) / range, 1.0};
  Eigen::MatrixXd cov(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double dx = stations[i].x - stations[j].x;
      double dy = stations[i].y - stations[j].y;
      double value = matern_cov(std::hypot(dx, dy), params);
      cov(i, j) = value;
      cov(j, i) = value;
    }
    cov(i, i) += 1e-10 * sigma2;  // jitter against near-duplicate locations
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite(-1);
  return llt.matrixL();
}

}  // namespace

std::pair<Dataset, TruthRecord> simulate(const SimConfig& config) {
  if (config.stations <= 0 || config.days <= 0 || config.domain_km <= 0)
    throw ConfigError("SimConfig counts and domain size must be positive");
  if (config.stations > 3000) throw TooLarge("dense truth path supports at most 3000 stations");

  SimConfig cfg = config;
  if (cfg.beta.empty()) cfg.beta.assign(static_cast<size_t>(cfg.covariate_count), 1.0);
  if (static_cast<int>(cfg.beta.size()) != cfg.covariate_count)
    throw DimensionMismatch("beta length != covariate_count");

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, cfg.domain_km);

  Dataset raw;
  raw.covariate_names.reserve(static_cast<size_t>(cfg.covariate_count));
  for (int k = 0; k < cfg.covariate_count; ++k) raw.covariate_names.push_back("x" + std::to_string(k + 1));

  // Station layout: all uniform, or half in Gaussian clusters and half
  // uniform (dense urban networks next to sparsely monitored areas).
  const double l = cfg.domain_km;
  for (int s = 0; s < cfg.stations; ++s) {
    Station station;
    station.id = "s" + std::to_string(s + 1);
    raw.stations.push_back(station);
  }
  if (cfg.layout == StationLayout::Uniform) {
    for (auto& s : raw.stations) {
      s.x = uniform(rng);
      s.y = uniform(rng);
    }
  } else {
    int n_clustered = cfg.stations / 2;
    int n_centers = std::max(1, cfg.stations / 20);
    std::vector<std::pair<double, double>> centers;
    for (int c = 0; c < n_centers; ++c)
      centers.emplace_back(0.1 * l + 0.8 * uniform(rng), 0.1 * l + 0.8 * uniform(rng));
    double spread = l / 25.0;
    for (int s = 0; s < cfg.stations; ++s) {
      auto& st = raw.stations[s];
      if (s < n_clustered) {
        const auto& c = centers[s % n_centers];
        st.x = std::clamp(c.first + spread * normal(rng), 0.0, l);
        st.y = std::clamp(c.second + spread * normal(rng), 0.0, l);
      } else {
        st.x = uniform(rng);
        st.y = uniform(rng);
      }
    }
  }
  raw.stations = assign_regions(std::move(raw.stations), RegionGrid{cfg.region_cell_km, 0.0, 0.0});

  raw.observations.reserve(static_cast<size_t>(cfg.stations) * cfg.days);
  for (int t = 1; t <= cfg.days; ++t) {
    for (int s = 0; s < cfg.stations; ++s) {
      Observation o;
      o.station = s;
      o.day = t;
      o.aod = normal(rng);
      o.covariates.resize(static_cast<size_t>(cfg.covariate_count));
      for (auto& c : o.covariates) c = normal(rng);
      raw.observations.push_back(std::move(o));
    }
  }

  // Thresholds of 1 keep everything while compacting day and region indices.
  Dataset data = validate_dataset(raw, 1, 1);

  TruthRecord truth;
  truth.config = cfg;
  const int days = data.day_count;
  const int regions = data.region_count;
  truth.u.resize(days);
  truth.v.resize(days);
  for (int t = 0; t < days; ++t) {
    truth.u[t] = std::sqrt(cfg.sigma2_u) * normal(rng);
    truth.v[t] = std::sqrt(cfg.sigma2_v) * normal(rng);
  }

  if (cfg.truth == TruthKind::LmmTruth) {
    truth.g.resize(regions, days);
    truth.h.resize(regions, days);
    for (int t = 0; t < days; ++t) {
      for (int r = 0; r < regions; ++r) {
        truth.g(r, t) = std::sqrt(cfg.sigma2_g) * normal(rng);
        truth.h(r, t) = std::sqrt(cfg.sigma2_h) * normal(rng);
      }
    }
  } else {
    Eigen::MatrixXd l_gamma = dense_matern_chol(data.stations, cfg.range_gamma, cfg.sigma2_gamma);
    Eigen::MatrixXd l_psi = dense_matern_chol(data.stations, cfg.range_psi, cfg.sigma2_psi);
    const int n_s = static_cast<int>(data.stations.size());
    truth.gamma.resize(n_s, days);
    truth.psi.resize(n_s, days);
    Eigen::VectorXd e(n_s);
    for (int t = 0; t < days; ++t) {
      for (int i = 0; i < n_s; ++i) e[i] = normal(rng);
      truth.gamma.col(t) = l_gamma * e;
      for (int i = 0; i < n_s; ++i) e[i] = normal(rng);
      truth.psi.col(t) = l_psi * e;
    }
  }

  for (auto& o : data.observations) {
    double fixed = cfg.alpha;
    for (int k = 0; k < cfg.covariate_count; ++k) fixed += cfg.beta[static_cast<size_t>(k)] * o.covariates[static_cast<size_t>(k)];
    double icpt, slope;
    if (cfg.truth == TruthKind::LmmTruth) {
      int r = data.stations[o.station].region;
      icpt = truth.g(r, o.day - 1);
      slope = truth.h(r, o.day - 1);
    } else {
      icpt = truth.gamma(o.station, o.day - 1);
      slope = truth.psi(o.station, o.day - 1);
    }
    double eps = std::sqrt(cfg.sigma2_eps) * normal(rng);
    o.pm = fixed + truth.u[o.day - 1] + icpt +
           (cfg.beta_aod + truth.v[o.day - 1] + slope) * o.aod + eps;
  }

  return {std::move(data), std::move(truth)};
}

Eigen::MatrixXd dense_eta_covariance(const Dataset& data, ModelKind kind,
                                     const Eigen::VectorXd& theta) {
  const int n = static_cast<int>(data.n_obs());
  if (n > 1000) throw TooLarge("dense oracle supports at most 1000 observations");

  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n, n);
  if (kind == ModelKind::Lmm) {
    if (theta.size() != 5) throw DimensionMismatch("LMM theta must have 5 components");
    const double s2u = theta[0], s2v = theta[1], s2g = theta[2], s2h = theta[3], s2e = theta[4];
    for (int i = 0; i < n; ++i) {
      const auto& oi = data.observations[i];
      int ri = data.stations[oi.station].region;
      for (int j = 0; j <= i; ++j) {
        const auto& oj = data.observations[j];
        if (oi.day != oj.day) continue;
        double value = s2u + s2v * oi.aod * oj.aod;
        if (ri == data.stations[oj.station].region) value += s2g + s2h * oi.aod * oj.aod;
        if (i == j) value += s2e;
        cov(i, j) = value;
        cov(j, i) = value;
      }
    }
  } else {
    if (theta.size() != 7) throw DimensionMismatch("GMRF theta must have 7 components");
    SpdeParams gamma{theta[0], theta[1]};
    SpdeParams psi{theta[2], theta[3]};
    MaternParams m_gamma{gamma.sigma2(), gamma.kappa, 1.0};
    MaternParams m_psi{psi.sigma2(), psi.kappa, 1.0};
    const double s2u = theta[4], s2v = theta[5], s2e = theta[6];
    for (int i = 0; i < n; ++i) {
      const auto& oi = data.observations[i];
      const auto& si = data.stations[oi.station];
      for (int j = 0; j <= i; ++j) {
        const auto& oj = data.observations[j];
        if (oi.day != oj.day) continue;
        const auto& sj = data.stations[oj.station];
        double d = std::hypot(si.x - sj.x, si.y - sj.y);
        double value = s2u + s2v * oi.aod * oj.aod + matern_cov(d, m_gamma) +
                       oi.aod * oj.aod * matern_cov(d, m_psi);
        if (i == j) value += s2e;
        cov(i, j) = value;
        cov(j, i) = value;
      }
    }
  }
  return cov;
}

double dense_loglik_oracle(const Dataset& data, ModelKind kind, const Eigen::VectorXd& theta,
                           const Eigen::VectorXd& beta) {
  const int n = static_cast<int>(data.n_obs());
  if (n == 0) throw EmptyAfterFilter();
  const int p = data.covariate_count();
  if (beta.size() != p + 2) throw DimensionMismatch("beta length != p + 2");

  Eigen::VectorXd r(n);
  for (int i = 0; i < n; ++i) {
    const auto& o = data.observations[i];
    double mean = beta[0];
    for (int k = 0; k < p; ++k) mean += beta[1 + k] * o.covariates[static_cast<size_t>(k)];
    mean += beta[p + 1] * o.aod;
    r[i] = o.pm - mean;
  }

  Eigen::MatrixXd cov = dense_eta_covariance(data, kind, theta);
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite(-1);
  double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  double quad = r.dot(llt.solve(r));
  return -0.5 * (n * std::log(2.0 * M_PI) + logdet + quad);
}

}  // namespace pmfield
