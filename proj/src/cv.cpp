#include "pmfield/cv.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "pmfield/errors.hpp"

namespace pmfield {

FoldPlan make_folds_kfold(const Dataset& data, int k, std::uint64_t seed) {
  const int n = static_cast<int>(data.n_obs());
  if (k < 2 || k > n) throw BadK("K must satisfy 2 <= K <= n");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (int i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<int> pick(0, i);
    std::swap(order[i], order[pick(rng)]);
  }

  FoldPlan plan;
  plan.scheme = "kfold";
  plan.k = k;
  plan.seed = seed;
  plan.folds.resize(k);
  // first n % k folds get one extra row
  int base = n / k, extra = n % k;
  int pos = 0;
  for (int f = 0; f < k; ++f) {
    int size = base + (f < extra ? 1 : 0);
    auto& fold = plan.folds[f];
    fold.test_rows.assign(order.begin() + pos, order.begin() + pos + size);
    std::sort(fold.test_rows.begin(), fold.test_rows.end());
    pos += size;
  }
  for (int f = 0; f < k; ++f) {
    auto& fold = plan.folds[f];
    std::set<int> test(fold.test_rows.begin(), fold.test_rows.end());
    fold.train_rows.reserve(n - test.size());
    for (int i = 0; i < n; ++i)
      if (!test.count(i)) fold.train_rows.push_back(i);
  }
  return plan;
}

FoldPlan make_folds_lpo_hblock(const Dataset& data, int p, double h, int n_iter,
                               std::uint64_t seed) {
  const int n_stations = static_cast<int>(data.stations.size());
  if (p < 1 || p >= n_stations) throw ConfigError("p must satisfy 1 <= p < station count");
  if (h < 0) throw ConfigError("h must be >= 0");
  if (n_iter < 1) throw ConfigError("n_iter must be >= 1");

  std::vector<std::vector<int>> station_rows(n_stations);
  for (std::size_t i = 0; i < data.observations.size(); ++i)
    station_rows[data.observations[i].station].push_back(static_cast<int>(i));

  FoldPlan plan;
  plan.scheme = "lpo_hblock";
  plan.p = p;
  plan.h = h;
  plan.n_iter = n_iter;
  plan.seed = seed;

  std::mt19937_64 rng(seed);
  for (int iter = 0; iter < n_iter; ++iter) {
    // Partial Fisher-Yates: the first p entries are the test sample. The
    // draw count does not depend on h, so plans with different h but the
    // same seed pick identical test stations.
    std::vector<int> order(n_stations);
    std::iota(order.begin(), order.end(), 0);
    for (int i = 0; i < p; ++i) {
      std::uniform_int_distribution<int> pick(i, n_stations - 1);
      std::swap(order[i], order[pick(rng)]);
    }
    std::vector<int> test(order.begin(), order.begin() + p);
    std::sort(test.begin(), test.end());

    Fold fold;
    std::set<int> test_set(test.begin(), test.end());
    for (int s : test) fold.test_stations.push_back(data.stations[s].id);

    std::vector<int> train;
    for (int s = 0; s < n_stations; ++s) {
      if (test_set.count(s)) continue;
      double min_dist = std::numeric_limits<double>::infinity();
      for (int t : test) {
        double dx = data.stations[s].x - data.stations[t].x;
        double dy = data.stations[s].y - data.stations[t].y;
        min_dist = std::min(min_dist, std::hypot(dx, dy));
      }
      if (min_dist < h)
        fold.dropped_stations.push_back(data.stations[s].id);
      else
        train.push_back(s);
    }
    if (train.empty())
      throw EmptyTrainSet("h = " + std::to_string(h) + " drops every training station");

    for (int s : train)
      fold.train_rows.insert(fold.train_rows.end(), station_rows[s].begin(),
                             station_rows[s].end());
    for (int s : test)
      fold.test_rows.insert(fold.test_rows.end(), station_rows[s].begin(),
                            station_rows[s].end());
    std::sort(fold.train_rows.begin(), fold.train_rows.end());
    std::sort(fold.test_rows.begin(), fold.test_rows.end());
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

double rmse(const std::vector<double>& yhat, const std::vector<double>& y) {
  if (yhat.size() != y.size() || y.empty())
    throw DimensionMismatch("rmse requires equal nonzero lengths");
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double d = yhat[i] - y[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(y.size()));
}

double r2(const std::vector<double>& yhat, const std::vector<double>& y) {
  if (yhat.size() != y.size()) throw DimensionMismatch("r2 requires equal lengths");
  if (y.size() < 2) throw DimensionMismatch("r2 requires length >= 2");
  double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double sse = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sse += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    sst += (y[i] - mean) * (y[i] - mean);
  }
  if (sst <= 0.0) throw DegenerateResponse();
  return 1.0 - sse / sst;
}

namespace {

double r2_corr(const std::vector<double>& yhat, const std::vector<double>& y) {
  double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double mf = std::accumulate(yhat.begin(), yhat.end(), 0.0) / static_cast<double>(yhat.size());
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sxy += (yhat[i] - mf) * (y[i] - my);
    sxx += (yhat[i] - mf) * (yhat[i] - mf);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return (sxy * sxy) / (sxx * syy);
}

}  // namespace

Dataset dataset_from_rows(const Dataset& data, const std::vector<int>& rows) {
  Dataset out;
  out.stations = data.stations;
  out.covariate_names = data.covariate_names;
  out.day_count = data.day_count;
  out.day_labels = data.day_labels;
  out.region_count = data.region_count;
  out.region_labels = data.region_labels;
  out.observations.reserve(rows.size());
  for (int r : rows) {
    if (r < 0 || r >= static_cast<int>(data.n_obs()))
      throw DimensionMismatch("fold row index out of range");
    out.observations.push_back(data.observations[r]);
  }
  return out;
}

namespace {

struct FoldData {
  Dataset train;
  Dataset test;
};

FoldData materialize_fold(const Dataset& data, const Fold& fold) {
  if (!fold.test_stations.empty()) {
    std::set<std::string> test(fold.test_stations.begin(), fold.test_stations.end());
    std::set<std::string> dropped(fold.dropped_stations.begin(), fold.dropped_stations.end());
    auto [train, test_data] = split_by_stations(data, test, dropped);
    return {std::move(train), std::move(test_data)};
  }
  return {dataset_from_rows(data, fold.train_rows), dataset_from_rows(data, fold.test_rows)};
}

}  // namespace

EvalReport run_cv(const Dataset& data, const std::vector<ModelKind>& kinds, const FoldPlan& plan,
                  const CvOptions& options) {
  if (kinds.empty()) throw ConfigError("run_cv needs at least one model kind");
  if (plan.folds.empty()) throw ConfigError("fold plan is empty");

  // One mesh for the whole domain, shared across folds and models: the mesh
  // is a discretization of space, not of the response.
  std::shared_ptr<const Mesh> mesh = options.mesh;
  if (!mesh && std::count(kinds.begin(), kinds.end(), ModelKind::Gmrf)) {
    double max_edge = options.mesh_max_edge > 0 ? options.mesh_max_edge
                                                : data.domain_diameter() / 40.0;
    mesh = std::make_shared<Mesh>(build_mesh(data.stations, options.mesh_buffer_fraction,
                                             max_edge));
  }

  EvalReport report;
  report.scheme = plan.scheme;
  report.seed = plan.seed;

  for (ModelKind kind : kinds) {
    ModelEval eval;
    eval.model = to_string(kind);

    std::vector<double> pooled_yhat, pooled_y;
    double weighted_mse = 0.0;
    long total_test = 0;
    double ratio_sum = 0.0;

    Eigen::VectorXd theta0;
    FitBounds bounds = default_bounds(kind, data);

    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
      try {
        FoldData fold = materialize_fold(data, plan.folds[f]);
        if (fold.train.n_obs() == 0) throw EmptyTrainSet("no training rows");
        if (fold.test.n_obs() == 0) throw ConfigError("no test rows");

        if (theta0.size() == 0 || !options.warm_start) {
          if (kind == ModelKind::Lmm)
            theta0 = options.theta0_lmm.value_or(default_theta0(kind, fold.train));
          else
            theta0 = options.theta0_gmrf.value_or(default_theta0(kind, fold.train));
        }

        FitOptions fit_options = options.fit_options;
        if (options.warm_start && f > 0) fit_options.nm_step = std::min(fit_options.nm_step, 0.2);

        FitResult fit_result;
        std::vector<PredictionRow> predictions;
        if (kind == ModelKind::Lmm) {
          LmmModel model = build_lmm(fold.train);
          fit_result = fit(model.lgm, theta0, bounds, fit_options);
          predictions = predict(model, fit_result, targets_from_dataset(fold.test));
        } else {
          GmrfModel model = build_gmrf(fold.train, mesh);
          fit_result = fit(model.lgm, theta0, bounds, fit_options);
          predictions = predict(model, fit_result, targets_from_dataset(fold.test));
        }
        if (options.warm_start) theta0 = fit_result.theta;

        std::vector<double> yhat(predictions.size()), y(predictions.size());
        for (std::size_t i = 0; i < predictions.size(); ++i) {
          yhat[i] = predictions[i].yhat;
          y[i] = fold.test.observations[i].pm;
        }

        FoldMetrics metrics;
        metrics.fold = static_cast<int>(f);
        metrics.n_test = static_cast<int>(y.size());
        metrics.rmse = rmse(yhat, y);
        metrics.r2 = r2(yhat, y);
        eval.folds.push_back(metrics);

        weighted_mse += metrics.rmse * metrics.rmse * metrics.n_test;
        total_test += metrics.n_test;
        ratio_sum += static_cast<double>(fold.train.n_obs()) / fold.test.n_obs();
        pooled_yhat.insert(pooled_yhat.end(), yhat.begin(), yhat.end());
        pooled_y.insert(pooled_y.end(), y.begin(), y.end());
      } catch (const Error& e) {
        throw Error("fold " + std::to_string(f) + ": " + e.what());
      }
    }

    eval.rmse_aggregate = std::sqrt(weighted_mse / static_cast<double>(total_test));
    eval.r2_pooled = r2(pooled_yhat, pooled_y);
    eval.r2_corr_pooled = r2_corr(pooled_yhat, pooled_y);
    eval.train_test_ratio = ratio_sum / static_cast<double>(plan.folds.size());
    report.models.push_back(std::move(eval));
  }

  // Paired RMSE differences across folds; valid because every model ran on
  // the identical plan.
  for (std::size_t a = 0; a < report.models.size(); ++a) {
    for (std::size_t b = a + 1; b < report.models.size(); ++b) {
      const auto& ma = report.models[a];
      const auto& mb = report.models[b];
      const int n = static_cast<int>(ma.folds.size());
      std::vector<double> diffs(n);
      for (int i = 0; i < n; ++i) diffs[i] = ma.folds[i].rmse - mb.folds[i].rmse;
      double mean = std::accumulate(diffs.begin(), diffs.end(), 0.0) / n;
      double var = 0.0;
      for (double d : diffs) var += (d - mean) * (d - mean);
      double sd = n > 1 ? std::sqrt(var / (n - 1)) : 0.0;
      double half = 1.96 * sd / std::sqrt(static_cast<double>(n));
      PairedDiff diff;
      diff.label = "rmse(" + ma.model + ") - rmse(" + mb.model + ")";
      diff.mean = mean;
      diff.lo = mean - half;
      diff.hi = mean + half;
      diff.n = n;
      report.paired.push_back(diff);
    }
  }
  return report;
}

SweepResult h_sweep(const Dataset& data, const std::vector<ModelKind>& kinds, int p,
                    const std::vector<double>& h_list, int n_iter, std::uint64_t seed,
                    const CvOptions& options) {
  if (h_list.empty()) throw ConfigError("h list must be nonempty");
  for (std::size_t i = 1; i < h_list.size(); ++i)
    if (h_list[i] <= h_list[i - 1]) throw ConfigError("h list must be ascending");

  CvOptions shared = options;
  if (!shared.mesh && std::count(kinds.begin(), kinds.end(), ModelKind::Gmrf)) {
    double max_edge = shared.mesh_max_edge > 0 ? shared.mesh_max_edge
                                               : data.domain_diameter() / 40.0;
    shared.mesh = std::make_shared<Mesh>(build_mesh(data.stations, shared.mesh_buffer_fraction,
                                                    max_edge));
  }

  SweepResult result;
  for (double h : h_list) {
    FoldPlan plan = make_folds_lpo_hblock(data, p, h, n_iter, seed);
    EvalReport report = run_cv(data, kinds, plan, shared);
    for (const auto& model : report.models) {
      std::vector<double> fold_rmse;
      for (const auto& fold : model.folds) {
        result.rows.push_back({h, model.model, fold.fold, fold.rmse});
        fold_rmse.push_back(fold.rmse);
      }
      double mean = std::accumulate(fold_rmse.begin(), fold_rmse.end(), 0.0) / fold_rmse.size();
      double var = 0.0;
      for (double v : fold_rmse) var += (v - mean) * (v - mean);
      double sd = fold_rmse.size() > 1 ? std::sqrt(var / (fold_rmse.size() - 1)) : 0.0;
      double half = 1.96 * sd / std::sqrt(static_cast<double>(fold_rmse.size()));
      result.summary.push_back({h, model.model, mean, mean - half, mean + half});
    }
  }
  return result;
}

}  // namespace pmfield
