#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pmfield/dataset.hpp"
#include "pmfield/engine.hpp"
#include "pmfield/models.hpp"

namespace pmfield {

struct Fold {
  std::vector<int> train_rows;  // observation indices into the parent Dataset
  std::vector<int> test_rows;
  std::vector<std::string> test_stations;     // station-level schemes only
  std::vector<std::string> dropped_stations;  // stations within h of a test station
};

struct FoldPlan {
  std::string scheme;  // "kfold" or "lpo_hblock"
  int k = 0;
  int p = 0;
  double h = 0.0;
  int n_iter = 0;
  std::uint64_t seed = 0;
  std::vector<Fold> folds;
};

// Observation-level uniform random partition into K folds with sizes
// differing by at most one. Deterministic given the seed and independent of
// row contents.
FoldPlan make_folds_kfold(const Dataset& data, int k, std::uint64_t seed);

// Per iteration: p test stations sampled uniformly without replacement, every
// other station strictly closer than h km to a test station dropped, the rest
// train. Test sampling does not depend on h, so sweeps over h share folds.
FoldPlan make_folds_lpo_hblock(const Dataset& data, int p, double h, int n_iter,
                               std::uint64_t seed);

double rmse(const std::vector<double>& yhat, const std::vector<double>& y);
double r2(const std::vector<double>& yhat, const std::vector<double>& y);

struct FoldMetrics {
  int fold = 0;
  int n_test = 0;
  double rmse = 0.0;
  double r2 = 0.0;
};

struct ModelEval {
  std::string model;
  std::vector<FoldMetrics> folds;
  double rmse_aggregate = 0.0;   // pooled: sqrt of observation-weighted mean fold MSE
  double r2_pooled = 0.0;        // 1 - SSE/SST on the pooled holdout
  double r2_corr_pooled = 0.0;   // squared-correlation variant, reported alongside
  double train_test_ratio = 0.0; // achieved mean train:test observation ratio
};

struct PairedDiff {
  std::string label;  // e.g. "rmse(lmm) - rmse(gmrf)"
  double mean = 0.0;
  double lo = 0.0;  // 95% normal-approximation CI over folds/iterations
  double hi = 0.0;
  int n = 0;
};

struct EvalReport {
  std::string scheme;
  std::uint64_t seed = 0;
  std::vector<ModelEval> models;
  std::vector<PairedDiff> paired;  // present when two models share the plan
};

struct CvOptions {
  double mesh_buffer_fraction = 0.2;
  double mesh_max_edge = 0.0;            // <= 0 means domain-diameter / 40
  std::shared_ptr<const Mesh> mesh;      // prebuilt mesh override (shared across folds)
  bool warm_start = true;                // reuse the previous fold's theta-hat
  FitOptions fit_options;
  std::optional<Eigen::VectorXd> theta0_lmm;
  std::optional<Eigen::VectorXd> theta0_gmrf;
};

// Fits every model kind on each fold's training rows, predicts the fold's
// test rows, and aggregates per the EvalReport invariants. Errors from fit or
// predict are annotated with the fold index. Paired RMSE differences are
// reported for each model pair sharing this identical plan.
EvalReport run_cv(const Dataset& data, const std::vector<ModelKind>& kinds, const FoldPlan& plan,
                  const CvOptions& options = {});

struct SweepRow {
  double h = 0.0;
  std::string model;
  int iter = 0;
  double rmse = 0.0;
};

struct SweepSummary {
  double h = 0.0;
  std::string model;
  double mean_rmse = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;        // tidy (h, model, iter, rmse)
  std::vector<SweepSummary> summary; // mean with 95% CI over iterations
};

// One LPO-h-block evaluation per h per model with shared seeds, so the h = 0
// entry reproduces plain leave-p-out and curves are comparable across models.
SweepResult h_sweep(const Dataset& data, const std::vector<ModelKind>& kinds, int p,
                    const std::vector<double>& h_list, int n_iter, std::uint64_t seed,
                    const CvOptions& options = {});

// Rows of `data` restricted to the given observation indices (all stations
// and the day indexing kept, so fits and predictions stay aligned).
Dataset dataset_from_rows(const Dataset& data, const std::vector<int>& rows);

}  // namespace pmfield
