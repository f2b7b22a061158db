#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pmfield/dataset.hpp"
#include "pmfield/engine.hpp"
#include "pmfield/matern.hpp"
#include "pmfield/mesh.hpp"

namespace pmfield {

enum class ModelKind { Lmm, Gmrf };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

// LMM (per-day random intercept/slope plus per-(day, region) intercept/slope):
//   theta = (sigma2_u, sigma2_v, sigma2_g, sigma2_h, sigma2_eps)
// Latent layout, day-major: [u_t, v_t, then (g_rt, h_rt) for each region
// observed on day t in ascending region order].
struct LmmModel {
  LinearGaussianModel lgm;
  int day_count = 0;
  std::vector<int> day_offset;                 // u_t column for day t; -1 when absent
  std::map<std::pair<int, int>, int> gh_col;   // (day, region) -> g column
  std::vector<int> row_obs;                    // model row -> dataset observation
  int covariate_count = 0;
};

// GMRF (LMM with the region effects replaced by two Matern fields on a mesh):
//   theta = (kappa_gamma, tau_gamma, kappa_psi, tau_psi, sigma2_u, sigma2_v, sigma2_eps)
// Latent layout, day-major: [gamma nodes (m), psi nodes (m), u_t, v_t].
struct GmrfModel {
  LinearGaussianModel lgm;
  std::shared_ptr<const Mesh> mesh;
  FemMatrices fem;
  int day_count = 0;
  std::vector<int> day_offset;  // block start for day t; -1 when absent
  std::vector<int> row_obs;
  int covariate_count = 0;
};

LmmModel build_lmm(const Dataset& data);
GmrfModel build_gmrf(const Dataset& data, std::shared_ptr<const Mesh> mesh);

// Fixed-effect design shared by both models: [1, covariates..., aod].
Eigen::MatrixXd fixed_design(const Dataset& data);

// Starting values and box bounds per the initialization conventions:
// variance components split the OLS residual variance evenly; kappa starts
// at sqrt(8)/(domain-diameter/5).
Eigen::VectorXd default_theta0(ModelKind kind, const Dataset& data);
FitBounds default_bounds(ModelKind kind, const Dataset& data);

struct PredictTarget {
  std::string station_id;  // informational
  double x = 0.0;
  double y = 0.0;
  int day = 0;
  double aod = 0.0;
  std::vector<double> covariates;
  int region = -1;  // LMM group lookup; -1 means unseen (zero BLUP)
};

struct PredictionRow {
  std::string station_id;
  double x = 0.0;
  double y = 0.0;
  int day = 0;
  double yhat = 0.0;
  double fixed_part = 0.0;
  double day_part = 0.0;
  double spatial_part = 0.0;
};

std::vector<PredictTarget> targets_from_dataset(const Dataset& data);

std::vector<PredictionRow> predict(const LmmModel& model, const FitResult& fit,
                                   const std::vector<PredictTarget>& targets);
std::vector<PredictionRow> predict(const GmrfModel& model, const FitResult& fit,
                                   const std::vector<PredictTarget>& targets);

struct RasterSpec {
  double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
  int nx = 50, ny = 50;
};

struct SurfaceCell {
  double x = 0.0, y = 0.0, value = 0.0;
};

// Fitted spatial intercept surface for one day. The LMM surface is piecewise
// constant per region (cells whose grid cell holds no training station get
// the zero BLUP); the GMRF surface is the continuous field A gamma_t.
std::vector<SurfaceCell> spatial_surface(const LmmModel& model, const FitResult& fit, int day,
                                         const RasterSpec& raster, const Dataset& data,
                                         const RegionGrid& grid);
std::vector<SurfaceCell> spatial_surface(const GmrfModel& model, const FitResult& fit, int day,
                                         const RasterSpec& raster);

// One day's posterior latent precision Qpost = Qprior + B_t' B_t / sigma2,
// with rows grouped by region (u/v rows last) for sparsity-pattern exports.
struct PrecisionExport {
  SpMat q;  // symmetric, full storage, in export order
  std::vector<std::string> row_kind;  // "g", "h", "u", "v", "gamma", "psi"
  std::vector<int> row_region;        // -1 where no region applies
  std::vector<int> row_index;         // region id or mesh node id
};

PrecisionExport day_posterior_precision(const LmmModel& model, const Eigen::VectorXd& theta,
                                        int day);
PrecisionExport day_posterior_precision(const GmrfModel& model, const Eigen::VectorXd& theta,
                                        int day, const Dataset& data, const RegionGrid& grid);

}  // namespace pmfield
