#include "pmfield/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "pmfield/errors.hpp"

namespace pmfield {

std::string to_string(ModelKind kind) { return kind == ModelKind::Lmm ? "lmm" : "gmrf"; }

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "lmm") return ModelKind::Lmm;
  if (name == "gmrf") return ModelKind::Gmrf;
  throw ConfigError("unknown model kind '" + name + "' (expected lmm or gmrf)");
}

Eigen::MatrixXd fixed_design(const Dataset& data) {
  const int n = static_cast<int>(data.n_obs());
  const int p = data.covariate_count();
  Eigen::MatrixXd x(n, p + 2);
  for (int i = 0; i < n; ++i) {
    const auto& o = data.observations[i];
    x(i, 0) = 1.0;
    for (int k = 0; k < p; ++k) x(i, 1 + k) = o.covariates[k];
    x(i, p + 1) = o.aod;
  }
  return x;
}

namespace {

std::vector<int> rows_sorted_by_day(const Dataset& data, bool by_region) {
  std::vector<int> order(data.n_obs());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& oa = data.observations[a];
    const auto& ob = data.observations[b];
    if (oa.day != ob.day) return oa.day < ob.day;
    if (by_region) {
      int ra = data.stations[oa.station].region;
      int rb = data.stations[ob.station].region;
      if (ra != rb) return ra < rb;
    }
    return oa.station < ob.station;
  });
  return order;
}

Eigen::VectorXd response_in_order(const Dataset& data, const std::vector<int>& order) {
  Eigen::VectorXd y(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) y[i] = data.observations[order[i]].pm;
  return y;
}

Eigen::MatrixXd design_in_order(const Dataset& data, const std::vector<int>& order) {
  Eigen::MatrixXd full = fixed_design(data);
  Eigen::MatrixXd x(full.rows(), full.cols());
  for (std::size_t i = 0; i < order.size(); ++i) x.row(i) = full.row(order[i]);
  return x;
}

double ols_residual_variance(const Dataset& data) {
  const int n = static_cast<int>(data.n_obs());
  Eigen::MatrixXd x = fixed_design(data);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = data.observations[i].pm;
  Eigen::VectorXd beta = x.colPivHouseholderQr().solve(y);
  double s2 = (y - x * beta).squaredNorm() / n;
  double floor = 1e-10 * std::max(y.squaredNorm() / n, 1.0) + 1e-12;
  return std::max(s2, floor);
}

std::map<std::pair<long long, long long>, int> station_cell_regions(const Dataset& data,
                                                                    const RegionGrid& grid) {
  std::map<std::pair<long long, long long>, int> cells;
  for (const auto& s : data.stations) {
    if (s.region < 0) continue;
    cells.emplace(grid.cell_of(s.x, s.y), s.region);
  }
  return cells;
}

}  // namespace

LmmModel build_lmm(const Dataset& data) {
  if (data.n_obs() == 0) throw EmptyAfterFilter();
  for (const auto& s : data.stations)
    if (s.region < 0) throw ConfigError("station " + s.id + " has no region; assign regions first");

  LmmModel model;
  model.day_count = data.day_count;
  model.covariate_count = data.covariate_count();
  model.row_obs = rows_sorted_by_day(data, true);
  model.day_offset.assign(data.day_count, -1);

  // Latent layout and day blocks.
  std::vector<std::vector<int>> day_regions(data.day_count);
  for (const auto& o : data.observations) {
    auto& regions = day_regions[o.day - 1];
    int r = data.stations[o.station].region;
    if (!std::count(regions.begin(), regions.end(), r)) regions.push_back(r);
  }
  for (auto& regions : day_regions) std::sort(regions.begin(), regions.end());

  std::vector<DayBlock> blocks;
  int col = 0;
  {
    int row = 0;
    std::size_t i = 0;
    const auto& order = model.row_obs;
    while (i < order.size()) {
      int day = data.observations[order[i]].day;
      std::size_t j = i;
      while (j < order.size() && data.observations[order[j]].day == day) ++j;
      const auto& regions = day_regions[day - 1];
      model.day_offset[day - 1] = col;
      for (std::size_t k = 0; k < regions.size(); ++k)
        model.gh_col[{day, regions[k]}] = col + 2 + 2 * static_cast<int>(k);
      int width = 2 + 2 * static_cast<int>(regions.size());
      blocks.push_back({row, row + static_cast<int>(j - i), col, col + width});
      row += static_cast<int>(j - i);
      col += width;
      i = j;
    }
  }

  model.lgm.y = response_in_order(data, model.row_obs);
  model.lgm.x = design_in_order(data, model.row_obs);
  model.lgm.blocks = blocks;
  model.lgm.theta_dim = 5;

  std::vector<Triplet> trip;
  trip.reserve(model.row_obs.size() * 4);
  for (std::size_t i = 0; i < model.row_obs.size(); ++i) {
    const auto& o = data.observations[model.row_obs[i]];
    int day = o.day;
    int u = model.day_offset[day - 1];
    int g = model.gh_col.at({day, data.stations[o.station].region});
    int row = static_cast<int>(i);
    trip.emplace_back(row, u, 1.0);
    trip.emplace_back(row, u + 1, o.aod);
    trip.emplace_back(row, g, 1.0);
    trip.emplace_back(row, g + 1, o.aod);
  }
  model.lgm.b = SpMat(static_cast<int>(model.row_obs.size()), col);
  model.lgm.b.setFromTriplets(trip.begin(), trip.end());
  model.lgm.b.makeCompressed();

  auto regions_per_block = std::make_shared<std::vector<int>>();
  for (const auto& blk : blocks) regions_per_block->push_back((blk.col_end - blk.col_begin - 2) / 2);

  model.lgm.sigma2_eps = [](const Eigen::VectorXd& theta) { return theta[4]; };
  model.lgm.prior = [regions_per_block](const Eigen::VectorXd& theta) {
    if (theta.size() != 5) throw DimensionMismatch("LMM theta must have 5 components");
    for (int i = 0; i < 5; ++i)
      if (!(theta[i] > 0)) throw NonFinite("LMM variance components must be positive");
    const double inv_u = 1.0 / theta[0], inv_v = 1.0 / theta[1];
    const double inv_g = 1.0 / theta[2], inv_h = 1.0 / theta[3];
    std::vector<PriorBlock> out;
    out.reserve(regions_per_block->size());
    for (int r_count : *regions_per_block) {
      int dim = 2 + 2 * r_count;
      auto q = std::make_shared<SpMat>(dim, dim);
      q->reserve(Eigen::VectorXi::Constant(dim, 1));
      q->insert(0, 0) = inv_u;
      q->insert(1, 1) = inv_v;
      for (int k = 0; k < r_count; ++k) {
        q->insert(2 + 2 * k, 2 + 2 * k) = inv_g;
        q->insert(3 + 2 * k, 3 + 2 * k) = inv_h;
      }
      q->makeCompressed();
      double logdet = -(std::log(theta[0]) + std::log(theta[1]) +
                        r_count * (std::log(theta[2]) + std::log(theta[3])));
      out.push_back({q, logdet});
    }
    return out;
  };
  return model;
}

GmrfModel build_gmrf(const Dataset& data, std::shared_ptr<const Mesh> mesh) {
  if (data.n_obs() == 0) throw EmptyAfterFilter();
  if (!mesh) throw ConfigError("build_gmrf requires a mesh");

  GmrfModel model;
  model.mesh = std::move(mesh);
  model.fem = assemble_fem(*model.mesh);
  model.day_count = data.day_count;
  model.covariate_count = data.covariate_count();
  model.row_obs = rows_sorted_by_day(data, false);
  model.day_offset.assign(data.day_count, -1);

  std::vector<Eigen::Vector2d> station_points;
  station_points.reserve(data.stations.size());
  for (const auto& s : data.stations) station_points.emplace_back(s.x, s.y);
  Projector proj = project(*model.mesh, station_points);

  const int m = model.mesh->node_count();
  const int block_width = 2 * m + 2;

  std::vector<DayBlock> blocks;
  {
    int row = 0, col = 0;
    std::size_t i = 0;
    const auto& order = model.row_obs;
    while (i < order.size()) {
      int day = data.observations[order[i]].day;
      std::size_t j = i;
      while (j < order.size() && data.observations[order[j]].day == day) ++j;
      model.day_offset[day - 1] = col;
      blocks.push_back({row, row + static_cast<int>(j - i), col, col + block_width});
      row += static_cast<int>(j - i);
      col += block_width;
      i = j;
    }
  }
  const int q_total = blocks.empty() ? 0 : blocks.back().col_end;

  model.lgm.y = response_in_order(data, model.row_obs);
  model.lgm.x = design_in_order(data, model.row_obs);
  model.lgm.blocks = blocks;
  model.lgm.theta_dim = 7;

  // Transpose the projector so a station's weights are one column.
  SpMat at = proj.a.transpose();  // m x n_stations
  std::vector<Triplet> trip;
  trip.reserve(model.row_obs.size() * 8);
  for (std::size_t i = 0; i < model.row_obs.size(); ++i) {
    const auto& o = data.observations[model.row_obs[i]];
    int off = model.day_offset[o.day - 1];
    int row = static_cast<int>(i);
    for (SpMat::InnerIterator it(at, o.station); it; ++it) {
      int node = static_cast<int>(it.row());
      trip.emplace_back(row, off + node, it.value());
      trip.emplace_back(row, off + m + node, it.value() * o.aod);
    }
    trip.emplace_back(row, off + 2 * m, 1.0);
    trip.emplace_back(row, off + 2 * m + 1, o.aod);
  }
  model.lgm.b = SpMat(static_cast<int>(model.row_obs.size()), q_total);
  model.lgm.b.setFromTriplets(trip.begin(), trip.end());
  model.lgm.b.makeCompressed();

  auto fem = std::make_shared<FemMatrices>(model.fem);
  auto n_blocks = blocks.size();
  model.lgm.sigma2_eps = [](const Eigen::VectorXd& theta) { return theta[6]; };
  model.lgm.prior = [fem, m, n_blocks](const Eigen::VectorXd& theta) {
    if (theta.size() != 7) throw DimensionMismatch("GMRF theta must have 7 components");
    SpdeParams gamma{theta[0], theta[1]};
    SpdeParams psi{theta[2], theta[3]};
    const double sigma2_u = theta[4], sigma2_v = theta[5];
    if (!(sigma2_u > 0) || !(sigma2_v > 0))
      throw NonFinite("GMRF day-effect variances must be positive");

    SpMat q_gamma = spde_precision(*fem, gamma);
    SpMat q_psi = spde_precision(*fem, psi);
    double logdet = CholeskyFactor(q_gamma).logdet() + CholeskyFactor(q_psi).logdet() -
                    std::log(sigma2_u) - std::log(sigma2_v);

    auto q_day = std::make_shared<SpMat>(2 * m + 2, 2 * m + 2);
    std::vector<Triplet> day_trip;
    day_trip.reserve(q_gamma.nonZeros() + q_psi.nonZeros() + 2);
    for (int k = 0; k < q_gamma.outerSize(); ++k)
      for (SpMat::InnerIterator it(q_gamma, k); it; ++it)
        day_trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    for (int k = 0; k < q_psi.outerSize(); ++k)
      for (SpMat::InnerIterator it(q_psi, k); it; ++it)
        day_trip.emplace_back(static_cast<int>(it.row()) + m, static_cast<int>(it.col()) + m,
                              it.value());
    day_trip.emplace_back(2 * m, 2 * m, 1.0 / sigma2_u);
    day_trip.emplace_back(2 * m + 1, 2 * m + 1, 1.0 / sigma2_v);
    q_day->setFromTriplets(day_trip.begin(), day_trip.end());
    q_day->makeCompressed();

    // Every day shares the same prior block.
    return std::vector<PriorBlock>(n_blocks, PriorBlock{q_day, logdet});
  };
  return model;
}

Eigen::VectorXd default_theta0(ModelKind kind, const Dataset& data) {
  double s2 = ols_residual_variance(data);
  if (kind == ModelKind::Lmm) {
    Eigen::VectorXd theta(5);
    theta.setConstant(s2 / 5.0);
    return theta;
  }
  double diameter = std::max(data.domain_diameter(), 1e-6);
  double share = s2 / 5.0;
  SpdeParams p0 = SpdeParams::from_range_sigma(diameter / 5.0, std::sqrt(share));
  Eigen::VectorXd theta(7);
  theta << p0.kappa, p0.tau, p0.kappa, p0.tau, share, share, share;
  return theta;
}

FitBounds default_bounds(ModelKind kind, const Dataset& data) {
  double s2 = ols_residual_variance(data);
  double var_lo = 1e-8 * s2, var_hi = 1e3 * s2;
  if (kind == ModelKind::Lmm) {
    FitBounds bounds;
    bounds.lower = Eigen::VectorXd::Constant(5, var_lo);
    bounds.upper = Eigen::VectorXd::Constant(5, var_hi);
    return bounds;
  }
  double diameter = std::max(data.domain_diameter(), 1e-6);
  double kappa_lo = std::sqrt(8.0) / (4.0 * diameter);
  double kappa_hi = std::sqrt(8.0) / (diameter / 40.0);
  double tau_lo = 1.0 / (2.0 * std::sqrt(M_PI) * kappa_hi * std::sqrt(var_hi));
  double tau_hi = 1.0 / (2.0 * std::sqrt(M_PI) * kappa_lo * std::sqrt(var_lo));
  FitBounds bounds;
  bounds.lower.resize(7);
  bounds.upper.resize(7);
  bounds.lower << kappa_lo, tau_lo, kappa_lo, tau_lo, var_lo, var_lo, var_lo;
  bounds.upper << kappa_hi, tau_hi, kappa_hi, tau_hi, var_hi, var_hi, var_hi;
  return bounds;
}

std::vector<PredictTarget> targets_from_dataset(const Dataset& data) {
  std::vector<PredictTarget> targets;
  targets.reserve(data.n_obs());
  for (const auto& o : data.observations) {
    const auto& s = data.stations[o.station];
    PredictTarget t;
    t.station_id = s.id;
    t.x = s.x;
    t.y = s.y;
    t.day = o.day;
    t.aod = o.aod;
    t.covariates = o.covariates;
    t.region = s.region;
    targets.push_back(std::move(t));
  }
  return targets;
}

namespace {

double fixed_part_of(const Eigen::VectorXd& beta, const PredictTarget& t, int p) {
  if (static_cast<int>(t.covariates.size()) != p)
    throw DimensionMismatch("target covariate count != model covariate count");
  double value = beta[0];
  for (int k = 0; k < p; ++k) value += beta[1 + k] * t.covariates[k];
  value += beta[p + 1] * t.aod;
  return value;
}

}  // namespace

std::vector<PredictionRow> predict(const LmmModel& model, const FitResult& fit,
                                   const std::vector<PredictTarget>& targets) {
  const int p = model.covariate_count;
  if (fit.beta.size() != p + 2) throw DimensionMismatch("beta length != p + 2");
  std::vector<PredictionRow> rows;
  rows.reserve(targets.size());
  for (const auto& t : targets) {
    if (t.day < 1 || t.day > model.day_count || model.day_offset[t.day - 1] < 0)
      throw UnseenDay(t.day);
    int off = model.day_offset[t.day - 1];
    PredictionRow r;
    r.station_id = t.station_id;
    r.x = t.x;
    r.y = t.y;
    r.day = t.day;
    r.fixed_part = fixed_part_of(fit.beta, t, p);
    r.day_part = fit.z_hat[off] + fit.z_hat[off + 1] * t.aod;
    auto it = model.gh_col.find({t.day, t.region});
    r.spatial_part =
        it == model.gh_col.end() ? 0.0 : fit.z_hat[it->second] + fit.z_hat[it->second + 1] * t.aod;
    r.yhat = r.fixed_part + r.day_part + r.spatial_part;
    rows.push_back(r);
  }
  return rows;
}

std::vector<PredictionRow> predict(const GmrfModel& model, const FitResult& fit,
                                   const std::vector<PredictTarget>& targets) {
  const int p = model.covariate_count;
  if (fit.beta.size() != p + 2) throw DimensionMismatch("beta length != p + 2");
  const int m = model.mesh->node_count();

  std::vector<Eigen::Vector2d> points;
  points.reserve(targets.size());
  for (const auto& t : targets) points.emplace_back(t.x, t.y);
  Projector proj = project(*model.mesh, points);
  SpMat at = proj.a.transpose();

  std::vector<PredictionRow> rows;
  rows.reserve(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& t = targets[i];
    if (t.day < 1 || t.day > model.day_count || model.day_offset[t.day - 1] < 0)
      throw UnseenDay(t.day);
    int off = model.day_offset[t.day - 1];
    PredictionRow r;
    r.station_id = t.station_id;
    r.x = t.x;
    r.y = t.y;
    r.day = t.day;
    r.fixed_part = fixed_part_of(fit.beta, t, p);
    r.day_part = fit.z_hat[off + 2 * m] + fit.z_hat[off + 2 * m + 1] * t.aod;
    double gamma = 0.0, psi = 0.0;
    for (SpMat::InnerIterator it(at, static_cast<int>(i)); it; ++it) {
      int node = static_cast<int>(it.row());
      gamma += it.value() * fit.z_hat[off + node];
      psi += it.value() * fit.z_hat[off + m + node];
    }
    r.spatial_part = gamma + psi * t.aod;
    r.yhat = r.fixed_part + r.day_part + r.spatial_part;
    rows.push_back(r);
  }
  return rows;
}

std::vector<SurfaceCell> spatial_surface(const LmmModel& model, const FitResult& fit, int day,
                                         const RasterSpec& raster, const Dataset& data,
                                         const RegionGrid& grid) {
  if (day < 1 || day > model.day_count || model.day_offset[day - 1] < 0) throw UnseenDay(day);
  auto cells = station_cell_regions(data, grid);
  std::vector<SurfaceCell> out;
  out.reserve(static_cast<size_t>(raster.nx) * raster.ny);
  for (int j = 0; j < raster.ny; ++j) {
    for (int i = 0; i < raster.nx; ++i) {
      SurfaceCell cell;
      cell.x = raster.x0 + (raster.x1 - raster.x0) * (i + 0.5) / raster.nx;
      cell.y = raster.y0 + (raster.y1 - raster.y0) * (j + 0.5) / raster.ny;
      auto found = cells.find(grid.cell_of(cell.x, cell.y));
      if (found != cells.end()) {
        auto gh = model.gh_col.find({day, found->second});
        if (gh != model.gh_col.end()) cell.value = fit.z_hat[gh->second];
      }
      out.push_back(cell);
    }
  }
  return out;
}

std::vector<SurfaceCell> spatial_surface(const GmrfModel& model, const FitResult& fit, int day,
                                         const RasterSpec& raster) {
  if (day < 1 || day > model.day_count || model.day_offset[day - 1] < 0) throw UnseenDay(day);
  const int m = model.mesh->node_count();
  const int off = model.day_offset[day - 1];

  std::vector<Eigen::Vector2d> points;
  points.reserve(static_cast<size_t>(raster.nx) * raster.ny);
  for (int j = 0; j < raster.ny; ++j)
    for (int i = 0; i < raster.nx; ++i)
      points.emplace_back(raster.x0 + (raster.x1 - raster.x0) * (i + 0.5) / raster.nx,
                          raster.y0 + (raster.y1 - raster.y0) * (j + 0.5) / raster.ny);

  Projector proj = project(*model.mesh, points);
  Eigen::VectorXd gamma = fit.z_hat.segment(off, m);
  Eigen::VectorXd values = proj.a * gamma;

  std::vector<SurfaceCell> out;
  out.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    out.push_back({points[i].x(), points[i].y(), values[static_cast<int>(i)]});
  return out;
}

namespace {

// Extracts one day's Qpost = Qprior_day + B_day' B_day / sigma2 and returns
// it permuted into export order together with labels.
PrecisionExport permuted_day_precision(const LinearGaussianModel& lgm,
                                       const std::vector<PriorBlock>& priors, int block_index,
                                       double sigma2, const std::vector<int>& export_order,
                                       std::vector<std::string> kind, std::vector<int> region,
                                       std::vector<int> index) {
  const auto& blk = lgm.blocks[block_index];
  const int q_t = blk.col_end - blk.col_begin;

  std::vector<Triplet> btrip;
  for (int col = blk.col_begin; col < blk.col_end; ++col)
    for (SpMat::InnerIterator it(lgm.b, col); it; ++it)
      btrip.emplace_back(static_cast<int>(it.row()) - blk.row_begin, col - blk.col_begin,
                         it.value());
  SpMat b_day(blk.row_end - blk.row_begin, q_t);
  b_day.setFromTriplets(btrip.begin(), btrip.end());
  SpMat bt = b_day.transpose();
  SpMat qpost = *priors[block_index].q + SpMat(bt * b_day) * (1.0 / sigma2);

  // inverse permutation: new_of[old] = position in export order
  std::vector<int> new_of(q_t);
  for (int k = 0; k < q_t; ++k) new_of[export_order[k]] = k;

  std::vector<Triplet> qtrip;
  qtrip.reserve(qpost.nonZeros());
  for (int k = 0; k < qpost.outerSize(); ++k)
    for (SpMat::InnerIterator it(qpost, k); it; ++it)
      qtrip.emplace_back(new_of[it.row()], new_of[it.col()], it.value());

  PrecisionExport out;
  out.q = SpMat(q_t, q_t);
  out.q.setFromTriplets(qtrip.begin(), qtrip.end());
  out.q.makeCompressed();
  out.row_kind.resize(q_t);
  out.row_region.resize(q_t);
  out.row_index.resize(q_t);
  for (int k = 0; k < q_t; ++k) {
    out.row_kind[new_of[k]] = kind[k];
    out.row_region[new_of[k]] = region[k];
    out.row_index[new_of[k]] = index[k];
  }
  return out;
}

int day_block_index(const std::vector<DayBlock>& blocks, int day_offset_col) {
  for (std::size_t i = 0; i < blocks.size(); ++i)
    if (blocks[i].col_begin == day_offset_col) return static_cast<int>(i);
  return -1;
}

}  // namespace

PrecisionExport day_posterior_precision(const LmmModel& model, const Eigen::VectorXd& theta,
                                        int day) {
  if (day < 1 || day > model.day_count || model.day_offset[day - 1] < 0) throw UnseenDay(day);
  auto priors = model.lgm.prior(theta);
  double s2 = model.lgm.sigma2_eps(theta);
  int block = day_block_index(model.lgm.blocks, model.day_offset[day - 1]);
  const auto& blk = model.lgm.blocks[block];
  const int q_t = blk.col_end - blk.col_begin;

  // local layout: [u, v, g_r1, h_r1, ...]; export: region rows first, u/v last
  std::vector<std::string> kind(q_t);
  std::vector<int> region(q_t, -1), index(q_t, -1);
  kind[0] = "u";
  kind[1] = "v";
  std::vector<std::pair<int, int>> regions;  // (region, local g col)
  for (const auto& [key, col] : model.gh_col) {
    if (key.first != day) continue;
    regions.emplace_back(key.second, col - blk.col_begin);
  }
  std::sort(regions.begin(), regions.end());
  for (const auto& [r, local] : regions) {
    kind[local] = "g";
    kind[local + 1] = "h";
    region[local] = region[local + 1] = r;
    index[local] = index[local + 1] = r;
  }
  std::vector<int> order;
  for (const auto& [r, local] : regions) {
    order.push_back(local);
    order.push_back(local + 1);
  }
  order.push_back(0);
  order.push_back(1);
  return permuted_day_precision(model.lgm, priors, block, s2, order, std::move(kind),
                                std::move(region), std::move(index));
}

PrecisionExport day_posterior_precision(const GmrfModel& model, const Eigen::VectorXd& theta,
                                        int day, const Dataset& data, const RegionGrid& grid) {
  if (day < 1 || day > model.day_count || model.day_offset[day - 1] < 0) throw UnseenDay(day);
  auto priors = model.lgm.prior(theta);
  double s2 = model.lgm.sigma2_eps(theta);
  int block = day_block_index(model.lgm.blocks, model.day_offset[day - 1]);
  const int m = model.mesh->node_count();
  const int q_t = 2 * m + 2;

  auto cells = station_cell_regions(data, grid);
  std::vector<int> node_region(m, -1);
  for (int node = 0; node < m; ++node) {
    auto found = cells.find(grid.cell_of(model.mesh->nodes[node].x(), model.mesh->nodes[node].y()));
    if (found != cells.end()) node_region[node] = found->second;
  }

  std::vector<std::string> kind(q_t);
  std::vector<int> region(q_t, -1), index(q_t, -1);
  for (int node = 0; node < m; ++node) {
    kind[node] = "gamma";
    kind[m + node] = "psi";
    region[node] = region[m + node] = node_region[node];
    index[node] = index[m + node] = node;
  }
  kind[2 * m] = "u";
  kind[2 * m + 1] = "v";

  // gamma nodes by (region, node), then psi nodes likewise, then u, v
  std::vector<int> gamma_order(m);
  std::iota(gamma_order.begin(), gamma_order.end(), 0);
  std::sort(gamma_order.begin(), gamma_order.end(), [&](int a, int b) {
    if (node_region[a] != node_region[b]) return node_region[a] < node_region[b];
    return a < b;
  });
  std::vector<int> order;
  order.reserve(q_t);
  for (int node : gamma_order) order.push_back(node);
  for (int node : gamma_order) order.push_back(m + node);
  order.push_back(2 * m);
  order.push_back(2 * m + 1);
  return permuted_day_precision(model.lgm, priors, block, s2, order, std::move(kind),
                                std::move(region), std::move(index));
}

}  // namespace pmfield
