#include "pmfield/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "pmfield/errors.hpp"

namespace pmfield {

using nlohmann::json;

std::pair<double, double> project_lonlat(double lon, double lat, double lat0) {
  if (std::abs(lat) >= 89.0) throw ConfigError("|lat| must be < 89 degrees");
  const double deg = M_PI / 180.0;
  return {111.320 * std::cos(lat0 * deg) * lon, 110.574 * lat};
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

double parse_double(const std::string& text, int line_number) {
  try {
    std::size_t pos = 0;
    double value = std::stod(text, &pos);
    if (pos != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw ParseError("bad numeric value '" + text + "'", line_number);
  }
}

long long parse_int(const std::string& text, int line_number) {
  try {
    std::size_t pos = 0;
    long long value = std::stoll(text, &pos);
    if (pos != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw ParseError("bad integer value '" + text + "'", line_number);
  }
}

std::string format_g17(double v) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", v);
  return buffer;
}

}  // namespace

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);

  std::string header;
  if (!std::getline(in, header)) throw ParseError("empty file", 1);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  auto columns = split_csv_line(header);

  auto find_col = [&](const std::string& name) {
    auto it = std::find(columns.begin(), columns.end(), name);
    return it == columns.end() ? -1 : static_cast<int>(it - columns.begin());
  };

  const int c_station = find_col("station_id");
  const int c_day = find_col("day");
  const int c_pm = find_col("pm25");
  const int c_aod = find_col("aod");
  const int c_x = find_col("x_km");
  const int c_y = find_col("y_km");
  const int c_lon = find_col("lon");
  const int c_lat = find_col("lat");
  const int c_region = find_col("region_id");

  if (c_station < 0) throw SchemaError("station_id");
  if (c_day < 0) throw SchemaError("day");
  if (c_pm < 0) throw SchemaError("pm25");
  if (c_aod < 0) throw SchemaError("aod");
  const bool planar = c_x >= 0 && c_y >= 0;
  const bool geodetic = c_lon >= 0 && c_lat >= 0;
  if (!planar && !geodetic) throw SchemaError(c_x < 0 && c_lon < 0 ? "x_km" : (c_x < 0 ? "y_km" : "x_km"));

  std::vector<int> covariate_cols;
  Dataset raw;
  for (int c = 0; c < static_cast<int>(columns.size()); ++c) {
    if (c == c_station || c == c_day || c == c_pm || c == c_aod || c == c_x || c == c_y ||
        c == c_lon || c == c_lat || c == c_region)
      continue;
    covariate_cols.push_back(c);
    raw.covariate_names.push_back(columns[c]);
  }

  struct RawRow {
    int station;
    int day;
    double pm, aod;
    std::vector<double> covariates;
  };
  std::map<std::string, int> station_ids;
  std::map<std::string, int> region_ids;  // non-integer labels only
  int line_number = 1;
  std::string line;
  std::vector<double> lats;  // geodetic inputs need the mean latitude first

  struct GeoRow {
    double lon, lat;
  };
  std::vector<GeoRow> geo_rows;

  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != columns.size())
      throw ParseError("expected " + std::to_string(columns.size()) + " fields, got " +
                           std::to_string(fields.size()),
                       line_number);

    const std::string& sid = fields[c_station];
    double x = 0.0, y = 0.0;
    if (planar) {
      x = parse_double(fields[c_x], line_number);
      y = parse_double(fields[c_y], line_number);
    }

    int region = -1;
    if (c_region >= 0 && !fields[c_region].empty()) {
      const std::string& label = fields[c_region];
      bool integral = !label.empty() &&
                      label.find_first_not_of("-0123456789") == std::string::npos;
      if (integral) {
        region = static_cast<int>(parse_int(label, line_number));
        if (region < 0) throw ParseError("region_id must be >= 0", line_number);
      } else {
        auto [it, inserted] = region_ids.emplace(label, static_cast<int>(region_ids.size()));
        region = it->second;
        (void)inserted;
      }
    }

    auto [sit, created] = station_ids.emplace(sid, static_cast<int>(raw.stations.size()));
    if (created) {
      Station s;
      s.id = sid;
      s.x = x;
      s.y = y;
      s.region = region;
      raw.stations.push_back(s);
      if (geodetic) geo_rows.push_back({parse_double(fields[c_lon], line_number),
                                        parse_double(fields[c_lat], line_number)});
    } else if (planar) {
      const Station& s = raw.stations[sit->second];
      if (std::abs(s.x - x) > 1e-9 || std::abs(s.y - y) > 1e-9)
        throw ParseError("station " + sid + " has inconsistent coordinates", line_number);
    }

    Observation o;
    o.station = sit->second;
    o.day = static_cast<int>(parse_int(fields[c_day], line_number));
    o.pm = parse_double(fields[c_pm], line_number);
    o.aod = parse_double(fields[c_aod], line_number);
    o.covariates.reserve(covariate_cols.size());
    for (int c : covariate_cols) o.covariates.push_back(parse_double(fields[c], line_number));
    raw.observations.push_back(std::move(o));
    if (geodetic) lats.push_back(geo_rows.back().lat);
  }
  if (raw.observations.empty()) throw ParseError("no data rows", line_number);

  if (geodetic && !planar) {
    double lat0 = 0.0;
    for (const auto& g : geo_rows) lat0 += g.lat;
    lat0 /= static_cast<double>(geo_rows.size());
    for (std::size_t s = 0; s < raw.stations.size(); ++s) {
      auto [x, y] = project_lonlat(geo_rows[s].lon, geo_rows[s].lat, lat0);
      raw.stations[s].x = x;
      raw.stations[s].y = y;
    }
  }

  if (!region_ids.empty()) {
    raw.region_labels.resize(region_ids.size());
    for (const auto& [label, id] : region_ids) raw.region_labels[id] = label;
  }
  return raw;
}

Dataset ingest_csv(const std::string& path, int min_per_day, int min_per_station,
                   std::optional<RegionGrid> grid) {
  Dataset raw = read_dataset_csv(path);
  bool has_regions = std::any_of(raw.stations.begin(), raw.stations.end(),
                                 [](const Station& s) { return s.region >= 0; });
  if (!has_regions && grid) raw.stations = assign_regions(std::move(raw.stations), *grid);
  return validate_dataset(raw, min_per_day, min_per_station);
}

void write_dataset_csv(const Dataset& data, const std::string& path) {
  std::ostringstream out;
  out << "station_id,x_km,y_km,day,pm25,aod,region_id";
  for (const auto& name : data.covariate_names) out << "," << name;
  out << "\n";
  for (const auto& o : data.observations) {
    const auto& s = data.stations[o.station];
    out << s.id << "," << format_g17(s.x) << "," << format_g17(s.y) << "," << o.day << ","
        << format_g17(o.pm) << "," << format_g17(o.aod) << ",";
    if (s.region >= 0)
      out << (s.region < static_cast<int>(data.region_labels.size())
                  ? data.region_labels[s.region]
                  : std::to_string(s.region));
    for (double c : o.covariates) out << "," << format_g17(c);
    out << "\n";
  }
  atomic_write_text(path, out.str());
}

void atomic_write_text(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string());
    out << content;
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

void write_predictions_csv(const std::vector<PredictionRow>& rows, const std::string& path) {
  std::ostringstream out;
  out << "station_id,x_km,y_km,day,yhat,fixed,day_part,spatial_part\n";
  for (const auto& r : rows)
    out << r.station_id << "," << format_g17(r.x) << "," << format_g17(r.y) << "," << r.day << ","
        << format_g17(r.yhat) << "," << format_g17(r.fixed_part) << "," << format_g17(r.day_part)
        << "," << format_g17(r.spatial_part) << "\n";
  atomic_write_text(path, out.str());
}

void write_surface_csv(const std::vector<SurfaceCell>& cells, const std::string& path) {
  std::ostringstream out;
  out << "x_km,y_km,value\n";
  for (const auto& c : cells)
    out << format_g17(c.x) << "," << format_g17(c.y) << "," << format_g17(c.value) << "\n";
  atomic_write_text(path, out.str());
}

void write_precision_export(const PrecisionExport& exported, const std::string& matrix_path,
                            const std::string& labels_path) {
  {
    std::ostringstream out;
    out.precision(17);
    SpMat lower = lower_triangle(exported.q);
    out << "# " << lower.rows() << " " << lower.cols() << " " << lower.nonZeros() << "\n";
    for (int k = 0; k < lower.outerSize(); ++k)
      for (SpMat::InnerIterator it(lower, k); it; ++it)
        out << it.row() << " " << it.col() << " " << it.value() << "\n";
    atomic_write_text(matrix_path, out.str());
  }
  std::ostringstream out;
  out << "row,kind,region,index\n";
  for (std::size_t i = 0; i < exported.row_kind.size(); ++i)
    out << i << "," << exported.row_kind[i] << "," << exported.row_region[i] << ","
        << exported.row_index[i] << "\n";
  atomic_write_text(labels_path, out.str());
}

std::string format_metric(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.2f", value);
  return buffer;
}

namespace {

std::string scheme_tag(const EvalReport& report) {
  if (report.scheme == "kfold") return "kfold";
  std::ostringstream tag;
  tag << "lpo";
  return tag.str();
}

}  // namespace

void write_report_table_csv(const std::vector<EvalReport>& reports, const std::string& path) {
  if (reports.empty()) throw ConfigError("no reports to write");
  // all reports must list the same models in the same order
  std::ostringstream out;
  out << "model";
  for (std::size_t r = 0; r < reports.size(); ++r) {
    std::string tag = scheme_tag(reports[r]) + std::to_string(r);
    out << "," << tag << "_rmse," << tag << "_r2";
  }
  out << "\n";
  for (std::size_t m = 0; m < reports.front().models.size(); ++m) {
    out << reports.front().models[m].model;
    for (const auto& report : reports) {
      if (m >= report.models.size()) throw DimensionMismatch("reports disagree on models");
      out << "," << format_metric(report.models[m].rmse_aggregate) << ","
          << format_metric(report.models[m].r2_pooled);
    }
    out << "\n";
  }
  atomic_write_text(path, out.str());
}

void write_report_details_csv(const EvalReport& report, const std::string& path) {
  std::ostringstream out;
  out << "scheme,model,fold,n_test,rmse,r2\n";
  for (const auto& model : report.models)
    for (const auto& fold : model.folds)
      out << report.scheme << "," << model.model << "," << fold.fold << "," << fold.n_test << ","
          << format_g17(fold.rmse) << "," << format_g17(fold.r2) << "\n";
  atomic_write_text(path, out.str());
}

std::string report_json(const std::vector<EvalReport>& reports) {
  json root = json::array();
  for (const auto& report : reports) {
    json jr;
    jr["scheme"] = report.scheme;
    jr["seed"] = report.seed;
    jr["models"] = json::array();
    for (const auto& model : report.models) {
      json jm;
      jm["model"] = model.model;
      jm["rmse"] = model.rmse_aggregate;
      jm["r2"] = model.r2_pooled;
      jm["r2_corr"] = model.r2_corr_pooled;
      jm["train_test_ratio"] = model.train_test_ratio;
      jm["folds"] = json::array();
      for (const auto& fold : model.folds)
        jm["folds"].push_back({{"fold", fold.fold},
                               {"n_test", fold.n_test},
                               {"rmse", fold.rmse},
                               {"r2", fold.r2}});
      jr["models"].push_back(jm);
    }
    jr["paired"] = json::array();
    for (const auto& diff : report.paired)
      jr["paired"].push_back({{"label", diff.label},
                              {"mean", diff.mean},
                              {"ci_lo", diff.lo},
                              {"ci_hi", diff.hi},
                              {"n", diff.n}});
    root.push_back(jr);
  }
  return root.dump(2);
}

void write_sweep_csv(const SweepResult& sweep, const std::string& path) {
  std::ostringstream out;
  out << "h,model,iter,rmse\n";
  for (const auto& row : sweep.rows)
    out << format_g17(row.h) << "," << row.model << "," << row.iter << ","
        << format_g17(row.rmse) << "\n";
  atomic_write_text(path, out.str());
}

void write_sweep_summary_csv(const SweepResult& sweep, const std::string& path) {
  std::ostringstream out;
  out << "h,model,mean_rmse,ci_lo,ci_hi\n";
  for (const auto& row : sweep.summary)
    out << format_g17(row.h) << "," << row.model << "," << format_g17(row.mean_rmse) << ","
        << format_g17(row.lo) << "," << format_g17(row.hi) << "\n";
  atomic_write_text(path, out.str());
}

namespace {

json vector_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

}  // namespace

std::string truth_json(const TruthRecord& truth) {
  const auto& cfg = truth.config;
  json root;
  root["layout"] = cfg.layout == StationLayout::Uniform ? "uniform" : "clustered";
  root["stations"] = cfg.stations;
  root["days"] = cfg.days;
  root["domain_km"] = cfg.domain_km;
  root["truth"] = cfg.truth == TruthKind::GmrfTruth ? "gmrf" : "lmm";
  root["alpha"] = cfg.alpha;
  root["beta"] = cfg.beta;
  root["beta_aod"] = cfg.beta_aod;
  root["sigma2_u"] = cfg.sigma2_u;
  root["sigma2_v"] = cfg.sigma2_v;
  root["sigma2_eps"] = cfg.sigma2_eps;
  root["covariate_count"] = cfg.covariate_count;
  root["region_cell_km"] = cfg.region_cell_km;
  root["seed"] = cfg.seed;
  root["u"] = vector_json(truth.u);
  root["v"] = vector_json(truth.v);
  if (cfg.truth == TruthKind::LmmTruth) {
    root["sigma2_g"] = cfg.sigma2_g;
    root["sigma2_h"] = cfg.sigma2_h;
    root["g"] = matrix_json(truth.g);
    root["h"] = matrix_json(truth.h);
  } else {
    root["range_gamma"] = cfg.range_gamma;
    root["sigma2_gamma"] = cfg.sigma2_gamma;
    root["range_psi"] = cfg.range_psi;
    root["sigma2_psi"] = cfg.sigma2_psi;
    root["gamma"] = matrix_json(truth.gamma);
    root["psi"] = matrix_json(truth.psi);
  }
  return root.dump(2);
}

std::string fit_artifact_json(const FitArtifact& artifact) {
  json root;
  root["model"] = to_string(artifact.kind);
  root["theta"] = vector_json(artifact.result.theta);
  root["beta"] = vector_json(artifact.result.beta);
  root["z_hat"] = vector_json(artifact.result.z_hat);
  root["loglik"] = artifact.result.loglik;
  root["convergence"] = {{"converged", artifact.result.convergence.converged},
                         {"outer_rounds", artifact.result.convergence.outer_rounds},
                         {"evaluations", artifact.result.convergence.evaluations},
                         {"message", artifact.result.convergence.message}};
  root["cell_km"] = artifact.cell_km;
  root["buffer_fraction"] = artifact.buffer_fraction;
  root["max_edge"] = artifact.max_edge;
  root["latent_dim"] = artifact.latent_dim;
  root["day_count"] = artifact.day_count;
  return root.dump(2);
}

FitArtifact fit_artifact_from_json(const std::string& text) {
  json root = json::parse(text);
  FitArtifact artifact;
  artifact.kind = model_kind_from_string(root.at("model").get<std::string>());
  artifact.result.theta = vector_from_json(root.at("theta"));
  artifact.result.beta = vector_from_json(root.at("beta"));
  artifact.result.z_hat = vector_from_json(root.at("z_hat"));
  artifact.result.loglik = root.at("loglik").get<double>();
  const auto& conv = root.at("convergence");
  artifact.result.convergence.converged = conv.at("converged").get<bool>();
  artifact.result.convergence.outer_rounds = conv.at("outer_rounds").get<int>();
  artifact.result.convergence.evaluations = conv.at("evaluations").get<long>();
  artifact.result.convergence.message = conv.at("message").get<std::string>();
  artifact.cell_km = root.at("cell_km").get<double>();
  artifact.buffer_fraction = root.at("buffer_fraction").get<double>();
  artifact.max_edge = root.at("max_edge").get<double>();
  artifact.latent_dim = root.at("latent_dim").get<int>();
  artifact.day_count = root.at("day_count").get<int>();
  return artifact;
}

}  // namespace pmfield
