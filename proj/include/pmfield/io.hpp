#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pmfield/cv.hpp"
#include "pmfield/dataset.hpp"
#include "pmfield/models.hpp"
#include "pmfield/synth.hpp"

namespace pmfield {

// Equirectangular projection to planar km (Euclidean distances downstream):
// x = 111.320 cos(lat0) lon, y = 110.574 lat, angles in degrees.
std::pair<double, double> project_lonlat(double lon, double lat, double lat0);

// Parses the panel CSV without filtering. Required columns: station_id, day,
// pm25, aod, and either x_km/y_km or lon/lat (projected with lat0 = mean
// latitude). Optional region_id; any remaining columns are covariates.
Dataset read_dataset_csv(const std::string& path);

// read_dataset_csv + optional grid-based region assignment (skipped when the
// file carries region_id) + validate_dataset.
Dataset ingest_csv(const std::string& path, int min_per_day = 30, int min_per_station = 30,
                   std::optional<RegionGrid> grid = std::nullopt);

void write_dataset_csv(const Dataset& data, const std::string& path);

// temp-file-plus-rename so partially written outputs never appear.
void atomic_write_text(const std::string& path, const std::string& content);

void write_predictions_csv(const std::vector<PredictionRow>& rows, const std::string& path);
void write_surface_csv(const std::vector<SurfaceCell>& cells, const std::string& path);
void write_precision_export(const PrecisionExport& exported, const std::string& matrix_path,
                            const std::string& labels_path);

// Table-shaped summary (rows = models, columns = scheme x {RMSE, R2}) at
// 2-decimal precision, plus full-precision per-fold detail rows.
void write_report_table_csv(const std::vector<EvalReport>& reports, const std::string& path);
void write_report_details_csv(const EvalReport& report, const std::string& path);
std::string report_json(const std::vector<EvalReport>& reports);

void write_sweep_csv(const SweepResult& sweep, const std::string& path);
void write_sweep_summary_csv(const SweepResult& sweep, const std::string& path);

std::string truth_json(const TruthRecord& truth);

// FitResult persistence; the model is rebuilt deterministically from the
// dataset and the echoed configuration, so predictions never refit.
struct FitArtifact {
  ModelKind kind = ModelKind::Lmm;
  FitResult result;
  double cell_km = 0.0;  // region grid used (0 = regions came with the data)
  double buffer_fraction = 0.0;
  double max_edge = 0.0;  // 0 = default
  int latent_dim = 0;
  int day_count = 0;
};

std::string fit_artifact_json(const FitArtifact& artifact);
FitArtifact fit_artifact_from_json(const std::string& text);

std::string format_metric(double value);  // fixed 2-decimal table cells

}  // namespace pmfield
