#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

namespace pmfield {

// Planar station coordinates in km. Geodetic inputs must be projected at the
// I/O boundary (see project_lonlat in io.hpp). region == -1 means unassigned.
struct Station {
  std::string id;
  double x = 0.0;
  double y = 0.0;
  int region = -1;
};

// One (station, day) panel row. `station` indexes into Dataset::stations;
// `day` is a dense 1-based index after validation.
struct Observation {
  int station = -1;
  int day = 0;
  double pm = 0.0;
  double aod = 0.0;
  std::vector<double> covariates;
};

// Square-grid tessellation supplying region ids when the input lacks them.
// Cells are half-open: a point on a cell boundary belongs to the higher cell.
struct RegionGrid {
  double cell_size = 0.0;
  double x0 = 0.0;
  double y0 = 0.0;

  // Grid cell of a point, as (cx, cy) integer coordinates.
  std::pair<long long, long long> cell_of(double x, double y) const;
};

struct Dataset {
  std::vector<Station> stations;
  std::vector<Observation> observations;
  std::vector<std::string> covariate_names;
  int day_count = 0;     // T: days indexed 1..T after validation
  int region_count = 0;  // R: regions indexed 0..R-1
  std::vector<std::string> day_labels;     // dense day t -> original label (size T)
  std::vector<std::string> region_labels;  // region id -> original label (size R)

  int station_index(const std::string& id) const;  // -1 if absent
  std::size_t n_obs() const { return observations.size(); }
  int covariate_count() const { return static_cast<int>(covariate_names.size()); }

  // Largest pairwise station distance (km).
  double domain_diameter() const;
};

// Iteratively drops days with fewer than min_per_day observations and stations
// with fewer than min_per_station, until a fixed point; then compacts day and
// region indices to dense ranges. Throws DuplicateKey on repeated (station,
// day) pairs and EmptyAfterFilter when nothing survives.
Dataset validate_dataset(const Dataset& raw, int min_per_day = 30, int min_per_station = 30);

// Fills in region ids from the grid for stations without an explicit region.
// Stations that already carry a region id are left untouched.
std::vector<Station> assign_regions(std::vector<Station> stations, const RegionGrid& grid);

// Partitions rows by station: test rows, dropped rows (in neither output),
// train rows (everything else). Day indexing and labels are preserved so that
// train/test day indices stay aligned. Throws UnknownStation for ids not in
// the dataset and on overlapping test/dropped sets.
std::pair<Dataset, Dataset> split_by_stations(const Dataset& data,
                                              const std::set<std::string>& test_stations,
                                              const std::set<std::string>& dropped_stations);

}  // namespace pmfield
