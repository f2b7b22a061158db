#include "pmfield/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "pmfield/errors.hpp"

namespace pmfield {

std::pair<long long, long long> RegionGrid::cell_of(double x, double y) const {
  // floor of the scaled offset; a point exactly on a boundary lands in the
  // higher cell because cells are half-open [lo, hi).
  auto cx = static_cast<long long>(std::floor((x - x0) / cell_size));
  auto cy = static_cast<long long>(std::floor((y - y0) / cell_size));
  return {cx, cy};
}

int Dataset::station_index(const std::string& id) const {
  for (std::size_t i = 0; i < stations.size(); ++i)
    if (stations[i].id == id) return static_cast<int>(i);
  return -1;
}

double Dataset::domain_diameter() const {
  double best = 0.0;
  for (std::size_t i = 0; i < stations.size(); ++i)
    for (std::size_t j = i + 1; j < stations.size(); ++j) {
      double dx = stations[i].x - stations[j].x;
      double dy = stations[i].y - stations[j].y;
      best = std::max(best, dx * dx + dy * dy);
    }
  return std::sqrt(best);
}

namespace {

void check_structure(const Dataset& raw) {
  const int n_station = static_cast<int>(raw.stations.size());
  const long long expected_cov = raw.covariate_count();
  std::unordered_set<std::string> ids;
  for (const auto& s : raw.stations) {
    if (!std::isfinite(s.x) || !std::isfinite(s.y))
      throw NonFinite("station " + s.id + " has non-finite coordinates");
    if (!ids.insert(s.id).second) throw DuplicateKey("station id " + s.id);
  }
  std::unordered_set<long long> keys;
  keys.reserve(raw.observations.size() * 2);
  for (const auto& o : raw.observations) {
    if (o.station < 0 || o.station >= n_station)
      throw UnknownStation("observation references station index " + std::to_string(o.station));
    if (!std::isfinite(o.pm)) throw NonFinite("pm at station " + raw.stations[o.station].id);
    if (!std::isfinite(o.aod)) throw NonFinite("aod at station " + raw.stations[o.station].id);
    if (static_cast<long long>(o.covariates.size()) != expected_cov)
      throw DimensionMismatch("covariate vector length " + std::to_string(o.covariates.size()) +
                              " != " + std::to_string(expected_cov));
    long long key = static_cast<long long>(o.station) * 4000000000LL + o.day;
    if (!keys.insert(key).second)
      throw DuplicateKey("(station " + raw.stations[o.station].id + ", day " +
                         std::to_string(o.day) + ")");
  }
}

}  // namespace

Dataset validate_dataset(const Dataset& raw, int min_per_day, int min_per_station) {
  check_structure(raw);

  std::vector<char> keep(raw.observations.size(), 1);
  // Fixed-point filter: dropping a day can push a station below threshold and
  // vice versa, so iterate until nothing changes.
  while (true) {
    std::map<int, int> day_counts;
    std::unordered_map<int, int> station_counts;
    for (std::size_t i = 0; i < raw.observations.size(); ++i) {
      if (!keep[i]) continue;
      ++day_counts[raw.observations[i].day];
      ++station_counts[raw.observations[i].station];
    }
    bool changed = false;
    for (std::size_t i = 0; i < raw.observations.size(); ++i) {
      if (!keep[i]) continue;
      const auto& o = raw.observations[i];
      if (day_counts[o.day] < min_per_day || station_counts[o.station] < min_per_station) {
        keep[i] = 0;
        changed = true;
      }
    }
    if (!changed) break;
  }

  std::size_t n_kept = 0;
  for (char k : keep) n_kept += k;
  if (n_kept == 0) throw EmptyAfterFilter();

  // Compact surviving stations, days, and regions to dense indices.
  std::vector<int> station_map(raw.stations.size(), -1);
  std::map<int, int> day_map;  // ordered: dense index follows original day order
  for (std::size_t i = 0; i < raw.observations.size(); ++i) {
    if (!keep[i]) continue;
    station_map[raw.observations[i].station] = 0;
    day_map[raw.observations[i].day] = 0;
  }

  Dataset out;
  out.covariate_names = raw.covariate_names;
  for (std::size_t s = 0; s < raw.stations.size(); ++s) {
    if (station_map[s] == 0) {
      station_map[s] = static_cast<int>(out.stations.size());
      out.stations.push_back(raw.stations[s]);
    }
  }
  int next_day = 1;
  for (auto& [orig, dense] : day_map) {
    dense = next_day++;
    out.day_labels.push_back(raw.day_labels.empty() ? std::to_string(orig)
                                                    : raw.day_labels[static_cast<size_t>(orig) - 1]);
  }
  out.day_count = next_day - 1;

  std::map<int, int> region_map;
  for (auto& s : out.stations)
    if (s.region >= 0) region_map[s.region] = 0;
  int next_region = 0;
  for (auto& [orig, dense] : region_map) {
    dense = next_region++;
    out.region_labels.push_back(raw.region_labels.empty()
                                    ? std::to_string(orig)
                                    : raw.region_labels[static_cast<size_t>(orig)]);
  }
  out.region_count = next_region;
  for (auto& s : out.stations)
    if (s.region >= 0) s.region = region_map[s.region];

  out.observations.reserve(n_kept);
  for (std::size_t i = 0; i < raw.observations.size(); ++i) {
    if (!keep[i]) continue;
    Observation o = raw.observations[i];
    o.station = station_map[o.station];
    o.day = day_map[o.day];
    out.observations.push_back(std::move(o));
  }
  return out;
}

std::vector<Station> assign_regions(std::vector<Station> stations, const RegionGrid& grid) {
  if (grid.cell_size <= 0) throw ConfigError("region grid cell_size must be > 0");
  // Grid-derived ids must not collide with explicit ones.
  int base = 0;
  for (const auto& s : stations) base = std::max(base, s.region + 1);
  std::map<std::pair<long long, long long>, int> cells;
  for (auto& s : stations) {
    if (s.region >= 0) continue;
    auto cell = grid.cell_of(s.x, s.y);
    auto [it, inserted] = cells.emplace(cell, 0);
    if (inserted) it->second = base + static_cast<int>(cells.size()) - 1;
    s.region = it->second;
  }
  return stations;
}

std::pair<Dataset, Dataset> split_by_stations(const Dataset& data,
                                              const std::set<std::string>& test_stations,
                                              const std::set<std::string>& dropped_stations) {
  for (const auto& id : test_stations) {
    if (data.station_index(id) < 0) throw UnknownStation(id);
    if (dropped_stations.count(id))
      throw UnknownStation(id + " appears in both test and dropped sets");
  }
  for (const auto& id : dropped_stations)
    if (data.station_index(id) < 0) throw UnknownStation(id);

  auto subset = [&](auto member_of) {
    Dataset out;
    out.covariate_names = data.covariate_names;
    out.day_count = data.day_count;
    out.day_labels = data.day_labels;
    out.region_count = data.region_count;
    out.region_labels = data.region_labels;
    std::vector<int> station_map(data.stations.size(), -1);
    for (std::size_t s = 0; s < data.stations.size(); ++s) {
      if (member_of(data.stations[s].id)) {
        station_map[s] = static_cast<int>(out.stations.size());
        out.stations.push_back(data.stations[s]);
      }
    }
    for (const auto& o : data.observations) {
      if (station_map[o.station] < 0) continue;
      Observation copy = o;
      copy.station = station_map[o.station];
      out.observations.push_back(std::move(copy));
    }
    return out;
  };

  Dataset train = subset([&](const std::string& id) {
    return test_stations.count(id) == 0 && dropped_stations.count(id) == 0;
  });
  Dataset test = subset([&](const std::string& id) { return test_stations.count(id) != 0; });
  return {std::move(train), std::move(test)};
}

}  // namespace pmfield
