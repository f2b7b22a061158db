#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <random>
#include <set>
#include <vector>

#include <pmfield/dataset.hpp>
#include <pmfield/errors.hpp>

using namespace pmfield;

namespace {

Dataset toy(int n_stations, int n_days, int obs_per_station_day = 1) {
  (void)obs_per_station_day;
  Dataset d;
  for (int s = 0; s < n_stations; ++s)
    d.stations.push_back({"s" + std::to_string(s), double(s), 0.0, -1});
  for (int s = 0; s < n_stations; ++s)
    for (int t = 1; t <= n_days; ++t) {
      Observation o;
      o.station = s;
      o.day = t;
      o.pm = 1.0 + s + t;
      o.aod = 0.5;
      d.observations.push_back(o);
    }
  return d;
}

// Independent fixed-point filter: drop-and-repeat on (station, day) pairs.
std::vector<std::pair<int, int>> brute_force_filter(std::vector<std::pair<int, int>> rows,
                                                    int min_day, int min_station) {
  while (true) {
    std::map<int, int> per_day;
    std::map<int, int> per_station;
    for (auto [s, t] : rows) {
      ++per_day[t];
      ++per_station[s];
    }
    std::vector<std::pair<int, int>> kept;
    for (auto [s, t] : rows)
      if (per_day[t] >= min_day && per_station[s] >= min_station) kept.emplace_back(s, t);
    if (kept.size() == rows.size()) return rows;
    rows = std::move(kept);
  }
}

}  // namespace

TEST_CASE("validate keeps a dataset already above thresholds") {
  Dataset d = toy(40, 35);
  Dataset v = validate_dataset(d, 30, 30);
  CHECK(v.n_obs() == d.n_obs());
  CHECK(v.stations.size() == 40);
  CHECK(v.day_count == 35);
}

TEST_CASE("station below the temporal threshold is removed with its rows") {
  Dataset d = toy(35, 40);
  // station 0 keeps only 29 days
  std::erase_if(d.observations,
                [](const Observation& o) { return o.station == 0 && o.day > 29; });
  Dataset v = validate_dataset(d, 1, 30);
  CHECK(v.stations.size() == 34);
  CHECK(v.station_index("s0") == -1);
  CHECK(v.n_obs() == 34u * 40u);
}

TEST_CASE("filter iterates to a fixed point and matches brute force") {
  // 5-station toy where dropping a sparse day pushes a station below its
  // threshold, so one pass is not enough.
  Dataset d;
  for (int s = 0; s < 5; ++s) d.stations.push_back({"s" + std::to_string(s), double(s), 0.0, -1});
  auto add = [&](int s, int t) {
    Observation o;
    o.station = s;
    o.day = t;
    o.pm = 1.0;
    o.aod = 0.0;
    d.observations.push_back(o);
  };
  // days 1..3 well observed; day 4 observed only by station 4, which itself
  // has exactly the minimum count only while day 4 survives
  for (int s = 0; s < 4; ++s)
    for (int t = 1; t <= 3; ++t) add(s, t);
  add(4, 1);
  add(4, 4);

  const int min_day = 2, min_station = 2;
  std::vector<std::pair<int, int>> rows;
  for (const auto& o : d.observations) rows.emplace_back(o.station, o.day);
  auto expect = brute_force_filter(rows, min_day, min_station);

  Dataset v = validate_dataset(d, min_day, min_station);
  CHECK(v.n_obs() == expect.size());
  CHECK(v.station_index("s4") == -1);  // removed only after day 4 is dropped

  // idempotence
  Dataset again = validate_dataset(v, min_day, min_station);
  CHECK(again.n_obs() == v.n_obs());
  CHECK(again.day_count == v.day_count);
}

TEST_CASE("duplicate (station, day) pairs are rejected") {
  Dataset d = toy(3, 3);
  d.observations.push_back(d.observations.front());
  CHECK_THROWS_AS(validate_dataset(d, 1, 1), DuplicateKey);
}

TEST_CASE("empty result after filtering throws") {
  Dataset d = toy(2, 2);
  CHECK_THROWS_AS(validate_dataset(d, 30, 30), EmptyAfterFilter);
}

TEST_CASE("day indices are compacted to 1..T") {
  Dataset d = toy(3, 1);
  for (auto& o : d.observations) o.day = 100 + o.station;  // days 100, 101, 102 per station
  for (auto& o : d.observations) o.day = 100;              // single day labelled 100
  Dataset v = validate_dataset(d, 1, 1);
  CHECK(v.day_count == 1);
  CHECK(v.observations.front().day == 1);
  REQUIRE(v.day_labels.size() == 1);
  CHECK(v.day_labels[0] == "100");
}

TEST_CASE("region grid assignment") {
  RegionGrid grid{1.0, 0.0, 0.0};

  SUBCASE("containment") {
    auto cell = grid.cell_of(0.5, 0.5);
    CHECK(cell.first == 0);
    CHECK(cell.second == 0);
  }
  SUBCASE("boundary goes to the higher cell") {
    auto cell = grid.cell_of(1.0, 0.5);
    CHECK(cell.first == 1);
    CHECK(cell.second == 0);
  }
  SUBCASE("four corners of a 2x2 square get distinct regions") {
    std::vector<Station> stations = {{"a", 0.5, 0.5, -1},
                                     {"b", 1.5, 0.5, -1},
                                     {"c", 0.5, 1.5, -1},
                                     {"d", 1.5, 1.5, -1}};
    auto assigned = assign_regions(stations, grid);
    std::set<int> regions;
    for (const auto& s : assigned) regions.insert(s.region);
    CHECK(regions.size() == 4);
  }
  SUBCASE("explicit regions are left untouched") {
    std::vector<Station> stations = {{"a", 0.5, 0.5, 7}, {"b", 1.5, 0.5, -1}};
    auto assigned = assign_regions(stations, grid);
    CHECK(assigned[0].region == 7);
    CHECK(assigned[1].region != 7);
    CHECK(assigned[1].region >= 0);
  }
  SUBCASE("translation consistency") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    std::vector<Station> stations;
    for (int i = 0; i < 40; ++i)
      stations.push_back({"s" + std::to_string(i), u(rng), u(rng), -1});
    auto base = assign_regions(stations, RegionGrid{2.5, 0.0, 0.0});
    const double dx = 13.25, dy = -4.5;
    auto shifted = stations;
    for (auto& s : shifted) {
      s.x += dx;
      s.y += dy;
    }
    auto moved = assign_regions(shifted, RegionGrid{2.5, dx, dy});
    for (std::size_t i = 0; i < stations.size(); ++i)
      for (std::size_t j = 0; j < stations.size(); ++j)
        CHECK((base[i].region == base[j].region) == (moved[i].region == moved[j].region));
  }
}

TEST_CASE("split by stations") {
  Dataset d = validate_dataset(toy(3, 4), 1, 1);

  SUBCASE("test rows separated, train keeps the rest") {
    auto [train, test] = split_by_stations(d, {"s0"}, {});
    CHECK(train.stations.size() == 2);
    CHECK(test.stations.size() == 1);
    CHECK(train.n_obs() == 8);
    CHECK(test.n_obs() == 4);
  }
  SUBCASE("dropped rows appear in neither output") {
    auto [train, test] = split_by_stations(d, {"s0"}, {"s1"});
    CHECK(train.stations.size() == 1);
    CHECK(train.stations[0].id == "s2");
    CHECK(train.n_obs() + test.n_obs() + 4 == d.n_obs());
  }
  SUBCASE("overlapping test and dropped sets are rejected") {
    CHECK_THROWS_AS(split_by_stations(d, {"s0"}, {"s0"}), UnknownStation);
  }
  SUBCASE("unknown station id is rejected") {
    CHECK_THROWS_AS(split_by_stations(d, {"zz"}, {}), UnknownStation);
  }
  SUBCASE("partition property on random subsets") {
    auto [train, test] = split_by_stations(d, {"s1"}, {"s2"});
    CHECK(train.n_obs() + test.n_obs() + 4 == d.n_obs());
    // day indexing preserved for alignment
    CHECK(train.day_count == d.day_count);
    CHECK(test.day_count == d.day_count);
  }
}
