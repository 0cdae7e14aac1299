#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <dbnmix/data_io.hpp>

#include "test_util.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>

using namespace dbnmix;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

}  // namespace

TEST_CASE("load a handwritten CSV") {
  auto path = temp_path("dbnmix_tiny.csv");
  write_text_file(path, "traj,t,x1,x2\n1,1,1.5,2\n1,2,3,4\n");
  TrajectoryDataset data = load_dataset(path.string(), 1);
  CHECK(data.n_traj == 1);
  CHECK(data.horizon == 2);
  CHECK(data.dim == 2);
  CHECK(data.lag_order == 1);
  CHECK(data.x(0, 0, 0) == 1.5);
  CHECK(data.x(0, 0, 1) == 2.0);
  CHECK(data.x(0, 1, 0) == 3.0);
  CHECK(data.x(0, 1, 1) == 4.0);
  std::filesystem::remove(path);
}

TEST_CASE("malformed CSV errors carry the file location") {
  auto path = temp_path("dbnmix_bad.csv");
  write_text_file(path, "traj,t,x1,x2\n1,1,1.0,2.0\n1,2,3.0\n");
  bool threw = false;
  try {
    load_dataset(path.string(), 0);
  } catch (const std::exception& e) {
    threw = true;
    std::string msg = e.what();
    CHECK(msg.find(path.string()) != std::string::npos);
    CHECK(msg.find(":3") != std::string::npos);  // offending line number
  }
  CHECK(threw);

  write_text_file(path, "traj,t,x1,x2\n1,1,abc,2.0\n");
  CHECK_THROWS_AS(load_dataset(path.string(), 0), std::runtime_error);

  CHECK_THROWS_AS(load_dataset((temp_path("dbnmix_missing_zzz.csv")).string(), 0),
                  std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("save then load reproduces every value bit for bit") {
  TrajectoryDataset data = testutil::random_dataset(3, 5, 4, 2, 5);
  auto path = temp_path("dbnmix_roundtrip.csv");
  save_dataset(data, path.string());
  TrajectoryDataset back = load_dataset(path.string(), 2);
  REQUIRE(back.n_traj == data.n_traj);
  REQUIRE(back.horizon == data.horizon);
  REQUIRE(back.dim == data.dim);
  CHECK(back.values == data.values);
  std::filesystem::remove(path);
}

TEST_CASE("JSON round trip") {
  TrajectoryDataset data = testutil::random_dataset(2, 4, 3, 1, 6);
  TrajectoryDataset back = dataset_from_json(dataset_to_json(data));
  CHECK(back.n_traj == data.n_traj);
  CHECK(back.horizon == data.horizon);
  CHECK(back.dim == data.dim);
  CHECK(back.lag_order == data.lag_order);
  CHECK(back.values == data.values);
}

TEST_CASE("select_trajectories") {
  TrajectoryDataset data = testutil::random_dataset(4, 3, 2, 1, 7);
  TrajectoryDataset picked = select_trajectories(data, {2, 0});
  REQUIRE(picked.n_traj == 2);
  // keeps the requested order, duplicates allowed
  for (int t = 0; t < 3; ++t)
    for (int i = 0; i < 2; ++i) {
      CHECK(picked.x(0, t, i) == data.x(2, t, i));
      CHECK(picked.x(1, t, i) == data.x(0, t, i));
    }
  CHECK_THROWS_AS(select_trajectories(data, {4}), std::out_of_range);
  CHECK_THROWS_AS(select_trajectories(data, {-1}), std::out_of_range);
}

TEST_CASE("subsample basics") {
  TrajectoryDataset data = testutil::random_dataset(5, 4, 2, 1, 8);

  // full-size subsample returns all trajectories (in some order-insensitive
  // sense: here, ascending, so identical values)
  TrajectoryDataset full = subsample(data, {5, 3});
  CHECK(full.values == data.values);

  TrajectoryDataset one = subsample(data, {2, 3});
  CHECK(one.n_traj == 2);
  TrajectoryDataset again = subsample(data, {2, 3});
  CHECK(one.values == again.values);

  SubsampleSpec too_many{6, 0};
  CHECK_THROWS_AS(subsample(data, too_many), std::out_of_range);
  SubsampleSpec none{0, 0};
  CHECK_THROWS_AS(subsample(data, none), std::out_of_range);
}

TEST_CASE("subsample is uniform over trajectories") {
  // mark each trajectory by a constant value so the draw is identifiable
  TrajectoryDataset data;
  data.n_traj = 3;
  data.horizon = 2;
  data.dim = 1;
  data.lag_order = 0;
  data.values = {0.0, 0.0, 1.0, 1.0, 2.0, 2.0};

  std::map<int, int> counts;
  const int n_runs = 10000;
  for (int s = 0; s < n_runs; ++s) {
    TrajectoryDataset draw = subsample(data, {1, static_cast<std::uint64_t>(s)});
    counts[static_cast<int>(draw.x(0, 0, 0))]++;
  }
  // each trajectory should appear ~1/3 of the time; 3-sigma binomial bound
  double expect = n_runs / 3.0;
  double bound = 3.0 * std::sqrt(n_runs * (1.0 / 3.0) * (2.0 / 3.0));
  for (int k = 0; k < 3; ++k) {
    INFO("trajectory ", k, " drawn ", counts[k], " times");
    CHECK(std::abs(counts[k] - expect) < bound);
  }
}

TEST_CASE("train/validation split") {
  TrajectoryDataset data = testutil::random_dataset(10, 4, 2, 1, 9);
  auto split = train_val_split(data, 0.3, 42);
  CHECK(split.first.n_traj == 7);
  CHECK(split.second.n_traj == 3);

  // deterministic
  auto split2 = train_val_split(data, 0.3, 42);
  CHECK(split.first.values == split2.first.values);
  CHECK(split.second.values == split2.second.values);

  // a different seed produces a different partition eventually
  bool any_diff = false;
  for (std::uint64_t s = 0; s < 20 && !any_diff; ++s)
    any_diff = train_val_split(data, 0.3, s).second.values != split.second.values;
  CHECK(any_diff);

  // the two sides partition the original trajectories: every original row
  // appears exactly once across the two sides
  std::multiset<double> original(data.values.begin(), data.values.end());
  std::multiset<double> combined(split.first.values.begin(), split.first.values.end());
  combined.insert(split.second.values.begin(), split.second.values.end());
  CHECK(original == combined);

  // both sides stay nonempty even at extreme fractions
  auto lop = train_val_split(data, 0.999, 1);
  CHECK(lop.first.n_traj >= 1);
  CHECK(lop.second.n_traj >= 1);
  auto tiny = train_val_split(data, 0.0001, 1);
  CHECK(tiny.first.n_traj >= 1);
  CHECK(tiny.second.n_traj >= 1);

  TrajectoryDataset single = testutil::random_dataset(1, 4, 2, 1, 10);
  CHECK_THROWS_AS(train_val_split(single, 0.3, 0), std::out_of_range);
  CHECK_THROWS_AS(train_val_split(data, 1.5, 0), std::out_of_range);
}
