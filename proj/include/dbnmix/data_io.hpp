#pragma once

#include "dbnmix/lsem.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <utility>

namespace dbnmix {

/// Uniform without-replacement draw of S trajectory indices.
struct SubsampleSpec {
  int subsample_size = 1;
  std::uint64_t seed = 0;
};

/// CSV layout: header `traj,t,x1,...,xd`, rows sorted by (traj, t),
/// 1-based trajectory and time indices.
void save_dataset(const TrajectoryDataset& data, const std::string& path);
TrajectoryDataset load_dataset(const std::string& path, int lag_order);

nlohmann::ordered_json dataset_to_json(const TrajectoryDataset& data);
TrajectoryDataset dataset_from_json(const nlohmann::json& j);

/// New dataset holding the selected trajectories (ascending index order),
/// full time range.
TrajectoryDataset select_trajectories(const TrajectoryDataset& data,
                                      const std::vector<int>& indices);

/// S distinct trajectories drawn uniformly over all N-choose-S subsets.
/// Deterministic given spec.seed.
TrajectoryDataset subsample(const TrajectoryDataset& data, const SubsampleSpec& spec);

/// Disjoint trajectory partition (train, validation); validation count is
/// round(val_fraction * N) clamped so both sides are nonempty.
std::pair<TrajectoryDataset, TrajectoryDataset> train_val_split(
    const TrajectoryDataset& data, double val_fraction, std::uint64_t seed);

}  // namespace dbnmix
