#pragma once

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <string>

namespace dbnmix {

// Full configuration of a fit run. Values < 0 (or 0 for subsample_size and
// lambda_min) select data-driven defaults, resolved once and echoed in the
// emitted report so every run is self-describing.
struct PipelineConfig {
  std::string data_path;
  std::string out_dir;
  int lag_order = 1;
  int n_models = 2;
  int subsample_size = 0;   // 0: half of the training trajectories, rounded up
  double lambda_w = -1.0;   // < 0: data-driven default penalty
  double lambda_a = -1.0;   // < 0: follow lambda_w
  double beta = -1.0;
  double epsilon = 0.1;
  double lambda_min = 0.0;  // <= 0: max(1e-3 * |reference loss|, 1e-9) per model
  double step_size = 0.1;
  int burn_in = 500;
  int n_samples = 500;
  int eval_draws = 2000;
  int hist_bins = 30;
  double val_fraction = 0.3;
  double temperature = 1.0;
  int loss_sign = -1;
  double ip_time_limit = 0.0;  // seconds; 0 disables the limit
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const;
};

// Stable per-purpose seed streams derived from one base seed; used so results
// do not depend on thread scheduling. stream ids: 0 validation split,
// 1 subsample base, 2 evaluation draws, 100+m chain of model m (1-based).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

// Runs split -> per-model structure search -> dual solve -> MALA chain ->
// mixture aggregation -> evaluation draws, writing all artifacts under
// cfg.out_dir (structures/, chains/, dual/, weights.json, eval_losses.csv,
// histogram.csv, report.json). Returns the report.json content. Stage errors
// carry the model index and stage name; artifacts already computed are
// flushed before the error propagates.
nlohmann::ordered_json run_pipeline(const PipelineConfig& cfg);

// Synthetic-data generation: either loads a structure file (JSON with mask,
// params, sigma) or draws a random DAG with the requested edge counts, then
// simulates and writes the dataset CSV plus a ground-truth JSON.
struct GenerateConfig {
  std::string out_data;
  std::string out_truth;
  std::string structure_path;  // optional; overrides the random-DAG fields
  int dim = 3;
  int lag_order = 1;
  int intra_edges = 2;
  int inter_edges = 3;
  double coef_low = 0.3;
  double coef_high = 0.7;
  double sigma = 0.1;
  int n_traj = 50;
  int horizon = 10;
  int warmup = 8;
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::ordered_json run_generate(const GenerateConfig& cfg);

// Reads every artifact of a completed run back from disk, prints a human
// summary (weights, Bayes factors, point losses, evaluation percentiles) to
// `out`, and returns the summary as JSON. Unreadable artifacts raise errors
// naming the offending file.
nlohmann::ordered_json run_report(const std::string& run_dir, std::ostream& out);

}  // namespace dbnmix
