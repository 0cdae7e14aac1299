#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "dbnmix/pipeline.hpp"

namespace {

// Config-file keys are the long flag names without the leading dashes.
// Explicitly passed flags win over file values.
void apply_config_file(const std::string& path, const CLI::App* cmd,
                       dbnmix::PipelineConfig& cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }

  using Setter = std::function<void(const nlohmann::json&)>;
  const std::vector<std::pair<std::string, Setter>> keys = {
      {"data", [&](const nlohmann::json& v) { cfg.data_path = v.get<std::string>(); }},
      {"out-dir", [&](const nlohmann::json& v) { cfg.out_dir = v.get<std::string>(); }},
      {"lag-order", [&](const nlohmann::json& v) { cfg.lag_order = v.get<int>(); }},
      {"models", [&](const nlohmann::json& v) { cfg.n_models = v.get<int>(); }},
      {"subsample-size", [&](const nlohmann::json& v) { cfg.subsample_size = v.get<int>(); }},
      {"lambda-w", [&](const nlohmann::json& v) { cfg.lambda_w = v.get<double>(); }},
      {"lambda-a", [&](const nlohmann::json& v) { cfg.lambda_a = v.get<double>(); }},
      {"beta", [&](const nlohmann::json& v) { cfg.beta = v.get<double>(); }},
      {"epsilon", [&](const nlohmann::json& v) { cfg.epsilon = v.get<double>(); }},
      {"lambda-min", [&](const nlohmann::json& v) { cfg.lambda_min = v.get<double>(); }},
      {"step-size", [&](const nlohmann::json& v) { cfg.step_size = v.get<double>(); }},
      {"burn-in", [&](const nlohmann::json& v) { cfg.burn_in = v.get<int>(); }},
      {"samples", [&](const nlohmann::json& v) { cfg.n_samples = v.get<int>(); }},
      {"eval-draws", [&](const nlohmann::json& v) { cfg.eval_draws = v.get<int>(); }},
      {"hist-bins", [&](const nlohmann::json& v) { cfg.hist_bins = v.get<int>(); }},
      {"val-fraction", [&](const nlohmann::json& v) { cfg.val_fraction = v.get<double>(); }},
      {"temperature", [&](const nlohmann::json& v) { cfg.temperature = v.get<double>(); }},
      {"loss-sign", [&](const nlohmann::json& v) { cfg.loss_sign = v.get<int>(); }},
      {"time-limit", [&](const nlohmann::json& v) { cfg.ip_time_limit = v.get<double>(); }},
      {"seed", [&](const nlohmann::json& v) { cfg.seed = v.get<std::uint64_t>(); }},
      {"threads", [&](const nlohmann::json& v) { cfg.threads = v.get<int>(); }},
  };

  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const auto& [name, set] : keys) {
      if (key != name) continue;
      known = true;
      if (cmd->count("--" + name) == 0) set(value);
      break;
    }
    if (!known) throw std::runtime_error(path + ": unknown config key '" + key + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Empirical-Bayes mixture learning for dynamic Bayesian networks"};
  app.require_subcommand(1);

  dbnmix::GenerateConfig gen;
  CLI::App* gen_cmd =
      app.add_subcommand("generate", "Simulate a synthetic dataset and its ground truth");
  gen_cmd->add_option("--out", gen.out_data, "Output dataset CSV")->required();
  gen_cmd->add_option("--truth", gen.out_truth, "Ground-truth JSON (default: <out>.truth.json)");
  gen_cmd->add_option("--structure", gen.structure_path,
                      "Structure JSON to simulate from instead of a random DAG");
  gen_cmd->add_option("--dim", gen.dim, "Number of variables");
  gen_cmd->add_option("--lag-order", gen.lag_order, "Number of lag matrices");
  gen_cmd->add_option("--intra-edges", gen.intra_edges, "Intra-slice edges in the random DAG");
  gen_cmd->add_option("--inter-edges", gen.inter_edges, "Inter-slice (lagged) edges");
  gen_cmd->add_option("--coef-low", gen.coef_low, "Smallest coefficient magnitude");
  gen_cmd->add_option("--coef-high", gen.coef_high, "Largest coefficient magnitude");
  gen_cmd->add_option("--sigma", gen.sigma, "Innovation noise level");
  gen_cmd->add_option("--trajectories", gen.n_traj, "Number of trajectories");
  gen_cmd->add_option("--horizon", gen.horizon, "Time steps per trajectory");
  gen_cmd->add_option("--warmup", gen.warmup, "Discarded leading steps per trajectory");
  gen_cmd->add_option("--seed", gen.seed, "Random seed");

  dbnmix::PipelineConfig fit;
  std::string config_path;
  CLI::App* fit_cmd = app.add_subcommand("fit", "Run the full learning pipeline");
  fit_cmd->add_option("--config", config_path, "JSON config file; explicit flags override it");
  fit_cmd->add_option("--data", fit.data_path, "Input dataset CSV");
  fit_cmd->add_option("--out-dir", fit.out_dir, "Directory for run artifacts");
  fit_cmd->add_option("--lag-order", fit.lag_order, "Number of lag matrices");
  fit_cmd->add_option("--models", fit.n_models, "Number of mixture components");
  fit_cmd->add_option("--subsample-size", fit.subsample_size,
                      "Trajectories per structure-search subsample (0: half of training)");
  fit_cmd->add_option("--lambda-w", fit.lambda_w, "Intra-edge penalty (<0: data-driven)");
  fit_cmd->add_option("--lambda-a", fit.lambda_a, "Inter-edge penalty (<0: follow lambda-w)");
  fit_cmd->add_option("--beta", fit.beta, "Divergence parameter, must be negative");
  fit_cmd->add_option("--epsilon", fit.epsilon, "Divergence budget");
  fit_cmd->add_option("--lambda-min", fit.lambda_min,
                      "Lower bound for the dual lambda (<=0: scaled default)");
  fit_cmd->add_option("--step-size", fit.step_size, "Initial MALA step size");
  fit_cmd->add_option("--burn-in", fit.burn_in, "MALA burn-in iterations");
  fit_cmd->add_option("--samples", fit.n_samples, "Kept MALA samples per model");
  fit_cmd->add_option("--eval-draws", fit.eval_draws, "Mixture evaluation draws");
  fit_cmd->add_option("--hist-bins", fit.hist_bins, "Histogram bin count");
  fit_cmd->add_option("--val-fraction", fit.val_fraction, "Validation share of trajectories");
  fit_cmd->add_option("--temperature", fit.temperature, "Mixture softmax temperature");
  fit_cmd->add_option("--loss-sign", fit.loss_sign, "+1 literal Gibbs form, -1 low-loss");
  fit_cmd->add_option("--time-limit", fit.ip_time_limit,
                      "Structure-search time limit in seconds (0: none)");
  fit_cmd->add_option("--seed", fit.seed, "Base seed for all derived streams");
  fit_cmd->add_option("--threads", fit.threads, "Worker threads for per-model stages");

  std::string run_dir;
  CLI::App* report_cmd = app.add_subcommand("report", "Summarize a completed run directory");
  report_cmd->add_option("dir", run_dir, "Run directory written by fit")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_cmd->parsed()) {
      nlohmann::ordered_json summary = dbnmix::run_generate(gen);
      std::cout << summary.dump(2) << "\n";
    } else if (fit_cmd->parsed()) {
      if (!config_path.empty()) apply_config_file(config_path, fit_cmd, fit);
      if (fit.data_path.empty())
        throw std::runtime_error("fit: provide --data or the config key \"data\"");
      if (fit.out_dir.empty())
        throw std::runtime_error("fit: provide --out-dir or the config key \"out-dir\"");
      nlohmann::ordered_json report = dbnmix::run_pipeline(fit);
      std::cout << "run complete: " << fit.out_dir << "\n";
      std::cout << "weights:";
      for (const auto& w : report.at("weights")) std::cout << " " << w.dump();
      std::cout << "\n";
    } else if (report_cmd->parsed()) {
      dbnmix::run_report(run_dir, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
