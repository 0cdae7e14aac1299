#include "dbnmix/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include "dbnmix/cgvi_dual.hpp"
#include "dbnmix/data_io.hpp"
#include "dbnmix/mixture.hpp"
#include "dbnmix/sampler.hpp"
#include "dbnmix/struct_solver.hpp"

namespace dbnmix {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << content;
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

ordered_json read_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  try {
    return ordered_json::parse(in);
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

ordered_json matrix_json(const Eigen::MatrixXd& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, int rows, int cols,
                                 const std::string& ctx) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows)
    throw std::runtime_error(ctx + ": expected " + std::to_string(rows) + " rows");
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const auto& row = j[r];
    if (!row.is_array() || static_cast<int>(row.size()) != cols)
      throw std::runtime_error(ctx + ": expected " + std::to_string(cols) + " columns");
    for (int c = 0; c < cols; ++c) m(r, c) = row[c].get<double>();
  }
  return m;
}

ordered_json mask_json(const StructureMask& mask) {
  ordered_json j;
  j["dim"] = mask.dim;
  j["lag_order"] = mask.lag_order;
  ordered_json ew = ordered_json::array();
  for (int from = 0; from < mask.dim; ++from) {
    ordered_json row = ordered_json::array();
    for (int to = 0; to < mask.dim; ++to) row.push_back(static_cast<int>(mask.ew(from, to)));
    ew.push_back(std::move(row));
  }
  j["e_w"] = std::move(ew);
  ordered_json ea = ordered_json::array();
  for (int l = 0; l < mask.lag_order; ++l) {
    ordered_json lag = ordered_json::array();
    for (int from = 0; from < mask.dim; ++from) {
      ordered_json row = ordered_json::array();
      for (int to = 0; to < mask.dim; ++to)
        row.push_back(static_cast<int>(mask.ea(l, from, to)));
      lag.push_back(std::move(row));
    }
    ea.push_back(std::move(lag));
  }
  j["e_a"] = std::move(ea);
  return j;
}

StructureMask mask_from_json(const nlohmann::json& j, const std::string& ctx) {
  StructureMask mask(j.at("dim").get<int>(), j.at("lag_order").get<int>());
  const auto& ew = j.at("e_w");
  for (int from = 0; from < mask.dim; ++from)
    for (int to = 0; to < mask.dim; ++to)
      mask.ew(from, to) = ew.at(from).at(to).get<int>() ? 1 : 0;
  const auto& ea = j.at("e_a");
  if (static_cast<int>(ea.size()) != mask.lag_order)
    throw std::runtime_error(ctx + ": e_a lag count mismatch");
  for (int l = 0; l < mask.lag_order; ++l)
    for (int from = 0; from < mask.dim; ++from)
      for (int to = 0; to < mask.dim; ++to)
        mask.ea(l, from, to) = ea.at(l).at(from).at(to).get<int>() ? 1 : 0;
  mask.validate();
  return mask;
}

ordered_json params_json(const ParamSet& params) {
  ordered_json j;
  j["w"] = matrix_json(params.w);
  ordered_json a = ordered_json::array();
  for (const auto& al : params.a) a.push_back(matrix_json(al));
  j["a"] = std::move(a);
  return j;
}

ParamSet params_from_json(const nlohmann::json& j, int dim, int lag_order,
                          const std::string& ctx) {
  ParamSet params = ParamSet::zero(dim, lag_order);
  params.w = matrix_from_json(j.at("w"), dim, dim, ctx + " w");
  const auto& a = j.at("a");
  if (static_cast<int>(a.size()) != lag_order)
    throw std::runtime_error(ctx + ": a lag count mismatch");
  for (int l = 0; l < lag_order; ++l)
    params.a[l] = matrix_from_json(a[l], dim, dim, ctx + " a[" + std::to_string(l) + "]");
  return params;
}

std::string coord_name(const SupportCoord& c) {
  char buf[48];
  if (c.slot == EdgeSlot::Intra)
    std::snprintf(buf, sizeof(buf), "w_%d_%d", c.from + 1, c.to + 1);
  else
    std::snprintf(buf, sizeof(buf), "a%d_%d_%d", c.lag + 1, c.from + 1, c.to + 1);
  return buf;
}

std::string chain_csv(const SupportMap& map, const Eigen::MatrixXd& samples) {
  std::string out;
  for (std::size_t k = 0; k < map.entries.size(); ++k) {
    if (k) out += ',';
    out += coord_name(map.entries[k]);
  }
  out += '\n';
  for (Eigen::Index r = 0; r < samples.rows(); ++r) {
    for (Eigen::Index c = 0; c < samples.cols(); ++c) {
      if (c) out += ',';
      out += fmt17(samples(r, c));
    }
    out += '\n';
  }
  return out;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    fields.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return fields;
}

double parse_double_field(const std::string& field, const fs::path& path, int line_no) {
  double v = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v))
    throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                             ": invalid number '" + field + "'");
  return v;
}

// Reads a chain CSV back; column count comes from the header (empty header
// means an empty support).
Eigen::MatrixXd read_chain_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error(path.string() + ": missing header line");
  const std::size_t n_cols = line.empty() ? 0 : split_line(line).size();
  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (n_cols == 0) {
      if (!line.empty())
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                 ": expected empty row for empty support");
      rows.emplace_back();
      continue;
    }
    auto fields = split_line(line);
    if (fields.size() != n_cols)
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": expected " + std::to_string(n_cols) + " fields");
    std::vector<double> row(n_cols);
    for (std::size_t c = 0; c < n_cols; ++c)
      row[c] = parse_double_field(fields[c], path, line_no);
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd samples(static_cast<Eigen::Index>(rows.size()),
                          static_cast<Eigen::Index>(n_cols));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < n_cols; ++c)
      samples(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return samples;
}

// Nearest-rank percentile on an ascending-sorted vector.
double percentile_sorted(const std::vector<double>& sorted, double q) {
  const std::size_t n = sorted.size();
  if (q <= 0.0) return sorted.front();
  auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
  if (idx == 0) idx = 1;
  return sorted[std::min(idx - 1, n - 1)];
}

std::uint64_t split_mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double data_scale(const TrajectoryDataset& data) {
  double sum = 0.0;
  for (double v : data.values) sum += v * v;
  return data.values.empty() ? 0.0 : sum / static_cast<double>(data.values.size());
}

double resolve_lambda_min(const PipelineConfig& cfg, double reference_loss) {
  if (cfg.lambda_min > 0.0) return cfg.lambda_min;
  return std::max(1e-3 * std::abs(reference_loss), 1e-9);
}

struct ModelWork {
  IpSolution solution;
  double ref_loss = 0.0;
  double lambda_min = 0.0;
  DualSolution dual;
  SupportMap map;
  PosteriorChain chain;
  int stage_done = 0;  // 1 structure, 2 dual, 3 chain
  std::string error;
};

void write_structure_file(const fs::path& out_dir, int model, const ModelWork& wk,
                          double lambda_w, double lambda_a) {
  ordered_json j;
  j["model"] = model;
  j["mask"] = mask_json(wk.solution.mask);
  j["params"] = params_json(wk.solution.params);
  j["objective"] = wk.solution.objective;
  j["proven_optimal"] = wk.solution.proven_optimal;
  j["lambda_w"] = lambda_w;
  j["lambda_a"] = lambda_a;
  write_text(out_dir / "structures" / ("model_" + std::to_string(model) + ".json"),
             j.dump(2) + "\n");
}

void write_dual_file(const fs::path& out_dir, int model, const ModelWork& wk) {
  ordered_json j;
  j["model"] = model;
  j["reference_loss"] = wk.ref_loss;
  j["mu"] = wk.dual.mu;
  j["lambda"] = wk.dual.lambda;
  j["objective"] = wk.dual.objective;
  j["converged"] = wk.dual.converged;
  j["epsilon"] = wk.dual.epsilon;
  j["beta"] = wk.dual.beta;
  j["lambda_min"] = wk.lambda_min;
  write_text(out_dir / "dual" / ("model_" + std::to_string(model) + ".json"),
             j.dump(2) + "\n");
}

void write_chain_files(const fs::path& out_dir, int model, const ModelWork& wk) {
  const std::string stem = "model_" + std::to_string(model);
  write_text(out_dir / "chains" / (stem + ".csv"), chain_csv(wk.map, wk.chain.samples));
  ordered_json j;
  j["model"] = model;
  j["n_samples"] = wk.chain.samples.rows();
  j["acceptance_rate"] = wk.chain.acceptance_rate;
  j["mean_loss"] = wk.chain.mean_loss;
  write_text(out_dir / "chains" / (stem + ".json"), j.dump(2) + "\n");
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return split_mix64(base + split_mix64(stream));
}

void PipelineConfig::validate() const {
  if (data_path.empty()) throw std::invalid_argument("PipelineConfig: data_path is empty");
  if (out_dir.empty()) throw std::invalid_argument("PipelineConfig: out_dir is empty");
  if (lag_order < 0) throw std::invalid_argument("PipelineConfig: lag_order must be >= 0");
  if (n_models < 1) throw std::invalid_argument("PipelineConfig: need at least one model");
  if (subsample_size < 0)
    throw std::invalid_argument("PipelineConfig: subsample_size must be >= 0");
  if (!(beta < 0.0)) throw std::invalid_argument("PipelineConfig: beta must be < 0");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("PipelineConfig: epsilon must be >= 0");
  if (!(step_size > 0.0)) throw std::invalid_argument("PipelineConfig: step_size must be > 0");
  if (burn_in < 0) throw std::invalid_argument("PipelineConfig: burn_in must be >= 0");
  if (n_samples < 1) throw std::invalid_argument("PipelineConfig: n_samples must be >= 1");
  if (eval_draws < 1) throw std::invalid_argument("PipelineConfig: eval_draws must be >= 1");
  if (hist_bins < 1) throw std::invalid_argument("PipelineConfig: hist_bins must be >= 1");
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw std::invalid_argument("PipelineConfig: val_fraction must lie in (0,1)");
  if (!(temperature > 0.0))
    throw std::invalid_argument("PipelineConfig: temperature must be > 0");
  if (loss_sign != 1 && loss_sign != -1)
    throw std::invalid_argument("PipelineConfig: loss_sign must be +1 or -1");
  if (ip_time_limit < 0.0)
    throw std::invalid_argument("PipelineConfig: ip_time_limit must be >= 0");
  if (threads < 1) throw std::invalid_argument("PipelineConfig: threads must be >= 1");
}

nlohmann::ordered_json run_pipeline(const PipelineConfig& cfg) {
  cfg.validate();
  const TrajectoryDataset data = load_dataset(cfg.data_path, cfg.lag_order);
  auto split = train_val_split(data, cfg.val_fraction, derive_seed(cfg.seed, 0));
  const TrajectoryDataset& train = split.first;
  const TrajectoryDataset& val = split.second;

  const int n_models = cfg.n_models;
  const int subsample_size =
      cfg.subsample_size > 0 ? cfg.subsample_size : (train.n_traj + 1) / 2;
  if (subsample_size > train.n_traj)
    throw std::invalid_argument("run_pipeline: subsample_size exceeds training trajectories");

  double lambda_w = cfg.lambda_w;
  if (lambda_w < 0.0) {
    // data-driven default; floored so noiseless data keeps a positive penalty
    lambda_w = std::max(default_penalty(train), 1e-9 * (1.0 + data_scale(train)));
  }
  const double lambda_a = cfg.lambda_a < 0.0 ? lambda_w : cfg.lambda_a;

  const fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir / "structures");
  fs::create_directories(out_dir / "dual");
  fs::create_directories(out_dir / "chains");

  std::vector<ModelWork> work(n_models);

  // Flushes whatever has been computed so far so a failed run still leaves
  // inspectable artifacts on disk.
  auto flush_partial = [&]() {
    for (int m = 1; m <= n_models; ++m) {
      const ModelWork& wk = work[m - 1];
      try {
        if (wk.stage_done >= 1) write_structure_file(out_dir, m, wk, lambda_w, lambda_a);
        if (wk.stage_done >= 2) write_dual_file(out_dir, m, wk);
        if (wk.stage_done >= 3) write_chain_files(out_dir, m, wk);
      } catch (...) {
        // best-effort only
      }
    }
  };

  // Structure stage runs sequentially: each model excludes all previous
  // structures, so the searches are order-dependent by construction.
  IpConfig ip_cfg;
  ip_cfg.lambda_w = lambda_w;
  ip_cfg.lambda_a = lambda_a;
  ip_cfg.time_limit = cfg.ip_time_limit;
  const std::uint64_t subsample_base = derive_seed(cfg.seed, 1);
  for (int m = 1; m <= n_models; ++m) {
    try {
      SubsampleSpec draw{subsample_size, subsample_base + static_cast<std::uint64_t>(m)};
      TrajectoryDataset sample = subsample(train, draw);
      work[m - 1].solution = solve_ip(sample, ip_cfg);
      work[m - 1].stage_done = 1;
      ip_cfg.exclusions.push_back(work[m - 1].solution.mask);
    } catch (const std::exception& e) {
      flush_partial();
      throw std::runtime_error("model " + std::to_string(m) + " structure: " + e.what());
    }
  }

  // Dual solve and sampling are independent across models; the worker pool
  // shares only the read-only training set, and every chain has its own seed
  // stream, so the results cannot depend on scheduling.
  const LaggedDesign train_design(train);
  auto model_job = [&](int idx) {
    ModelWork& wk = work[idx];
    try {
      wk.ref_loss = loss(train_design, wk.solution.params);
      wk.lambda_min = resolve_lambda_min(cfg, wk.ref_loss);
      DualConfig dc;
      dc.epsilon = cfg.epsilon;
      dc.beta = cfg.beta;
      dc.lambda_min = wk.lambda_min;
      dc.reference_loss = wk.ref_loss;
      wk.dual = solve_dual(dc);
      wk.stage_done = 2;
    } catch (const std::exception& e) {
      wk.error = std::string("dual: ") + e.what();
      return;
    }
    try {
      wk.map = build_support_map(wk.solution.mask);
      SamplerConfig sc;
      sc.step_size = cfg.step_size;
      sc.burn_in = cfg.burn_in;
      sc.n_samples = cfg.n_samples;
      sc.seed = derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(idx) + 1);
      sc.loss_sign = cfg.loss_sign;
      wk.chain = run_mala(train, wk.map, wk.dual, extract_params(wk.solution.params, wk.map), sc);
      wk.stage_done = 3;
    } catch (const std::exception& e) {
      wk.error = std::string("sampler: ") + e.what();
    }
  };

  const int pool_size = std::min(cfg.threads, n_models);
  if (pool_size <= 1) {
    for (int idx = 0; idx < n_models; ++idx) model_job(idx);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(pool_size);
    for (int t = 0; t < pool_size; ++t)
      pool.emplace_back([&]() {
        for (int idx; (idx = next.fetch_add(1)) < n_models;) model_job(idx);
      });
    for (auto& t : pool) t.join();
  }
  for (int m = 1; m <= n_models; ++m) {
    if (!work[m - 1].error.empty()) {
      flush_partial();
      throw std::runtime_error("model " + std::to_string(m) + " " + work[m - 1].error);
    }
  }

  // aggregation
  std::vector<double> mean_losses(n_models);
  for (int m = 0; m < n_models; ++m) mean_losses[m] = work[m].chain.mean_loss;
  std::vector<double> weights;
  MixtureEnsemble ensemble;
  std::vector<double> eval_draws;
  std::vector<double> point_losses;
  std::vector<HistogramBin> hist;
  try {
    weights = mixture_weights(mean_losses, cfg.temperature);
    ensemble.weights = weights;
    for (int m = 0; m < n_models; ++m)
      ensemble.models.push_back({work[m].solution.mask, work[m].solution.params, work[m].map,
                                 work[m].dual, work[m].chain});
    eval_draws = sample_evaluation(ensemble, val, cfg.eval_draws, derive_seed(cfg.seed, 2));
    point_losses = point_estimate_losses(ensemble, val);
    hist = histogram(eval_draws, cfg.hist_bins);
  } catch (const std::exception& e) {
    flush_partial();
    throw std::runtime_error(std::string("aggregation: ") + e.what());
  }

  // artifacts, fixed order
  for (int m = 1; m <= n_models; ++m) {
    write_structure_file(out_dir, m, work[m - 1], lambda_w, lambda_a);
    write_dual_file(out_dir, m, work[m - 1]);
    write_chain_files(out_dir, m, work[m - 1]);
  }

  ordered_json weights_json;
  weights_json["temperature"] = cfg.temperature;
  weights_json["mean_losses"] = mean_losses;
  weights_json["weights"] = weights;
  write_text(out_dir / "weights.json", weights_json.dump(2) + "\n");

  std::string eval_csv = "draw,loss\n";
  for (int r = 0; r < cfg.eval_draws; ++r)
    eval_csv += std::to_string(r + 1) + "," + fmt17(eval_draws[r]) + "\n";
  write_text(out_dir / "eval_losses.csv", eval_csv);

  std::string hist_csv = "bin_left,bin_right,count\n";
  for (const auto& bin : hist)
    hist_csv +=
        fmt17(bin.left) + "," + fmt17(bin.right) + "," + std::to_string(bin.count) + "\n";
  write_text(out_dir / "histogram.csv", hist_csv);

  ordered_json bf = ordered_json::array();
  for (int i = 0; i < n_models; ++i) {
    ordered_json row = ordered_json::array();
    for (int j = 0; j < n_models; ++j) {
      if (weights[j] == 0.0)
        row.push_back(nullptr);
      else
        row.push_back(weights[i] / weights[j]);
    }
    bf.push_back(std::move(row));
  }

  std::vector<double> sorted_eval = eval_draws;
  std::sort(sorted_eval.begin(), sorted_eval.end());
  double eval_mean = 0.0;
  for (double v : sorted_eval) eval_mean += v;
  eval_mean /= static_cast<double>(sorted_eval.size());

  ordered_json report;
  // cfg.threads and cfg.out_dir are deliberately not echoed: outputs are
  // independent of the pool size and of where the run directory happens to
  // live, and must stay byte-identical across both.
  ordered_json config_echo;
  config_echo["data"] = cfg.data_path;
  config_echo["lag_order"] = cfg.lag_order;
  config_echo["models"] = n_models;
  config_echo["subsample_size"] = subsample_size;
  config_echo["lambda_w"] = lambda_w;
  config_echo["lambda_a"] = lambda_a;
  config_echo["beta"] = cfg.beta;
  config_echo["epsilon"] = cfg.epsilon;
  config_echo["lambda_min"] = cfg.lambda_min;
  config_echo["step_size"] = cfg.step_size;
  config_echo["burn_in"] = cfg.burn_in;
  config_echo["samples"] = cfg.n_samples;
  config_echo["eval_draws"] = cfg.eval_draws;
  config_echo["hist_bins"] = cfg.hist_bins;
  config_echo["val_fraction"] = cfg.val_fraction;
  config_echo["temperature"] = cfg.temperature;
  config_echo["loss_sign"] = cfg.loss_sign;
  config_echo["ip_time_limit"] = cfg.ip_time_limit;
  config_echo["seed"] = cfg.seed;
  report["config"] = std::move(config_echo);

  ordered_json data_info;
  data_info["path"] = cfg.data_path;
  data_info["n_traj"] = data.n_traj;
  data_info["horizon"] = data.horizon;
  data_info["dim"] = data.dim;
  data_info["lag_order"] = data.lag_order;
  data_info["n_train"] = train.n_traj;
  data_info["n_val"] = val.n_traj;
  report["data"] = std::move(data_info);

  ordered_json models = ordered_json::array();
  for (int m = 1; m <= n_models; ++m) {
    const ModelWork& wk = work[m - 1];
    ordered_json mj;
    mj["model"] = m;
    mj["weight"] = weights[m - 1];
    mj["structure_path"] = "structures/model_" + std::to_string(m) + ".json";
    ordered_json pe;
    pe["objective"] = wk.solution.objective;
    pe["proven_optimal"] = wk.solution.proven_optimal;
    pe["intra_edges"] = wk.solution.mask.count_intra();
    pe["inter_edges"] = wk.solution.mask.count_inter();
    pe["train_loss"] = wk.ref_loss;
    pe["validation_loss"] = point_losses[m - 1];
    mj["point_estimates"] = std::move(pe);
    ordered_json dj;
    dj["path"] = "dual/model_" + std::to_string(m) + ".json";
    dj["mu"] = wk.dual.mu;
    dj["lambda"] = wk.dual.lambda;
    dj["objective"] = wk.dual.objective;
    dj["converged"] = wk.dual.converged;
    mj["dual"] = std::move(dj);
    ordered_json cj;
    cj["path"] = "chains/model_" + std::to_string(m) + ".csv";
    cj["count"] = cfg.n_samples;
    cj["acceptance_rate"] = wk.chain.acceptance_rate;
    cj["mean_loss"] = wk.chain.mean_loss;
    mj["chain_samples"] = std::move(cj);
    models.push_back(std::move(mj));
  }
  report["models"] = std::move(models);
  report["weights"] = weights;
  report["bayes_factors"] = std::move(bf);
  report["point_estimate_losses"] = point_losses;

  ordered_json ev;
  ev["draws"] = cfg.eval_draws;
  ev["path"] = "eval_losses.csv";
  ev["mean"] = eval_mean;
  ev["median"] = percentile_sorted(sorted_eval, 0.5);
  ev["p05"] = percentile_sorted(sorted_eval, 0.05);
  ev["p95"] = percentile_sorted(sorted_eval, 0.95);
  ev["min"] = sorted_eval.front();
  ev["max"] = sorted_eval.back();
  report["evaluation"] = std::move(ev);

  ordered_json hj;
  hj["path"] = "histogram.csv";
  hj["bins"] = cfg.hist_bins;
  hj["total_count"] = cfg.eval_draws;
  report["histogram"] = std::move(hj);

  write_text(out_dir / "report.json", report.dump(2) + "\n");
  return report;
}

void GenerateConfig::validate() const {
  if (out_data.empty()) throw std::invalid_argument("GenerateConfig: out_data is empty");
  if (dim < 1) throw std::invalid_argument("GenerateConfig: dim must be >= 1");
  if (lag_order < 0) throw std::invalid_argument("GenerateConfig: lag_order must be >= 0");
  if (intra_edges < 0 || intra_edges > dim * (dim - 1) / 2)
    throw std::invalid_argument("GenerateConfig: intra_edges out of range for a DAG");
  if (inter_edges < 0 || inter_edges > lag_order * dim * dim)
    throw std::invalid_argument("GenerateConfig: inter_edges out of range");
  if (!(coef_low > 0.0) || !(coef_high >= coef_low))
    throw std::invalid_argument("GenerateConfig: need 0 < coef_low <= coef_high");
  if (!(sigma >= 0.0)) throw std::invalid_argument("GenerateConfig: sigma must be >= 0");
  if (n_traj < 1) throw std::invalid_argument("GenerateConfig: n_traj must be >= 1");
  if (horizon < lag_order + 1)
    throw std::invalid_argument("GenerateConfig: horizon must exceed lag_order");
  if (warmup < 0) throw std::invalid_argument("GenerateConfig: warmup must be >= 0");
}

namespace {

// Largest eigenvalue modulus of the companion form of the one-step linear map
// M_l = A_l (I - W)^{-1}; < 1 means the simulated process stays bounded.
double companion_spectral_radius(const ParamSet& params) {
  const int d = params.dim();
  const int p = params.lag_order();
  if (p == 0) return 0.0;
  Eigen::MatrixXd iw = (Eigen::MatrixXd::Identity(d, d) - params.w).inverse();
  Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(p * d, p * d);
  for (int l = 0; l < p; ++l) {
    Eigen::MatrixXd m = (params.a[l] * iw).transpose();
    comp.block(0, l * d, d, d) = m;
  }
  if (p > 1)
    comp.block(d, 0, (p - 1) * d, (p - 1) * d) =
        Eigen::MatrixXd::Identity((p - 1) * d, (p - 1) * d);
  return comp.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

nlohmann::ordered_json run_generate(const GenerateConfig& cfg) {
  cfg.validate();

  StructureMask mask(cfg.dim, cfg.lag_order);
  ParamSet params = ParamSet::zero(cfg.dim, cfg.lag_order);
  double sigma = cfg.sigma;

  if (!cfg.structure_path.empty()) {
    ordered_json j = read_json_file(cfg.structure_path);
    const std::string ctx = cfg.structure_path;
    const int d = j.at("dim").get<int>();
    const int p = j.at("lag_order").get<int>();
    mask = mask_from_json(j.at("mask"), ctx);
    if (mask.dim != d || mask.lag_order != p)
      throw std::runtime_error(ctx + ": mask dimensions disagree with dim/lag_order");
    params = params_from_json(j.at("params"), d, p, ctx);
    if (!params_supported(params, mask))
      throw std::runtime_error(ctx + ": params have entries outside the mask");
    if (j.contains("sigma")) sigma = j.at("sigma").get<double>();
    if (cfg.horizon < mask.lag_order + 1)
      throw std::invalid_argument("GenerateConfig: horizon must exceed the structure's lag order");
  } else {
    std::mt19937_64 rng(derive_seed(cfg.seed, 10));
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    // topological order, then pick intra edges pointing forward in it
    std::vector<int> order(cfg.dim);
    for (int i = 0; i < cfg.dim; ++i) order[i] = i;
    for (int i = cfg.dim - 1; i > 0; --i) {
      std::uniform_int_distribution<int> pick(0, i);
      std::swap(order[i], order[pick(rng)]);
    }
    std::vector<std::pair<int, int>> intra_candidates;
    for (int u = 0; u < cfg.dim; ++u)
      for (int v = u + 1; v < cfg.dim; ++v) intra_candidates.emplace_back(order[u], order[v]);
    for (int k = 0; k < cfg.intra_edges; ++k) {
      std::uniform_int_distribution<int> pick(k, static_cast<int>(intra_candidates.size()) - 1);
      std::swap(intra_candidates[k], intra_candidates[pick(rng)]);
      mask.ew(intra_candidates[k].first, intra_candidates[k].second) = 1;
    }
    std::vector<int> inter_candidates(cfg.lag_order * cfg.dim * cfg.dim);
    for (std::size_t k = 0; k < inter_candidates.size(); ++k)
      inter_candidates[k] = static_cast<int>(k);
    for (int k = 0; k < cfg.inter_edges; ++k) {
      std::uniform_int_distribution<int> pick(k, static_cast<int>(inter_candidates.size()) - 1);
      std::swap(inter_candidates[k], inter_candidates[pick(rng)]);
      mask.e_a[inter_candidates[k]] = 1;
    }
    mask.validate();

    SupportMap map = build_support_map(mask);
    Eigen::VectorXd theta(map.size());
    for (std::size_t k = 0; k < map.size(); ++k) {
      const double mag = cfg.coef_low + (cfg.coef_high - cfg.coef_low) * unif(rng);
      theta[static_cast<Eigen::Index>(k)] = unif(rng) < 0.5 ? -mag : mag;
    }
    params = embed_params(theta, map);

    // damp the lag dynamics until the process is stable
    for (int rounds = 0; rounds < 200 && companion_spectral_radius(params) > 0.95; ++rounds)
      for (auto& al : params.a) al *= 0.9;
  }

  TrajectoryDataset data = simulate(mask, params, sigma, cfg.n_traj, cfg.horizon,
                                    cfg.warmup, derive_seed(cfg.seed, 11));
  save_dataset(data, cfg.out_data);

  const std::string truth_path =
      cfg.out_truth.empty() ? cfg.out_data + ".truth.json" : cfg.out_truth;
  ordered_json truth;
  truth["dim"] = mask.dim;
  truth["lag_order"] = mask.lag_order;
  truth["sigma"] = sigma;
  truth["n_traj"] = cfg.n_traj;
  truth["horizon"] = cfg.horizon;
  truth["warmup"] = cfg.warmup;
  truth["seed"] = cfg.seed;
  truth["mask"] = mask_json(mask);
  truth["params"] = params_json(params);
  write_text(truth_path, truth.dump(2) + "\n");

  ordered_json summary;
  summary["data_path"] = cfg.out_data;
  summary["truth_path"] = truth_path;
  summary["dim"] = mask.dim;
  summary["lag_order"] = mask.lag_order;
  summary["n_traj"] = cfg.n_traj;
  summary["horizon"] = cfg.horizon;
  summary["sigma"] = sigma;
  summary["intra_edges"] = mask.count_intra();
  summary["inter_edges"] = mask.count_inter();
  summary["spectral_radius"] = companion_spectral_radius(params);
  return summary;
}

nlohmann::ordered_json run_report(const std::string& run_dir, std::ostream& out) {
  const fs::path dir(run_dir);

  const ordered_json report = read_json_file(dir / "report.json");
  const ordered_json weights_file = read_json_file(dir / "weights.json");
  const std::vector<double> weights = weights_file.at("weights").get<std::vector<double>>();
  const int n_models = static_cast<int>(weights.size());

  std::vector<double> point_losses =
      report.at("point_estimate_losses").get<std::vector<double>>();
  if (static_cast<int>(point_losses.size()) != n_models)
    throw std::runtime_error((dir / "report.json").string() +
                             ": point_estimate_losses size mismatch");

  // per-model artifacts: verify the files are present and parseable
  std::vector<double> acceptance(n_models);
  std::vector<double> chain_mean_loss(n_models);
  for (int m = 1; m <= n_models; ++m) {
    read_json_file(dir / "structures" / ("model_" + std::to_string(m) + ".json"));
    read_json_file(dir / "dual" / ("model_" + std::to_string(m) + ".json"));
    const fs::path chain_path = dir / "chains" / ("model_" + std::to_string(m) + ".csv");
    const Eigen::MatrixXd samples = read_chain_csv(chain_path);
    const ordered_json sidecar =
        read_json_file(dir / "chains" / ("model_" + std::to_string(m) + ".json"));
    if (sidecar.at("n_samples").get<Eigen::Index>() != samples.rows())
      throw std::runtime_error(chain_path.string() + ": row count disagrees with sidecar");
    acceptance[m - 1] = sidecar.at("acceptance_rate").get<double>();
    chain_mean_loss[m - 1] = sidecar.at("mean_loss").get<double>();
  }

  // evaluation draws, re-summarized from the raw CSV
  const fs::path eval_path = dir / "eval_losses.csv";
  std::ifstream eval_in(eval_path, std::ios::binary);
  if (!eval_in) throw std::runtime_error(eval_path.string() + ": cannot open");
  std::string line;
  if (!std::getline(eval_in, line) || line != "draw,loss")
    throw std::runtime_error(eval_path.string() + ": bad header");
  std::vector<double> eval_values;
  int line_no = 1;
  while (std::getline(eval_in, line)) {
    ++line_no;
    auto fields = split_line(line);
    if (fields.size() != 2)
      throw std::runtime_error(eval_path.string() + ":" + std::to_string(line_no) +
                               ": expected 2 fields");
    eval_values.push_back(parse_double_field(fields[1], eval_path, line_no));
  }
  if (eval_values.empty())
    throw std::runtime_error(eval_path.string() + ": no evaluation draws");

  const fs::path hist_path = dir / "histogram.csv";
  std::ifstream hist_in(hist_path, std::ios::binary);
  if (!hist_in) throw std::runtime_error(hist_path.string() + ": cannot open");
  if (!std::getline(hist_in, line) || line != "bin_left,bin_right,count")
    throw std::runtime_error(hist_path.string() + ": bad header");
  std::int64_t hist_total = 0;
  int hist_bins = 0;
  line_no = 1;
  while (std::getline(hist_in, line)) {
    ++line_no;
    auto fields = split_line(line);
    if (fields.size() != 3)
      throw std::runtime_error(hist_path.string() + ":" + std::to_string(line_no) +
                               ": expected 3 fields");
    hist_total += static_cast<std::int64_t>(parse_double_field(fields[2], hist_path, line_no));
    ++hist_bins;
  }

  std::vector<double> sorted_eval = eval_values;
  std::sort(sorted_eval.begin(), sorted_eval.end());
  double mean = 0.0;
  for (double v : sorted_eval) mean += v;
  mean /= static_cast<double>(sorted_eval.size());
  const double median = percentile_sorted(sorted_eval, 0.5);
  const double p05 = percentile_sorted(sorted_eval, 0.05);
  const double p95 = percentile_sorted(sorted_eval, 0.95);

  out << "run: " << run_dir << "\n";
  out << "models: " << n_models << "\n";
  for (int m = 0; m < n_models; ++m)
    out << "  model " << (m + 1) << ": weight " << fmt_short(weights[m]) << ", acceptance "
        << fmt_short(acceptance[m]) << ", chain mean loss " << fmt_short(chain_mean_loss[m])
        << ", point validation loss " << fmt_short(point_losses[m]) << "\n";
  out << "bayes factors (row model over column model):\n";
  ordered_json bf = ordered_json::array();
  for (int i = 0; i < n_models; ++i) {
    ordered_json row = ordered_json::array();
    out << " ";
    for (int j = 0; j < n_models; ++j) {
      if (weights[j] == 0.0) {
        row.push_back(nullptr);
        out << " n/a";
      } else {
        row.push_back(weights[i] / weights[j]);
        out << " " << fmt_short(weights[i] / weights[j]);
      }
    }
    bf.push_back(std::move(row));
    out << "\n";
  }
  out << "evaluation draws: " << eval_values.size() << "\n";
  out << "  mean " << fmt_short(mean) << ", median " << fmt_short(median) << ", p05 "
      << fmt_short(p05) << ", p95 " << fmt_short(p95) << "\n";
  out << "histogram: " << hist_bins << " bins, total count " << hist_total << "\n";

  ordered_json summary;
  summary["models"] = n_models;
  summary["weights"] = weights;
  summary["bayes_factors"] = std::move(bf);
  summary["point_estimate_losses"] = point_losses;
  ordered_json ev;
  ev["draws"] = eval_values.size();
  ev["mean"] = mean;
  ev["median"] = median;
  ev["p05"] = p05;
  ev["p95"] = p95;
  summary["evaluation"] = std::move(ev);
  ordered_json hj;
  hj["bins"] = hist_bins;
  hj["total_count"] = hist_total;
  summary["histogram"] = std::move(hj);
  return summary;
}

}  // namespace dbnmix
