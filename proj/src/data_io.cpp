#include "dbnmix/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace dbnmix {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

[[noreturn]] void parse_fail(const std::string& path, int line_no, const std::string& msg) {
  throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + msg);
}

double parse_number(const std::string& tok, const std::string& path, int line_no) {
  double v = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    parse_fail(path, line_no, "non-numeric cell '" + tok + "'");
  if (!std::isfinite(v)) parse_fail(path, line_no, "non-finite value");
  return v;
}

long parse_int(const std::string& tok, const std::string& path, int line_no) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    parse_fail(path, line_no, "non-integer cell '" + tok + "'");
  return v;
}

}  // namespace

void save_dataset(const TrajectoryDataset& data, const std::string& path) {
  data.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "traj,t";
  for (int i = 1; i <= data.dim; ++i) out << ",x" << i;
  out << "\n";
  for (int n = 0; n < data.n_traj; ++n)
    for (int t = 0; t < data.horizon; ++t) {
      out << (n + 1) << ',' << (t + 1);
      for (int i = 0; i < data.dim; ++i) out << ',' << fmt_double(data.x(n, t, i));
      out << "\n";
    }
  if (!out) throw std::runtime_error("write failed: " + path);
}

TrajectoryDataset load_dataset(const std::string& path, int lag_order) {
  if (lag_order < 0) throw std::invalid_argument("load_dataset: lag_order must be >= 0");
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);

  std::string line;
  int line_no = 1;
  if (!std::getline(in, line)) parse_fail(path, 1, "empty file");
  auto header = split_csv(line);
  if (header.size() < 3 || header[0] != "traj" || header[1] != "t")
    parse_fail(path, 1, "header must be traj,t,x1,...,xd");
  const int d = static_cast<int>(header.size()) - 2;

  std::vector<std::vector<double>> traj_rows;  // per trajectory, flattened t-major
  long expected_traj = 1;
  long expected_t = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split_csv(line);
    if (static_cast<int>(cells.size()) != d + 2)
      parse_fail(path, line_no,
                 "expected " + std::to_string(d + 2) + " columns, got " +
                     std::to_string(cells.size()));
    long traj = parse_int(cells[0], path, line_no);
    long t = parse_int(cells[1], path, line_no);
    if (traj == expected_traj + 1 && t == 1) {
      ++expected_traj;
      expected_t = 1;
    }
    if (traj != expected_traj || t != expected_t)
      parse_fail(path, line_no, "rows must be sorted by (traj, t) with consecutive 1-based indices");
    ++expected_t;
    if (traj > static_cast<long>(traj_rows.size())) traj_rows.emplace_back();
    auto& rows = traj_rows.back();
    for (int i = 0; i < d; ++i) rows.push_back(parse_number(cells[2 + i], path, line_no));
  }
  if (traj_rows.empty()) parse_fail(path, line_no, "no data rows");

  const std::size_t horizon_len = traj_rows.front().size();
  for (std::size_t n = 0; n < traj_rows.size(); ++n)
    if (traj_rows[n].size() != horizon_len)
      throw std::runtime_error(path + ": trajectory " + std::to_string(n + 1) +
                               " has a different number of time steps");
  const int horizon = static_cast<int>(horizon_len) / d;
  if (horizon <= lag_order)
    throw std::runtime_error(path + ": horizon " + std::to_string(horizon) +
                             " must exceed lag_order " + std::to_string(lag_order));

  TrajectoryDataset data;
  data.n_traj = static_cast<int>(traj_rows.size());
  data.horizon = horizon;
  data.dim = d;
  data.lag_order = lag_order;
  data.values.reserve(static_cast<std::size_t>(data.n_traj) * horizon * d);
  for (const auto& rows : traj_rows)
    data.values.insert(data.values.end(), rows.begin(), rows.end());
  data.validate();
  return data;
}

nlohmann::ordered_json dataset_to_json(const TrajectoryDataset& data) {
  data.validate();
  nlohmann::ordered_json j;
  j["n_traj"] = data.n_traj;
  j["horizon"] = data.horizon;
  j["dim"] = data.dim;
  j["lag_order"] = data.lag_order;
  auto values = nlohmann::ordered_json::array();
  for (int n = 0; n < data.n_traj; ++n) {
    auto traj = nlohmann::ordered_json::array();
    for (int t = 0; t < data.horizon; ++t) {
      auto row = nlohmann::ordered_json::array();
      for (int i = 0; i < data.dim; ++i) row.push_back(data.x(n, t, i));
      traj.push_back(std::move(row));
    }
    values.push_back(std::move(traj));
  }
  j["values"] = std::move(values);
  return j;
}

TrajectoryDataset dataset_from_json(const nlohmann::json& j) {
  TrajectoryDataset data;
  data.n_traj = j.at("n_traj").get<int>();
  data.horizon = j.at("horizon").get<int>();
  data.dim = j.at("dim").get<int>();
  data.lag_order = j.at("lag_order").get<int>();
  const auto& values = j.at("values");
  data.values.reserve(static_cast<std::size_t>(data.n_traj) * data.horizon * data.dim);
  for (const auto& traj : values)
    for (const auto& row : traj)
      for (const auto& v : row) data.values.push_back(v.get<double>());
  data.validate();
  return data;
}

TrajectoryDataset select_trajectories(const TrajectoryDataset& data,
                                      const std::vector<int>& indices) {
  TrajectoryDataset out;
  out.n_traj = static_cast<int>(indices.size());
  out.horizon = data.horizon;
  out.dim = data.dim;
  out.lag_order = data.lag_order;
  out.values.reserve(static_cast<std::size_t>(out.n_traj) * out.horizon * out.dim);
  for (int n : indices) {
    if (n < 0 || n >= data.n_traj)
      throw std::out_of_range("select_trajectories: index out of range");
    auto begin = data.values.begin() + static_cast<std::ptrdiff_t>(n) * data.horizon * data.dim;
    out.values.insert(out.values.end(), begin, begin + static_cast<std::ptrdiff_t>(data.horizon) * data.dim);
  }
  return out;
}

namespace {

// Partial Fisher-Yates: first `take` entries of a seeded uniform permutation.
std::vector<int> draw_indices(int n, int take, std::uint64_t seed) {
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (int k = 0; k < take; ++k) {
    std::uniform_int_distribution<int> pick(k, n - 1);
    std::swap(idx[k], idx[pick(rng)]);
  }
  idx.resize(take);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

TrajectoryDataset subsample(const TrajectoryDataset& data, const SubsampleSpec& spec) {
  data.validate();
  if (spec.subsample_size < 1 || spec.subsample_size > data.n_traj)
    throw std::out_of_range("subsample: need 1 <= subsample_size <= n_traj");
  return select_trajectories(data, draw_indices(data.n_traj, spec.subsample_size, spec.seed));
}

std::pair<TrajectoryDataset, TrajectoryDataset> train_val_split(
    const TrajectoryDataset& data, double val_fraction, std::uint64_t seed) {
  data.validate();
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw std::out_of_range("train_val_split: val_fraction must be in (0, 1)");
  if (data.n_traj < 2) throw std::out_of_range("train_val_split: need at least 2 trajectories");
  int n_val = static_cast<int>(std::lround(val_fraction * data.n_traj));
  n_val = std::clamp(n_val, 1, data.n_traj - 1);
  std::vector<int> val = draw_indices(data.n_traj, n_val, seed);
  std::vector<int> train;
  train.reserve(data.n_traj - n_val);
  std::vector<char> in_val(data.n_traj, 0);
  for (int i : val) in_val[i] = 1;
  for (int i = 0; i < data.n_traj; ++i)
    if (!in_val[i]) train.push_back(i);
  return {select_trajectories(data, train), select_trajectories(data, val)};
}

}  // namespace dbnmix
