#include "dbnmix/struct_solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dbnmix {

namespace {

constexpr double kRidgeJitter = 1e-10;

// Regressor indexing over the stacked design [cur | lag_1 | ... | lag_p]:
// column j in [0, d) is current X_j, column d + l*d + j is X_{t-l-1, j}.
struct Gram {
  int dim = 0;
  int lag_order = 0;
  int n_reg = 0;
  Eigen::MatrixXd g;

  explicit Gram(const LaggedDesign& design)
      : dim(design.dim), lag_order(design.lag_order), n_reg(design.dim * (design.lag_order + 1)) {
    Eigen::MatrixXd z(design.rows, n_reg);
    z.leftCols(dim) = design.cur;
    for (int l = 0; l < lag_order; ++l) z.middleCols(dim + l * dim, dim) = design.lags[l];
    g.noalias() = z.transpose() * z;
  }
};

// Normal equations for one target column over the given regressors, with the
// fixed ridge jitter. Writes coefficients aligned with `reg`; returns the
// residual sum of squares at those coefficients.
double solve_column(const Gram& gram, int target, const std::vector<int>& reg,
                    Eigen::VectorXd& coef) {
  const int k = static_cast<int>(reg.size());
  coef.resize(k);
  if (k == 0) return gram.g(target, target);
  Eigen::MatrixXd gss(k, k);
  Eigen::VectorXd gsy(k);
  for (int a = 0; a < k; ++a) {
    gsy[a] = gram.g(reg[a], target);
    for (int b = 0; b < k; ++b) gss(a, b) = gram.g(reg[a], reg[b]);
    gss(a, a) += kRidgeJitter;
  }
  coef = gss.ldlt().solve(gsy);
  // rss + jitter*|coef|^2 equals g_yy - g_sy'coef; subtract the jitter term so
  // the value tracks the true residual.
  double rss = gram.g(target, target) - gsy.dot(coef) - kRidgeJitter * coef.squaredNorm();
  return std::max(0.0, rss);
}

struct Edge {
  bool inter = false;
  int lag = 0;
  int from = 0;
  int to = 0;
  int regressor = 0;
};

std::vector<Edge> edge_list(int d, int p) {
  std::vector<Edge> edges;
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < d; ++i)
      if (j != i) edges.push_back({false, 0, j, i, j});
  for (int l = 0; l < p; ++l)
    for (int j = 0; j < d; ++j)
      for (int i = 0; i < d; ++i) edges.push_back({true, l, j, i, d + l * d + j});
  return edges;
}

StructureMask mask_from_states(const std::vector<Edge>& edges,
                               const std::vector<std::int8_t>& state, int d, int p) {
  StructureMask mask(d, p);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (state[e] != 1) continue;
    if (edges[e].inter)
      mask.ea(edges[e].lag, edges[e].from, edges[e].to) = 1;
    else
      mask.ew(edges[e].from, edges[e].to) = 1;
  }
  return mask;
}

ParamSet params_from_coefs(const std::vector<Edge>& edges,
                           const std::vector<std::int8_t>& state,
                           const std::vector<double>& edge_coef, int d, int p) {
  ParamSet params = ParamSet::zero(d, p);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (state[e] != 1) continue;
    if (edges[e].inter)
      params.a[edges[e].lag](edges[e].from, edges[e].to) = edge_coef[e];
    else
      params.w(edges[e].from, edges[e].to) = edge_coef[e];
  }
  return params;
}

class BranchAndBound {
 public:
  BranchAndBound(const LaggedDesign& design, const IpConfig& cfg)
      : design_(design),
        gram_(design),
        cfg_(cfg),
        d_(design.dim),
        p_(design.lag_order),
        edges_(edge_list(d_, p_)),
        state_(edges_.size(), 0),
        edge_coef_(edges_.size(), 0.0),
        col_rss_(d_, 0.0),
        col_edges_(d_),
        inc_adj_(static_cast<std::size_t>(d_) * d_, 0),
        deadline_valid_(cfg.time_limit > 0.0) {
    for (std::size_t e = 0; e < edges_.size(); ++e) col_edges_[edges_[e].to].push_back(static_cast<int>(e));
    if (deadline_valid_)
      deadline_ = std::chrono::steady_clock::now() +
                  std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                      std::chrono::duration<double>(cfg.time_limit));
  }

  IpSolution run() {
    for (int i = 0; i < d_; ++i) refit_column(i);
    warm_start();
    dfs();
    if (!has_best_)
      throw std::runtime_error(timed_out_
                                   ? "solve_ip: time limit reached before any incumbent"
                                   : "solve_ip: no feasible structure (all excluded)");
    IpSolution sol;
    sol.mask = best_mask_;
    sol.params = best_params_;
    sol.objective = best_obj_;
    sol.proven_optimal = !timed_out_;
    return sol;
  }

 private:
  void refit_column(int target) {
    reg_buf_.clear();
    active_buf_.clear();
    for (int e : col_edges_[target]) {
      if (state_[e] != -1) {
        reg_buf_.push_back(edges_[e].regressor);
        active_buf_.push_back(e);
      }
    }
    col_rss_[target] = solve_column(gram_, target, reg_buf_, coef_buf_);
    for (int e : col_edges_[target]) edge_coef_[e] = 0.0;
    for (std::size_t k = 0; k < active_buf_.size(); ++k)
      edge_coef_[active_buf_[k]] = coef_buf_[static_cast<Eigen::Index>(k)];
  }

  bool reaches(const std::vector<std::int8_t>& adj, int src, int dst) const {
    if (src == dst) return true;
    std::vector<std::int8_t> seen(d_, 0);
    std::vector<int> stack{src};
    seen[src] = 1;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (int v = 0; v < d_; ++v) {
        if (!adj[static_cast<std::size_t>(u) * d_ + v] || seen[v]) continue;
        if (v == dst) return true;
        seen[v] = 1;
        stack.push_back(v);
      }
    }
    return false;
  }

  // Fit and score a fully decided support (state 1 = included, everything
  // else treated as excluded); shares solve_column/loss with the leaf path so
  // equal supports produce bitwise-equal objectives.
  void offer_incumbent(const std::vector<std::int8_t>& state) {
    StructureMask mask = mask_from_states(edges_, state, d_, p_);
    for (const auto& ex : cfg_.exclusions)
      if (ex == mask) return;
    std::vector<double> coefs(edges_.size(), 0.0);
    int nw = 0;
    int na = 0;
    for (int i = 0; i < d_; ++i) {
      reg_buf_.clear();
      active_buf_.clear();
      for (int e : col_edges_[i]) {
        if (state[e] != 1) continue;
        reg_buf_.push_back(edges_[e].regressor);
        active_buf_.push_back(e);
      }
      solve_column(gram_, i, reg_buf_, coef_buf_);
      for (std::size_t k = 0; k < active_buf_.size(); ++k)
        coefs[active_buf_[k]] = coef_buf_[static_cast<Eigen::Index>(k)];
    }
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      if (state[e] != 1) continue;
      if (edges_[e].inter)
        ++na;
      else
        ++nw;
    }
    ParamSet params = params_from_coefs(edges_, state, coefs, d_, p_);
    double obj = loss(design_, params) + cfg_.lambda_w * nw + cfg_.lambda_a * na;
    if (!has_best_ || obj < best_obj_ ||
        (obj == best_obj_ && mask_lex_less(mask, best_mask_))) {
      has_best_ = true;
      best_obj_ = obj;
      best_mask_ = std::move(mask);
      best_params_ = std::move(params);
    }
  }

  // Seed the incumbent with every top-k prefix of the root relaxation's
  // coefficients (cycle-creating intra edges skipped).  On clean data the
  // true support is one of these prefixes, which lets pruning bite from the
  // start instead of after a long first descent.
  void warm_start() {
    std::vector<int> order(edges_.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return std::abs(edge_coef_[a]) > std::abs(edge_coef_[b]);
    });
    std::vector<std::int8_t> cand(edges_.size(), -1);
    std::vector<std::int8_t> adj(static_cast<std::size_t>(d_) * d_, 0);
    offer_incumbent(cand);
    for (int e : order) {
      const Edge& edge = edges_[e];
      if (!edge.inter) {
        if (reaches(adj, edge.to, edge.from)) continue;
        adj[static_cast<std::size_t>(edge.from) * d_ + edge.to] = 1;
      }
      cand[e] = 1;
      offer_incumbent(cand);
    }
  }

  double penalty_included() const {
    return cfg_.lambda_w * n_inc_w_ + cfg_.lambda_a * n_inc_a_;
  }

  void consider_leaf() {
    StructureMask mask = mask_from_states(edges_, state_, d_, p_);
    for (const auto& ex : cfg_.exclusions)
      if (ex == mask) return;
    ParamSet params = params_from_coefs(edges_, state_, edge_coef_, d_, p_);
    double obj = loss(design_, params) + penalty_included();
    if (!has_best_ || obj < best_obj_ ||
        (obj == best_obj_ && mask_lex_less(mask, best_mask_))) {
      has_best_ = true;
      best_obj_ = obj;
      best_mask_ = std::move(mask);
      best_params_ = std::move(params);
    }
  }

  void dfs() {
    if (timed_out_) return;
    if (deadline_valid_ && (++node_count_ & 63) == 0 &&
        std::chrono::steady_clock::now() > deadline_) {
      timed_out_ = true;
      return;
    }

    double bound = penalty_included();
    for (int i = 0; i < d_; ++i) bound += col_rss_[i];
    // The relaxation's ridge jitter can overestimate the exact subtree optimum
    // by a hair; the allowance keeps pruning safe at the oracle tolerance.
    if (has_best_ && bound >= best_obj_ + prune_allowance()) return;

    int branch = -1;
    double best_mag = -1.0;
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      if (state_[e] != 0) continue;
      double mag = std::abs(edge_coef_[e]);
      if (mag > best_mag) {
        best_mag = mag;
        branch = static_cast<int>(e);
      }
    }
    if (branch < 0) {
      consider_leaf();
      return;
    }

    const Edge& edge = edges_[branch];
    const int col = edge.to;
    std::vector<double> saved_coef = edge_coef_;
    double saved_rss = col_rss_[col];

    // include branch first; intra edges must keep the decided graph acyclic
    bool cycle = !edge.inter && reaches(inc_adj_, edge.to, edge.from);
    if (!cycle) {
      state_[branch] = 1;
      if (edge.inter)
        ++n_inc_a_;
      else {
        ++n_inc_w_;
        inc_adj_[static_cast<std::size_t>(edge.from) * d_ + edge.to] = 1;
      }
      dfs();
      if (edge.inter)
        --n_inc_a_;
      else {
        --n_inc_w_;
        inc_adj_[static_cast<std::size_t>(edge.from) * d_ + edge.to] = 0;
      }
      state_[branch] = 0;
    }

    if (timed_out_) return;
    state_[branch] = -1;
    refit_column(col);
    dfs();
    state_[branch] = 0;
    edge_coef_ = std::move(saved_coef);
    col_rss_[col] = saved_rss;
  }

  double prune_allowance() const { return 1e-6 * (1.0 + std::abs(best_obj_)); }

  const LaggedDesign& design_;
  Gram gram_;
  const IpConfig& cfg_;
  int d_;
  int p_;
  std::vector<Edge> edges_;
  std::vector<std::int8_t> state_;  // 0 undecided, 1 included, -1 excluded
  std::vector<double> edge_coef_;
  std::vector<double> col_rss_;
  std::vector<std::vector<int>> col_edges_;
  std::vector<std::int8_t> inc_adj_;
  int n_inc_w_ = 0;
  int n_inc_a_ = 0;

  bool has_best_ = false;
  double best_obj_ = 0.0;
  StructureMask best_mask_;
  ParamSet best_params_;

  bool timed_out_ = false;
  bool deadline_valid_ = false;
  std::chrono::steady_clock::time_point deadline_;
  std::uint64_t node_count_ = 0;

  std::vector<int> reg_buf_;
  std::vector<int> active_buf_;
  Eigen::VectorXd coef_buf_;
};

void check_exclusion_dims(const IpConfig& cfg, int d, int p) {
  for (const auto& ex : cfg.exclusions)
    if (ex.dim != d || ex.lag_order != p)
      throw std::invalid_argument("exclusion mask dimensions do not match data");
}

}  // namespace

void IpConfig::validate() const {
  if (lambda_w < 0.0 || lambda_a < 0.0)
    throw std::invalid_argument("IpConfig: penalties must be >= 0");
  if (time_limit < 0.0) throw std::invalid_argument("IpConfig: time_limit must be >= 0");
}

std::pair<ParamSet, double> fit_weights_given_support(const TrajectoryDataset& data,
                                                      const StructureMask& mask) {
  data.validate();
  mask.validate();
  if (mask.dim != data.dim || mask.lag_order != data.lag_order)
    throw std::invalid_argument("fit_weights_given_support: mask dimensions do not match data");
  LaggedDesign design(data);
  Gram gram(design);
  ParamSet params = ParamSet::zero(mask.dim, mask.lag_order);
  std::vector<int> reg;
  Eigen::VectorXd coef;
  for (int i = 0; i < mask.dim; ++i) {
    reg.clear();
    std::vector<SupportCoord> coords;
    for (int j = 0; j < mask.dim; ++j)
      if (mask.ew(j, i)) {
        reg.push_back(j);
        coords.push_back({EdgeSlot::Intra, 0, j, i});
      }
    for (int l = 0; l < mask.lag_order; ++l)
      for (int j = 0; j < mask.dim; ++j)
        if (mask.ea(l, j, i)) {
          reg.push_back(mask.dim + l * mask.dim + j);
          coords.push_back({EdgeSlot::Inter, l, j, i});
        }
    solve_column(gram, i, reg, coef);
    for (std::size_t k = 0; k < coords.size(); ++k) {
      const auto& c = coords[k];
      if (c.slot == EdgeSlot::Intra)
        params.w(c.from, c.to) = coef[static_cast<Eigen::Index>(k)];
      else
        params.a[c.lag](c.from, c.to) = coef[static_cast<Eigen::Index>(k)];
    }
  }
  return {params, loss(design, params)};
}

IpSolution solve_ip(const TrajectoryDataset& data, const IpConfig& cfg) {
  data.validate();
  cfg.validate();
  check_exclusion_dims(cfg, data.dim, data.lag_order);
  LaggedDesign design(data);
  return BranchAndBound(design, cfg).run();
}

IpSolution enumerate_oracle(const TrajectoryDataset& data, const IpConfig& cfg) {
  data.validate();
  cfg.validate();
  check_exclusion_dims(cfg, data.dim, data.lag_order);
  const int d = data.dim;
  const int p = data.lag_order;
  if (d > 4 || p > 2)
    throw std::invalid_argument("enumerate_oracle: guarded to d <= 4 and p <= 2");

  LaggedDesign design(data);
  Gram gram(design);
  std::vector<Edge> edges = edge_list(d, p);
  const int kw = d * (d - 1);
  const int ka = p * d * d;

  bool has_best = false;
  double best_obj = 0.0;
  IpSolution best;

  std::vector<std::int8_t> state(edges.size(), 0);
  std::vector<double> edge_coef(edges.size(), 0.0);
  std::vector<int> reg;
  std::vector<int> active;
  Eigen::VectorXd coef;

  // Fits one fully decided assignment; tracks the exact-objective minimum.
  auto evaluate = [&]() {
    StructureMask mask = mask_from_states(edges, state, d, p);
    if (!is_dag(mask.e_w, d, d)) return;
    for (const auto& ex : cfg.exclusions)
      if (ex == mask) return;
    double gram_obj = cfg.lambda_w * static_cast<double>(mask.count_intra()) +
                      cfg.lambda_a * static_cast<double>(mask.count_inter());
    const double penalties = gram_obj;
    for (int i = 0; i < d; ++i) {
      reg.clear();
      active.clear();
      for (std::size_t e = 0; e < edges.size(); ++e)
        if (state[e] == 1 && edges[e].to == i) {
          reg.push_back(edges[e].regressor);
          active.push_back(static_cast<int>(e));
        }
      gram_obj += solve_column(gram, i, reg, coef);
      for (std::size_t k = 0; k < active.size(); ++k)
        edge_coef[active[k]] = coef[static_cast<Eigen::Index>(k)];
    }
    // Screen on the Gram value; candidates near the optimum get the exact
    // residual evaluation so ties resolve on identical arithmetic.
    if (has_best && gram_obj > best_obj + 1e-6 * (1.0 + std::abs(best_obj))) return;
    ParamSet params = params_from_coefs(edges, state, edge_coef, d, p);
    double obj = loss(design, params) + penalties;
    if (!has_best || obj < best_obj) {
      has_best = true;
      best_obj = obj;
      best.mask = std::move(mask);
      best.params = std::move(params);
      best.objective = obj;
    }
  };

  // Lexicographic enumeration: bit 0 of the pattern counter is the *last*
  // coordinate, so increasing counters scan masks in lexicographic order.
  for (std::uint64_t cw = 0; cw < (1ull << kw); ++cw) {
    for (int b = 0; b < kw; ++b) state[b] = ((cw >> (kw - 1 - b)) & 1) ? 1 : -1;
    for (std::uint64_t ca = 0; ca < (1ull << ka); ++ca) {
      for (int b = 0; b < ka; ++b)
        state[kw + b] = ((ca >> (ka - 1 - b)) & 1) ? 1 : -1;
      evaluate();
    }
  }
  if (!has_best) throw std::runtime_error("enumerate_oracle: no feasible structure");
  best.proven_optimal = true;
  return best;
}

std::vector<IpSolution> initial_solutions(const TrajectoryDataset& data, int n_models,
                                          const SubsampleSpec& spec, const IpConfig& cfg) {
  if (n_models < 1) throw std::invalid_argument("initial_solutions: need n_models >= 1");
  std::vector<IpSolution> solutions;
  solutions.reserve(n_models);
  IpConfig run_cfg = cfg;
  for (int m = 1; m <= n_models; ++m) {
    SubsampleSpec draw{spec.subsample_size, spec.seed + static_cast<std::uint64_t>(m)};
    TrajectoryDataset sample = subsample(data, draw);
    solutions.push_back(solve_ip(sample, run_cfg));
    run_cfg.exclusions.push_back(solutions.back().mask);
  }
  return solutions;
}

double default_penalty(const TrajectoryDataset& data) {
  data.validate();
  LaggedDesign design(data);
  Gram gram(design);
  std::vector<int> reg;
  Eigen::VectorXd coef;
  double sat_rss = 0.0;
  for (int i = 0; i < data.dim; ++i) {
    reg.clear();
    for (int j = 0; j < data.dim; ++j)
      if (j != i) reg.push_back(j);
    for (int r = data.dim; r < gram.n_reg; ++r) reg.push_back(r);
    sat_rss += solve_column(gram, i, reg, coef);
  }
  const double n_eff = static_cast<double>(design.rows) * data.dim;
  const double sigma2 = sat_rss / n_eff;
  return sigma2 * std::log(n_eff);
}

}  // namespace dbnmix
