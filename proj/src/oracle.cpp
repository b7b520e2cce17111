#include "urs/oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace urs {

namespace {

constexpr double kTieEps = 1e-12;

long long millis_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
}

OracleResult held_karp(const UnifiedInstance& in) {
  const int n = in.size();
  OracleResult res;
  if (n == 1) {
    res.solution = {0};
    res.objective = evaluate_solution(in, res.solution);
    return res;
  }
  const double inf = std::numeric_limits<double>::infinity();
  const std::size_t full = std::size_t{1} << n;
  std::vector<double> dp(full * n, inf);
  std::vector<std::int8_t> parent(full * n, -1);
  dp[1 * n + 0] = 0.0;
  for (std::size_t set = 1; set < full; set += 2) {
    for (int j = 0; j < n; ++j) {
      const double base = dp[set * n + j];
      if (base == inf) continue;
      ++res.nodes_expanded;
      for (int k = 1; k < n; ++k) {
        if (set >> k & 1) continue;
        const std::size_t next = set | (std::size_t{1} << k);
        const double v = base + in.d(j, k);
        if (v < dp[next * n + k] - kTieEps) {
          dp[next * n + k] = v;
          parent[next * n + k] = static_cast<std::int8_t>(j);
        }
      }
    }
  }
  const std::size_t all = full - 1;
  int last = -1;
  double best = inf;
  for (int j = 1; j < n; ++j) {
    const double v = dp[all * n + j] + in.d(j, 0);
    if (v < best - kTieEps) {
      best = v;
      last = j;
    }
  }
  std::vector<int> rev;
  std::size_t set = all;
  for (int j = last; j != 0;) {
    rev.push_back(j);
    const int p = parent[set * n + j];
    set &= ~(std::size_t{1} << j);
    j = p;
  }
  res.solution.push_back(0);
  res.solution.insert(res.solution.end(), rev.rbegin(), rev.rend());
  res.objective = evaluate_solution(in, res.solution);
  return res;
}

class BranchAndBound {
 public:
  explicit BranchAndBound(const UnifiedInstance& in) : in_(in), env_(in), rules_(env_.rules()) {
    const int n = in.size();
    maximize_ = rules_.orienteering;
    min_in_.assign(n, 0.0);
    for (int j = rules_.depots; j < n; ++j) {
      double m = std::numeric_limits<double>::infinity();
      for (int k = 0; k < n; ++k)
        if (k != j) m = std::min(m, in.d(k, j));
      if (rules_.prize_collecting) m = std::min(m, in.nodes[j].omega[kPenalty]);
      min_in_[j] = m;
    }
    best_ = maximize_ ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
  }

  void seed(const std::vector<int>& seq, double value) {
    best_ = value;
    best_seq_ = seq;
  }

  OracleResult run() {
    for (int k = 0; k < rules_.depots; ++k) {
      StepState s = env_.initial_state(k, k);
      path_ = {k};
      dfs(s);
    }
    OracleResult res;
    res.solution = best_seq_;
    res.nodes_expanded = expanded_;
    res.objective = evaluate_solution(in_, res.solution);
    return res;
  }

 private:
  double terminal_value(const StepState& s) const {
    if (maximize_) return s.collected_prize;
    double v = s.travel;
    if (rules_.prize_collecting)
      for (int j = rules_.depots; j < rules_.n; ++j)
        if (!s.visited[j]) v += in_.nodes[j].omega[kPenalty];
    return v;
  }

  bool prunable(const StepState& s) const {
    if (best_seq_.empty()) return false;
    if (maximize_) {
      double ub = s.collected_prize;
      for (int j = rules_.depots; j < rules_.n; ++j)
        if (!s.visited[j]) ub += in_.nodes[j].omega[kPrize];
      return ub <= best_ + kTieEps;
    }
    double lb = s.travel;
    for (int j = rules_.depots; j < rules_.n; ++j)
      if (!s.visited[j]) lb += min_in_[j];
    return lb >= best_ - kTieEps;
  }

  void dfs(const StepState& s) {
    ++expanded_;
    if (s.done) {
      const double v = terminal_value(s);
      const bool better = best_seq_.empty() || (maximize_ ? v > best_ + kTieEps : v < best_ - kTieEps);
      if (better) {
        best_ = v;
        best_seq_ = path_;
      }
      return;
    }
    if (prunable(s)) return;
    std::vector<std::uint8_t> m;
    env_.mask(s, m);
    for (int j = 0; j < rules_.n; ++j) {
      if (!m[j]) continue;
      StepState next = s;
      env_.advance(next, j);
      path_.push_back(j);
      dfs(next);
      path_.pop_back();
    }
  }

  const UnifiedInstance& in_;
  RoutingEnv env_;
  const VariantRules& rules_;
  bool maximize_ = false;
  std::vector<double> min_in_;
  double best_ = 0.0;
  std::vector<int> best_seq_;
  std::vector<int> path_;
  long long expanded_ = 0;
};

}  // namespace

OracleResult exact_solve(const UnifiedInstance& instance) {
  const int customers = instance.size() - instance.depot_count();
  if (customers > kExactCustomerCap)
    throw OracleCapError("exact_solve handles at most " + std::to_string(kExactCustomerCap) + " customers, got " +
                         std::to_string(customers));
  const auto t0 = std::chrono::steady_clock::now();
  OracleResult res;
  if (instance.depot_count() == 0) {
    res = held_karp(instance);
  } else {
    BranchAndBound bb(instance);
    const OracleResult start = greedy_solve(instance);
    if (check_solution(instance, start.solution).feasible) bb.seed(start.solution, start.objective.value);
    res = bb.run();
  }
  res.elapsed_ms = millis_since(t0);
  return res;
}

OracleResult greedy_solve(const UnifiedInstance& instance) {
  const auto t0 = std::chrono::steady_clock::now();
  RoutingEnv env(instance);
  const VariantRules& rules = env.rules();
  OracleResult res;
  StepState s = rules.tsp ? env.initial_state(-1, 0) : env.initial_state(0, 0);
  res.solution.push_back(0);
  std::vector<std::uint8_t> m;
  while (!s.done) {
    env.mask(s, m);
    int pick = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int j = rules.depots; j < rules.n; ++j)
      if (m[j] && env.leg_cost(s.current, j) < best) {
        best = env.leg_cost(s.current, j);
        pick = j;
      }
    if (pick < 0) {
      for (int k = 0; k < rules.depots && pick < 0; ++k)
        if (m[k] && k == s.origin_depot) pick = k;
      for (int k = 0; k < rules.depots && pick < 0; ++k)
        if (m[k]) pick = k;
    }
    if (pick < 0) break;
    env.advance(s, pick);
    res.solution.push_back(pick);
    ++res.nodes_expanded;
  }
  res.objective = evaluate_solution(instance, res.solution);
  res.elapsed_ms = millis_since(t0);
  return res;
}

double gap(double value, double reference, bool maximize) {
  if (reference == 0.0) throw std::invalid_argument("gap: reference objective is zero");
  return (maximize ? reference - value : value - reference) / reference * 100.0;
}

}  // namespace urs
