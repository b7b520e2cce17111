#include "urs/feasibility.hpp"

#include <algorithm>
#include <cmath>

#include "urs/rng.hpp"

namespace urs {

VariantRules VariantRules::from(const UnifiedInstance& inst) {
  const FamilySet& fs = inst.spec.families;
  VariantRules r;
  r.depots = inst.depot_count();
  r.n = inst.size();
  r.tsp = r.depots == 0;
  r.multi = is_multi_route(fs);
  r.open = fs.has(Family::O);
  r.capacity = fs.has(Family::C);
  r.mixed_backhaul = fs.has(Family::B);
  r.backhaul_priority = fs.has(Family::BP);
  r.pickup_delivery = fs.has(Family::PD);
  r.prize_collecting = fs.has(Family::PC);
  r.orienteering = fs.has(Family::OP);
  r.time_windows = fs.has(Family::TW);
  r.duration = fs.has(Family::L);
  r.multi_depot = fs.has(Family::MD);
  if (r.duration) r.duration_limit = inst.spec.param("duration_limit");
  if (r.time_windows) r.horizon = inst.spec.param("depot_end_time");
  if (r.prize_collecting) r.required_prize = inst.spec.param("required_prize");
  if (r.orienteering) r.max_length = inst.spec.param("max_tour_length");
  return r;
}

RoutingEnv::RoutingEnv(const UnifiedInstance& instance) : inst_(&instance), rules_(VariantRules::from(instance)) {}

double RoutingEnv::leg_cost(int from, int to) const {
  const bool from_depot = inst_->is_depot(from), to_depot = inst_->is_depot(to);
  if (from_depot && to_depot) return 0.0;
  if (rules_.open && to_depot) return 0.0;
  return inst_->d(from, to);
}

bool RoutingEnv::all_customers_visited(const StepState& s) const {
  return s.customers_visited == rules_.n - rules_.depots;
}

double RoutingEnv::context_feature(const StepState& s) const {
  if (rules_.capacity) return s.load;
  if (rules_.orienteering) return (rules_.max_length - s.route_length) / 4.0;
  if (rules_.prize_collecting) return std::max(0.0, rules_.required_prize - s.collected_prize);
  return 0.0;
}

bool RoutingEnv::customer_ok(const StepState& s, int j) const {
  const UnifiedInstance& in = *inst_;
  const NodeRecord& node = in.nodes[j];
  const double delta = node.omega[kDemand];
  const int cur = s.current;

  if (rules_.mixed_backhaul && s.first_customer < 0 && delta < 0) return false;
  if (rules_.pickup_delivery && node.xi[kDeliveryBit]) {
    const int partner = j - (rules_.n - rules_.depots) / 2;
    if (!s.visited[partner]) return false;
  }
  if (rules_.capacity) {
    if (rules_.pickup_delivery) {
      if (delta < 0 && -delta > s.load + kFeasEps) return false;
    } else if (delta >= 0) {
      if (rules_.backhaul_priority && s.phase == Phase::kBackhaul) return false;
      if (delta > s.load + kFeasEps) return false;
    } else if (s.backhaul_load - delta > 1.0 + kFeasEps) {
      return false;
    }
  }
  const double leg = in.d(cur, j);
  const double home = in.d(j, s.origin_depot < 0 ? 0 : s.origin_depot);
  if (rules_.duration && s.route_length + leg + (rules_.open ? 0.0 : home) > rules_.duration_limit + kFeasEps)
    return false;
  if (rules_.time_windows) {
    const double arrival = s.clock + leg;
    if (arrival > node.omega[kLatest] + kFeasEps) return false;
    if (!rules_.open &&
        std::max(arrival, node.omega[kEarliest]) + node.omega[kService] + home > rules_.horizon + kFeasEps)
      return false;
  }
  if (rules_.orienteering && s.route_length + leg + home > rules_.max_length + kFeasEps) return false;
  return true;
}

void RoutingEnv::mask(const StepState& s, std::vector<std::uint8_t>& out) const {
  const int n = rules_.n;
  out.assign(n, 0);
  if (s.done) return;
  for (int j = rules_.depots; j < n; ++j)
    if (!s.visited[j] && customer_ok(s, j)) out[j] = 1;
  if (rules_.tsp) return;

  if (s.at_depot) {
    if (rules_.multi_depot && !s.relocated && !all_customers_visited(s))
      for (int k = 0; k < rules_.depots; ++k)
        if (k != s.current) out[k] = 1;
    return;
  }
  bool close_ok = true;
  if (rules_.pickup_delivery) close_ok = rules_.capacity ? s.pending_deliveries == 0 : all_customers_visited(s);
  if (rules_.prize_collecting)
    close_ok = s.collected_prize >= rules_.required_prize - kFeasEps || all_customers_visited(s);
  if (close_ok) out[s.origin_depot] = 1;
}

std::vector<std::uint8_t> RoutingEnv::mask(const StepState& s) const {
  std::vector<std::uint8_t> out;
  mask(s, out);
  return out;
}

void RoutingEnv::advance(StepState& s, int j) const {
  const UnifiedInstance& in = *inst_;
  s.travel += leg_cost(s.current, j);

  if (in.is_depot(j)) {
    if (s.at_depot) {
      s.relocated = true;
    } else {
      s.route_length = 0.0;
      s.clock = 0.0;
      s.load = 1.0;
      s.backhaul_load = 0.0;
      s.phase = Phase::kLinehaul;
      s.route_customers = 0;
      s.pending_deliveries = 0;
      s.relocated = false;
      s.at_depot = true;
      if (rules_.single_tour()) s.done = true;
      else if (!rules_.open) s.done = all_customers_visited(s);
    }
    s.visited[j] = 1;
    s.current = j;
    s.origin_depot = j;
    return;
  }

  const NodeRecord& node = in.nodes[j];
  const double leg = in.d(s.current, j);
  const double delta = node.omega[kDemand];
  s.route_length += leg;
  if (rules_.time_windows)
    s.clock = std::max(s.clock + leg, node.omega[kEarliest]) + node.omega[kService];

  if (rules_.capacity) {
    if (rules_.pickup_delivery) {
      s.load = std::clamp(s.load + delta, 0.0, 1.0);
    } else if (delta >= 0) {
      s.load = std::clamp(s.load - delta, 0.0, 1.0);
    } else {
      if (rules_.backhaul_priority && s.phase == Phase::kLinehaul) {
        s.phase = Phase::kBackhaul;
        if (s.route_customers == 0) s.load = 0.0;
      }
      s.backhaul_load = std::clamp(s.backhaul_load - delta, 0.0, 1.0);
    }
  }
  if (rules_.pickup_delivery) {
    if (node.xi[kPickupBit]) ++s.pending_deliveries;
    else --s.pending_deliveries;
  }
  if (rules_.prize_collecting || rules_.orienteering) s.collected_prize += node.omega[kPrize];

  if (s.first_customer < 0) s.first_customer = j;
  s.visited[j] = 1;
  s.current = j;
  s.at_depot = false;
  ++s.route_customers;
  ++s.customers_visited;
  if (rules_.tsp || (rules_.multi && rules_.open)) s.done = all_customers_visited(s);
}

StepState RoutingEnv::depot_state(int origin) const {
  StepState s;
  s.visited.assign(rules_.n, 0);
  s.visited[origin] = 1;
  s.current = origin;
  s.origin_depot = origin;
  s.at_depot = true;
  s.relocated = true;
  return s;
}

StepState RoutingEnv::initial_state(int origin, int first) const {
  const int n = rules_.n;
  if (first < 0 || first >= n) throw ContractViolation("initial_state: first node out of range");
  if (rules_.tsp) {
    if (origin >= 0) throw ContractViolation("initial_state: variant has no depot");
    StepState s;
    s.visited.assign(n, 0);
    s.visited[first] = 1;
    s.current = first;
    s.first_customer = first;
    s.customers_visited = 1;
    s.done = n == 1;
    return s;
  }
  if (origin < 0 || origin >= rules_.depots) throw ContractViolation("initial_state: origin must be a depot");
  StepState s = depot_state(origin);
  if (first == origin) {
    if (rules_.orienteering) {
      std::vector<std::uint8_t> m;
      mask(s, m);
      s.done = std::find(m.begin(), m.end(), 1) == m.end();
    }
    return s;
  }
  if (inst_->is_depot(first)) throw ContractViolation("initial_state: first node must be a customer");
  std::vector<std::uint8_t> m;
  mask(s, m);
  if (!m[first]) throw ContractViolation("initial_state: forced start node " + std::to_string(first) + " is infeasible");
  advance(s, first);
  return s;
}

StepState RoutingEnv::apply(const StepState& state, int node) const {
  if (state.done) throw ContractViolation("apply_action: state is terminal");
  if (node < 0 || node >= rules_.n) throw ContractViolation("apply_action: node out of range");
  std::vector<std::uint8_t> m;
  mask(state, m);
  if (!m[node]) throw ContractViolation("apply_action: node " + std::to_string(node) + " is masked");
  StepState next = state;
  advance(next, node);
  return next;
}

std::vector<std::pair<int, int>> RoutingEnv::default_starts() const {
  std::vector<std::pair<int, int>> starts;
  if (rules_.tsp) {
    for (int i = 0; i < rules_.n; ++i) starts.emplace_back(-1, i);
    return starts;
  }
  std::vector<std::uint8_t> m;
  for (int k = 0; k < rules_.depots; ++k) {
    StepState s = depot_state(k);
    mask(s, m);
    for (int j = rules_.depots; j < rules_.n; ++j)
      if (m[j]) starts.emplace_back(k, j);
  }
  if (starts.empty()) starts.emplace_back(0, 0);
  return starts;
}

StepState initial_state(const UnifiedInstance& instance, std::optional<int> origin_depot, int first_node) {
  return RoutingEnv(instance).initial_state(origin_depot.value_or(-1), first_node);
}

std::vector<std::uint8_t> feasible_mask(const UnifiedInstance& instance, const StepState& state) {
  return RoutingEnv(instance).mask(state);
}

StepState apply_action(const UnifiedInstance& instance, const StepState& state, int node) {
  return RoutingEnv(instance).apply(state, node);
}

ObjectiveResult evaluate_solution(const UnifiedInstance& inst, const std::vector<int>& seq) {
  const FamilySet& fs = inst.spec.families;
  const bool open = fs.has(Family::O);
  ObjectiveResult res;
  double travel = 0.0;
  for (std::size_t t = 1; t < seq.size(); ++t) {
    const int a = seq[t - 1], b = seq[t];
    if (inst.is_depot(a) && inst.is_depot(b)) continue;
    if (open && inst.is_depot(b)) continue;
    travel += inst.d(a, b);
  }
  if (inst.depot_count() == 0 && seq.size() > 1) travel += inst.d(seq.back(), seq.front());

  std::vector<std::uint8_t> seen(inst.size(), 0);
  for (int v : seq) seen[v] = 1;
  if (fs.has(Family::OP)) {
    double prize = 0.0;
    for (int i = inst.customer_begin(); i < inst.size(); ++i)
      if (seen[i]) prize += inst.nodes[i].omega[kPrize];
    res.value = prize;
    res.maximize = true;
    res.components = {{"travel", travel}, {"prize", prize}};
    return res;
  }
  double penalty = 0.0;
  if (fs.has(Family::PC))
    for (int i = inst.customer_begin(); i < inst.size(); ++i)
      if (!seen[i]) penalty += inst.nodes[i].omega[kPenalty];
  res.value = travel + penalty;
  res.components = {{"travel", travel}, {"penalty", penalty}};
  return res;
}

RandomRollout random_rollout(const RoutingEnv& env, Rng& rng, std::size_t step_cap) {
  const auto starts = env.default_starts();
  const auto [origin, first] = starts[rng.index(starts.size())];
  RandomRollout out;
  StepState s = env.initial_state(origin, first);
  if (origin >= 0) out.sequence.push_back(origin);
  if (first != origin) out.sequence.push_back(first);
  if (step_cap == 0) step_cap = 4 * static_cast<std::size_t>(env.rules().n) + 8;
  std::vector<std::uint8_t> m;
  std::vector<int> options;
  while (!s.done) {
    env.mask(s, m);
    options.clear();
    for (int j = 0; j < static_cast<int>(m.size()); ++j)
      if (m[j]) options.push_back(j);
    if (options.empty() || out.sequence.size() > step_cap) {
      out.dead_end = true;
      break;
    }
    const int pick = options[rng.index(options.size())];
    env.advance(s, pick);
    out.sequence.push_back(pick);
  }
  return out;
}

bool CheckReport::has(const std::string& rule) const {
  return std::any_of(violations.begin(), violations.end(), [&](const Violation& v) { return v.rule == rule; });
}

}  // namespace urs
