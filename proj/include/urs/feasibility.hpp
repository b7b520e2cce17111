#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "urs/instance.hpp"

namespace urs {

inline constexpr double kFeasEps = 1e-9;

enum class Phase : std::uint8_t { kLinehaul, kBackhaul };

struct StepState {
  std::vector<std::uint8_t> visited;  // customers, plus depots once they have been current
  int current = -1;
  int first_customer = -1;  // first customer of the whole solution
  int origin_depot = -1;
  double load = 1.0;           // remaining capacity of the current route
  double backhaul_load = 0.0;  // collected backhaul volume of the current route
  double clock = 0.0;
  double route_length = 0.0;
  double collected_prize = 0.0;
  Phase phase = Phase::kLinehaul;
  bool at_depot = false;
  bool done = false;

  int route_customers = 0;
  int pending_deliveries = 0;  // pickups on this route whose delivery is outstanding
  bool relocated = false;      // a depot switch was already taken since the last route closed
  int customers_visited = 0;
  double travel = 0.0;

  bool operator==(const StepState&) const = default;
};

class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Flags and parameters of a variant, resolved once per instance.
struct VariantRules {
  bool tsp = false;    // no depot: the sequence is a closed permutation
  bool multi = false;  // sub-routes (capacity family)
  bool open = false;
  bool capacity = false;
  bool mixed_backhaul = false;
  bool backhaul_priority = false;
  bool pickup_delivery = false;
  bool prize_collecting = false;
  bool orienteering = false;
  bool time_windows = false;
  bool duration = false;
  bool multi_depot = false;
  double duration_limit = 0.0;
  double horizon = 0.0;
  double required_prize = 0.0;
  double max_length = 0.0;
  int depots = 0;
  int n = 0;

  static VariantRules from(const UnifiedInstance& instance);
  bool single_tour() const { return !tsp && !multi; }
};

// Step-wise state machine over one instance. Holds a reference; the instance
// must outlive the environment.
class RoutingEnv {
 public:
  explicit RoutingEnv(const UnifiedInstance& instance);

  const UnifiedInstance& instance() const { return *inst_; }
  const VariantRules& rules() const { return rules_; }

  // origin is -1 for variants without a depot. first == origin yields the
  // fresh state standing at the depot.
  StepState initial_state(int origin, int first) const;
  void mask(const StepState& state, std::vector<std::uint8_t>& out) const;
  std::vector<std::uint8_t> mask(const StepState& state) const;
  // Checked transition; never mutates its input.
  StepState apply(const StepState& state, int node) const;
  // Unchecked in-place transition for hot loops; caller guarantees mask[node].
  void advance(StepState& state, int node) const;

  double leg_cost(int from, int to) const;
  // Scalar problem-state feature used by the decoder context.
  double context_feature(const StepState& state) const;
  bool all_customers_visited(const StepState& state) const;

  // Start pairs used for multi-start decoding: (origin, first).
  std::vector<std::pair<int, int>> default_starts() const;

 private:
  bool customer_ok(const StepState& s, int j) const;
  StepState depot_state(int origin) const;

  const UnifiedInstance* inst_;
  VariantRules rules_;
};

StepState initial_state(const UnifiedInstance& instance, std::optional<int> origin_depot, int first_node);
std::vector<std::uint8_t> feasible_mask(const UnifiedInstance& instance, const StepState& state);
StepState apply_action(const UnifiedInstance& instance, const StepState& state, int node);

struct ObjectiveResult {
  double value = 0.0;
  bool maximize = false;
  std::map<std::string, double> components;  // travel, penalty, prize
};

ObjectiveResult evaluate_solution(const UnifiedInstance& instance, const std::vector<int>& sequence);

struct Violation {
  std::string rule;
  int step = -1;
  std::string detail;
};

struct CheckReport {
  bool feasible = true;
  std::vector<Violation> violations;

  bool has(const std::string& rule) const;
};

// Route-based replay against the constraint catalog; shares no code with the mask.
CheckReport check_solution(const UnifiedInstance& instance, const std::vector<int>& sequence);

class Rng;

struct RandomRollout {
  std::vector<int> sequence;
  bool dead_end = false;
};

// Uniform choice among mask-true nodes from a uniformly drawn default start.
RandomRollout random_rollout(const RoutingEnv& env, Rng& rng, std::size_t step_cap = 0);

}  // namespace urs
