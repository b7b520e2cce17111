#include <algorithm>
#include <cmath>

#include "urs/feasibility.hpp"

namespace urs {

namespace {

constexpr double kTol = 1e-9;

struct Route {
  int depot = -1;
  std::vector<int> stops;  // customers in order
  std::vector<int> steps;  // sequence index of each stop
  bool returned = false;
  int return_step = -1;
};

class Checker {
 public:
  Checker(const UnifiedInstance& inst, const std::vector<int>& seq) : in_(inst), seq_(seq) {
    const FamilySet& fs = inst.spec.families;
    open_ = fs.has(Family::O);
    n_cust_ = inst.size() - inst.depot_count();
  }

  CheckReport run() {
    const int n = in_.size();
    for (std::size_t t = 0; t < seq_.size(); ++t)
      if (seq_[t] < 0 || seq_[t] >= n) add("index_range", static_cast<int>(t), "node " + std::to_string(seq_[t]));
    if (!report_.violations.empty()) return finish();
    if (in_.depot_count() == 0) check_permutation();
    else check_routes();
    return finish();
  }

 private:
  void add(const std::string& rule, int step, std::string detail) {
    report_.violations.push_back({rule, step, std::move(detail)});
  }

  CheckReport finish() {
    report_.feasible = report_.violations.empty();
    return std::move(report_);
  }

  const FamilySet& fs() const { return in_.spec.families; }

  void check_permutation() {
    std::vector<int> seen_at(in_.size(), -1);
    for (std::size_t t = 0; t < seq_.size(); ++t) {
      const int v = seq_[t];
      if (seen_at[v] >= 0) add("visit_once", static_cast<int>(t), "node " + std::to_string(v) + " repeated");
      else seen_at[v] = static_cast<int>(t);
    }
    for (int v = 0; v < in_.size(); ++v)
      if (seen_at[v] < 0) add("coverage", static_cast<int>(seq_.size()), "node " + std::to_string(v) + " never visited");
  }

  void check_routes() {
    if (seq_.empty() || !in_.is_depot(seq_[0])) {
      add("structure", 0, "solution must start at a depot");
      return;
    }
    const bool single = !fs().has(Family::C);
    std::vector<Route> routes;
    std::vector<int> seen_at(in_.size(), -1);
    Route cur;
    cur.depot = seq_[0];
    bool relocated = false;
    bool just_closed = true;  // standing at a depot with no open route
    for (std::size_t t = 1; t < seq_.size(); ++t) {
      const int v = seq_[t];
      const int step = static_cast<int>(t);
      if (in_.is_depot(v)) {
        if (just_closed) {
          if (!fs().has(Family::MD) || v == cur.depot || relocated) {
            add("structure", step, "empty route or repeated depot switch");
          } else {
            relocated = true;
            cur.depot = v;
          }
          continue;
        }
        if (v != cur.depot)
          add("same_depot", step, "route from depot " + std::to_string(cur.depot) + " ends at " + std::to_string(v));
        cur.returned = true;
        cur.return_step = step;
        routes.push_back(cur);
        cur = Route{};
        cur.depot = v;
        just_closed = true;
        relocated = false;
        if (single && t + 1 < seq_.size()) add("structure", step + 1, "single-tour variant continues after its depot return");
        continue;
      }
      if (single && !routes.empty()) break;
      if (seen_at[v] >= 0) add("visit_once", step, "customer " + std::to_string(v) + " repeated");
      seen_at[v] = step;
      cur.stops.push_back(v);
      cur.steps.push_back(step);
      just_closed = false;
    }
    if (!just_closed) routes.push_back(cur);

    for (const Route& r : routes) check_route(r);

    int visited = 0;
    for (int i = in_.customer_begin(); i < in_.size(); ++i) visited += seen_at[i] >= 0;
    const bool optional_visits = fs().has(Family::PC) || fs().has(Family::OP);
    if (!optional_visits && visited < n_cust_)
      add("coverage", static_cast<int>(seq_.size()), std::to_string(n_cust_ - visited) + " customers never visited");

    if (fs().has(Family::B) && !routes.empty() && !routes[0].stops.empty() &&
        in_.nodes[routes[0].stops[0]].demand() < 0)
      add("first_linehaul", routes[0].steps[0], "first customer is a backhaul");

    if (fs().has(Family::PC) && visited < n_cust_) {
      double prize = 0.0;
      for (int i = in_.customer_begin(); i < in_.size(); ++i)
        if (seen_at[i] >= 0) prize += in_.nodes[i].omega[kPrize];
      const double need = in_.spec.param("required_prize");
      if (prize < need - kTol) add("prize_threshold", static_cast<int>(seq_.size()), "collected prize below the requirement");
    }

    const bool must_return = !open_;
    if (must_return && !in_.is_depot(seq_.back())) add("termination", static_cast<int>(seq_.size()), "tour does not return to its depot");
    // Open routes end at their last customer; a trailing depot is a route that never finished.
    if (!must_return && seq_.size() > 1 && in_.is_depot(seq_.back()))
      add("termination", static_cast<int>(seq_.size()) - 1, "open solution ends with a depot return");
  }

  void check_route(const Route& r) {
    const auto& nodes = in_.nodes;
    const int depot = r.depot;
    const bool closed_leg = r.returned && !open_;

    if (fs().has(Family::C) && !fs().has(Family::PD)) {
      double line = 0.0, back = 0.0;
      bool seen_backhaul = false;
      for (std::size_t k = 0; k < r.stops.size(); ++k) {
        const double dm = nodes[r.stops[k]].demand();
        if (dm >= 0) {
          line += dm;
          if (fs().has(Family::BP) && seen_backhaul)
            add("backhaul_precedence", r.steps[k], "linehaul after a backhaul on the same route");
        } else {
          back -= dm;
          seen_backhaul = true;
        }
      }
      const bool split = fs().has(Family::B) || fs().has(Family::BP);
      if (line > 1.0 + kTol) add("capacity", r.steps.empty() ? 0 : r.steps.back(), "linehaul volume exceeds capacity");
      if (split && back > 1.0 + kTol) add("capacity", r.steps.back(), "backhaul volume exceeds capacity");
      if (!split && back > 0) add("capacity", r.steps.back(), "negative demand without a backhaul family");
    }

    if (fs().has(Family::PD)) {
      const int half = n_cust_ / 2;
      const int base = in_.customer_begin();
      std::vector<int> pos(in_.size(), -1);
      for (std::size_t k = 0; k < r.stops.size(); ++k) pos[r.stops[k]] = static_cast<int>(k);
      double onboard = 0.0;
      for (std::size_t k = 0; k < r.stops.size(); ++k) {
        const int v = r.stops[k];
        const bool pickup = v - base < half;
        const int partner = pickup ? v + half : v - half;
        if (pickup) {
          if (fs().has(Family::C) && pos[partner] < 0)
            add("pickup_delivery", r.steps[k], "delivery of pickup " + std::to_string(v) + " not on the same route");
        } else if (pos[partner] < 0 || pos[partner] > static_cast<int>(k)) {
          add("pickup_delivery", r.steps[k], "delivery " + std::to_string(v) + " precedes its pickup");
        }
        if (fs().has(Family::C)) {
          onboard -= nodes[v].demand();
          if (onboard > 1.0 + kTol) add("capacity", r.steps[k], "vehicle overloaded");
        }
      }
    }

    double length = 0.0;
    int prev = depot;
    for (int v : r.stops) {
      length += in_.d(prev, v);
      prev = v;
    }
    const double with_return = length + (r.stops.empty() ? 0.0 : in_.d(prev, depot));
    if (fs().has(Family::L)) {
      const double used = open_ ? length : with_return;
      if (used > in_.spec.param("duration_limit") + kTol)
        add("duration", r.steps.empty() ? 0 : r.steps.back(), "route length " + std::to_string(used) + " over limit");
    }
    if (fs().has(Family::OP) && with_return > in_.spec.param("max_tour_length") + kTol)
      add("tour_length", r.steps.empty() ? 0 : r.steps.back(), "tour exceeds the length budget");

    if (fs().has(Family::TW)) {
      double clock = 0.0;
      prev = depot;
      for (std::size_t k = 0; k < r.stops.size(); ++k) {
        const auto& om = nodes[r.stops[k]].omega;
        const double arrive = clock + in_.d(prev, r.stops[k]);
        if (arrive > om[kLatest] + kTol) add("time_window", r.steps[k], "late arrival");
        clock = std::max(arrive, om[kEarliest]) + om[kService];
        prev = r.stops[k];
      }
      if (closed_leg && !r.stops.empty() && clock + in_.d(prev, depot) > nodes[depot].omega[kLatest] + kTol)
        add("time_window", r.return_step, "depot reached after its closing time");
    }
  }

  const UnifiedInstance& in_;
  const std::vector<int>& seq_;
  bool open_ = false;
  int n_cust_ = 0;
  CheckReport report_;
};

}  // namespace

CheckReport check_solution(const UnifiedInstance& instance, const std::vector<int>& sequence) {
  return Checker(instance, sequence).run();
}

}  // namespace urs
