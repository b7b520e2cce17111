#include <algorithm>
#include <cmath>
#include <numeric>

#include "urs/instance.hpp"
#include "urs/rng.hpp"

namespace urs {

namespace {

constexpr int kMaxServiceabilityRetries = 100000;

void min_plus_closure(std::vector<double>& d, int n) {
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i) {
      const double dik = d[i * n + k];
      for (int j = 0; j < n; ++j) {
        const double via = dik + d[k * n + j];
        if (via < d[i * n + j]) d[i * n + j] = via;
      }
    }
}

std::vector<double> sample_asymmetric(Rng& rng, int n) {
  std::vector<double> d(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) d[i * n + j] = rng.uniform();
  min_plus_closure(d, n);
  return d;
}

void fill_distance_row_col(std::vector<double>& d, const std::vector<NodeRecord>& nodes, int i) {
  const int n = static_cast<int>(nodes.size());
  for (int j = 0; j < n; ++j) {
    if (j == i) {
      d[i * n + i] = 0.0;
      continue;
    }
    const double dx = nodes[i].x() - nodes[j].x();
    const double dy = nodes[i].y() - nodes[j].y();
    const double v = std::sqrt(dx * dx + dy * dy);
    d[i * n + j] = v;
    d[j * n + i] = v;
  }
}

// Worst-case outbound and inbound depot legs of customer i.
std::pair<double, double> depot_legs(const std::vector<double>& d, int n, int depots, int i) {
  double out = 0.0, in = 0.0;
  for (int k = 0; k < depots; ++k) {
    out = std::max(out, d[k * n + i]);
    in = std::max(in, d[i * n + k]);
  }
  return {out, in};
}

}  // namespace

std::vector<double> euclidean_distances(const std::vector<NodeRecord>& nodes) {
  const int n = static_cast<int>(nodes.size());
  std::vector<double> d(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double dx = nodes[i].x() - nodes[j].x();
      const double dy = nodes[i].y() - nodes[j].y();
      const double v = std::sqrt(dx * dx + dy * dy);
      d[i * n + j] = v;
      d[j * n + i] = v;
    }
  return d;
}

UnifiedInstance generate_instance(const ConstraintSpec& raw_spec, std::uint64_t seed) {
  UnifiedInstance inst;
  inst.spec = with_defaults(raw_spec);
  validate(inst.spec);
  inst.seed = seed;

  const ConstraintSpec& spec = inst.spec;
  const FamilySet& fs = spec.families;
  const int n_cust = spec.n_customers;
  const int depots = static_cast<int>(spec.param("depot_count"));
  const int n = depots + n_cust;
  const bool asym = fs.has(Family::A);

  inst.nodes.resize(n);
  for (int k = 0; k < depots; ++k) inst.depot_indices.push_back(k);

  const Rng root(seed);
  Rng coords = root.split("coords");
  Rng coords_retry = root.split("coords_retry");
  Rng dist_rng = root.split("dist");

  if (asym) {
    inst.dist = sample_asymmetric(dist_rng, n);
    Rng eta = root.split("eta");
    for (auto& node : inst.nodes) node.rho[0] = eta.uniform();
  } else {
    for (auto& node : inst.nodes) {
      node.rho[1] = coords.uniform();
      node.rho[2] = coords.uniform();
    }
    inst.dist = euclidean_distances(inst.nodes);
  }

  // Every customer must be serviceable by a fresh route from every depot.
  const bool tw = fs.has(Family::TW);
  const bool dur = fs.has(Family::L);
  const double service = tw ? spec.param("service_time") : 0.0;
  const double horizon = tw ? spec.param("depot_end_time") : 0.0;
  const double limit = dur ? spec.param("duration_limit") : 0.0;
  if (tw || dur) {
    auto serviceable = [&](int i) {
      auto [out, in] = depot_legs(inst.dist, n, depots, i);
      if (tw && out + service + in > horizon) return false;
      if (dur && out + in > limit) return false;
      return true;
    };
    int retries = 0;
    for (;;) {
      bool all_ok = true;
      for (int i = depots; i < n; ++i) {
        if (serviceable(i)) continue;
        all_ok = false;
        if (asym) break;
        do {
          if (++retries > kMaxServiceabilityRetries) throw SpecError("cannot place serviceable customers");
          inst.nodes[i].rho[1] = coords_retry.uniform();
          inst.nodes[i].rho[2] = coords_retry.uniform();
          fill_distance_row_col(inst.dist, inst.nodes, i);
        } while (!serviceable(i));
      }
      if (all_ok) break;
      if (asym) {
        if (++retries > kMaxServiceabilityRetries) throw SpecError("cannot sample a serviceable asymmetric matrix");
        inst.dist = sample_asymmetric(dist_rng, n);
      } else {
        // symmetric repairs are local; one more pass confirms nobody regressed
        continue;
      }
    }
  }

  // demands
  if (fs.has(Family::C)) {
    const double capacity = spec.param("capacity");
    Rng demand = root.split("demand");
    if (fs.has(Family::PD)) {
      const int half = n_cust / 2;
      for (int p = 0; p < half; ++p) {
        const double raw = static_cast<double>(demand.uniform_int(1, 9));
        inst.nodes[depots + half + p].omega[kDemand] = raw / capacity;
        inst.nodes[depots + p].omega[kDemand] = -raw / capacity;
      }
    } else {
      for (int i = depots; i < n; ++i)
        inst.nodes[i].omega[kDemand] = static_cast<double>(demand.uniform_int(1, 9)) / capacity;
    }
    if (fs.has(Family::B) || fs.has(Family::BP)) {
      Rng back = root.split("backhaul");
      const int count = static_cast<int>(std::lround(spec.param("backhaul_fraction") * n_cust));
      std::vector<int> order(n_cust);
      std::iota(order.begin(), order.end(), depots);
      for (int k = 0; k < count; ++k) {
        const int j = k + static_cast<int>(back.index(static_cast<std::size_t>(n_cust - k)));
        std::swap(order[k], order[j]);
        inst.nodes[order[k]].omega[kDemand] = -inst.nodes[order[k]].omega[kDemand];
      }
    }
  }

  if (tw) {
    Rng win = root.split("tw");
    for (int k = 0; k < depots; ++k) {
      inst.nodes[k].omega[kEarliest] = 0.0;
      inst.nodes[k].omega[kLatest] = horizon;
      inst.nodes[k].omega[kService] = 0.0;
    }
    for (int i = depots; i < n; ++i) {
      auto [out, in] = depot_legs(inst.dist, n, depots, i);
      const double latest_start = horizon - in - service;
      const double center = win.uniform(out, latest_start);
      const double half_width = win.uniform(service / 2.0, horizon / 6.0);
      auto& om = inst.nodes[i].omega;
      om[kEarliest] = std::max(0.0, center - half_width);
      om[kLatest] = std::min(latest_start, center + half_width);
      om[kService] = service;
    }
  }

  if (fs.has(Family::PC)) {
    Rng prize = root.split("prize");
    Rng penalty = root.split("penalty");
    const double kn = 4.0;
    for (int i = depots; i < n; ++i) {
      inst.nodes[i].omega[kPrize] = prize.uniform(0.0, 4.0 / n_cust);
      inst.nodes[i].omega[kPenalty] = penalty.uniform(0.0, 3.0 * kn / n_cust);
    }
  }

  if (fs.has(Family::OP)) {
    double far = 0.0;
    for (int i = depots; i < n; ++i) far = std::max(far, inst.dist[i]);
    for (int i = depots; i < n; ++i) {
      const double rel = far > 0 ? inst.dist[i] / far : 0.0;
      inst.nodes[i].omega[kPrize] = (1.0 + std::floor(99.0 * rel)) / 100.0;
    }
  }

  // node-type indicator
  const bool multi = is_multi_route(fs);
  for (int i = 0; i < n; ++i) {
    auto& xi = inst.nodes[i].xi;
    if (i < depots) {
      xi[kDepotBit] = 1;
    } else if (fs.has(Family::PD)) {
      const int c = i - depots;
      xi[c < n_cust / 2 ? kPickupBit : kDeliveryBit] = 1;
    } else if (fs.has(Family::C)) {
      xi[inst.nodes[i].omega[kDemand] < 0 ? kPickupBit : kDeliveryBit] = 1;
    }
    if (multi) xi[kSubRouteBit] = 1;
    if (fs.has(Family::O)) xi[kOpenRouteBit] = 1;
  }

  if (fs.has(Family::PD)) {
    inst.relation.assign(static_cast<std::size_t>(n) * n, 1);
    const int half = n_cust / 2;
    for (int p = 0; p < half; ++p) {
      const int a = depots + p, b = depots + half + p;
      inst.relation[a * n + b] = 0;
      inst.relation[b * n + a] = 0;
    }
  }
  return inst;
}

}  // namespace urs
