#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "urs/constraint.hpp"

namespace urs {

// Attribute slots of the unified attribute set.
enum Attr : int { kDemand = 0, kPrize, kPenalty, kEarliest, kLatest, kService, kAttrCount };
// Bits of the node-type indicator.
enum TypeBit : int { kDepotBit = 0, kPickupBit, kDeliveryBit, kSubRouteBit, kOpenRouteBit, kTypeBitCount };

struct NodeRecord {
  // (eta, x, y)
  std::array<double, 3> rho{};
  // demand (normalized by capacity, signed), prize, penalty, earliest, latest, service
  std::array<double, kAttrCount> omega{};
  std::array<std::uint8_t, kTypeBitCount> xi{};

  double eta() const { return rho[0]; }
  double x() const { return rho[1]; }
  double y() const { return rho[2]; }
  double demand() const { return omega[kDemand]; }

  bool operator==(const NodeRecord&) const = default;
};

struct UnifiedInstance {
  std::vector<NodeRecord> nodes;  // depots first, then customers
  std::vector<double> dist;       // row-major, nodes.size()^2
  // relation matrix, row-major 0/1; empty when absent
  std::vector<std::uint8_t> relation;
  ConstraintSpec spec;
  std::uint64_t seed = 0;
  std::vector<int> depot_indices;

  int size() const { return static_cast<int>(nodes.size()); }
  int depot_count() const { return static_cast<int>(depot_indices.size()); }
  int customer_begin() const { return depot_count(); }
  bool is_depot(int i) const { return i < depot_count(); }
  bool symmetric() const { return !spec.families.has(Family::A); }
  bool has_relation() const { return !relation.empty(); }

  double d(int i, int j) const { return dist[static_cast<std::size_t>(i) * nodes.size() + j]; }
  std::uint8_t r(int i, int j) const { return relation[static_cast<std::size_t>(i) * nodes.size() + j]; }

  // Predefined pickup/delivery pairs (pickup, delivery); empty unless PD is active.
  std::vector<std::pair<int, int>> relation_pairs() const;

  bool operator==(const UnifiedInstance&) const = default;
};

// 13-slot multi-hot problem representation, ordered
// (RI, Coord, Demand, Prize, Penalty, EAT, LAT, ST, Depot, Pickup, Delivery, Sub-routes, OpenRoute).
inline constexpr int kSignatureSize = 13;

struct ProblemSignature {
  std::array<std::uint8_t, kSignatureSize> lambda{};
  FamilySet families;

  bool operator==(const ProblemSignature&) const = default;
};

UnifiedInstance generate_instance(const ConstraintSpec& spec, std::uint64_t seed);
ProblemSignature derive_signature(const UnifiedInstance& instance);

// Euclidean distance matrix of the node coordinates.
std::vector<double> euclidean_distances(const std::vector<NodeRecord>& nodes);

// Eight dihedral maps of the unit square; output[0] is the input.
std::vector<UnifiedInstance> symmetric_augmentations(const UnifiedInstance& instance);
// k copies with freshly sampled eta per node, everything else untouched.
std::vector<UnifiedInstance> asymmetric_augmentations(const UnifiedInstance& instance, int k,
                                                      std::optional<std::uint64_t> seed = std::nullopt);

std::array<double, 2> dihedral_map(int which, double x, double y);

}  // namespace urs
