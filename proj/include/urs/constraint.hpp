#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace urs {

// Constraint families a routing variant is composed from.
enum class Family : std::uint8_t {
  C,   // capacity
  O,   // open route
  B,   // mixed backhaul
  BP,  // backhaul with linehaul priority
  L,   // route duration limit
  TW,  // time windows
  MD,  // multi-depot
  PC,  // prize collecting (PCTSP)
  A,   // asymmetric distances
  PD,  // pickup and delivery
  OP,  // orienteering
};

inline constexpr int kFamilyCount = 11;

std::string_view family_name(Family f);
std::optional<Family> parse_family(std::string_view name);

class FamilySet {
 public:
  FamilySet() = default;
  FamilySet(std::initializer_list<Family> fs) {
    for (Family f : fs) insert(f);
  }

  bool has(Family f) const { return (bits_ >> static_cast<int>(f)) & 1U; }
  void insert(Family f) { bits_ |= 1U << static_cast<int>(f); }
  void erase(Family f) { bits_ &= ~(1U << static_cast<int>(f)); }
  bool empty() const { return bits_ == 0; }
  std::uint32_t bits() const { return bits_; }
  std::vector<Family> list() const;

  bool operator==(const FamilySet&) const = default;

 private:
  std::uint32_t bits_ = 0;
};

// Thrown when a family combination or parameter set cannot describe a variant.
class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ConstraintSpec {
  FamilySet families;
  int n_customers = 0;
  // capacity, duration_limit, depot_count, depot_end_time, service_time,
  // required_prize, max_tour_length, backhaul_fraction
  std::map<std::string, double> params;

  double param(const std::string& key) const;
  bool operator==(const ConstraintSpec&) const = default;
};

// Rejects inconsistent family sets, naming the conflicting families.
void validate(const ConstraintSpec& spec);

// Returns spec with every parameter the active families need filled in with
// its default; explicit entries are kept.
ConstraintSpec with_defaults(ConstraintSpec spec);

double default_op_max_length(int n_customers);

bool has_depot(const FamilySet& fs);
bool is_multi_route(const FamilySet& fs);

// Variant catalog: canonical lower-case names ("cvrp", "ocvrpbtw", "mdocvrpb", ...).
std::optional<FamilySet> parse_variant(std::string_view name);
std::string variant_name(const FamilySet& fs);
const std::vector<std::string>& variant_catalog();
const std::vector<std::string>& seen_variants();

ConstraintSpec make_spec(std::string_view variant, int n_customers);

}  // namespace urs
