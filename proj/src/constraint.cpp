#include "urs/constraint.hpp"

#include <algorithm>
#include <array>
#include <unordered_map>

namespace urs {

namespace {

constexpr std::array<std::string_view, kFamilyCount> kFamilyNames = {
    "C", "O", "B", "BP", "L", "TW", "MD", "PC", "A", "PD", "OP"};

std::string join(const std::vector<Family>& fs) {
  std::string out;
  for (Family f : fs) {
    if (!out.empty()) out += "+";
    out += family_name(f);
  }
  return out;
}

[[noreturn]] void conflict(std::initializer_list<Family> fs, std::string_view why) {
  throw SpecError("conflicting families " + join(std::vector<Family>(fs)) + ": " + std::string(why));
}

struct Catalog {
  std::vector<std::string> names;
  std::unordered_map<std::string, FamilySet> by_name;

  void add(const std::string& name, FamilySet fs) {
    if (by_name.emplace(name, fs).second) names.push_back(name);
  }
};

const Catalog& catalog() {
  static const Catalog cat = [] {
    Catalog c;
    c.add("atsp", {Family::A});
    c.add("tsp", {});
    c.add("op", {Family::OP});
    c.add("pctsp", {Family::PC});
    c.add("pdtsp", {Family::PD});
    for (int asym = 0; asym < 2; ++asym)
      for (int md = 0; md < 2; ++md)
        for (int open = 0; open < 2; ++open)
          for (int back = 0; back < 3; ++back)
            for (int dur = 0; dur < 2; ++dur)
              for (int tw = 0; tw < 2; ++tw) {
                FamilySet fs{Family::C};
                if (asym) fs.insert(Family::A);
                if (md) fs.insert(Family::MD);
                if (open) fs.insert(Family::O);
                if (back == 1) fs.insert(Family::B);
                if (back == 2) fs.insert(Family::BP);
                if (dur) fs.insert(Family::L);
                if (tw) fs.insert(Family::TW);
                c.add(variant_name(fs), fs);
              }
    c.add("spctsp", {Family::PC});
    c.add("apdtsp", {Family::A, Family::PD});
    c.add("pdcvrp", {Family::PD, Family::C});
    c.add("opdcvrp", {Family::O, Family::PD, Family::C});
    c.add("apdcvrp", {Family::A, Family::PD, Family::C});
    c.add("aopdcvrp", {Family::A, Family::O, Family::PD, Family::C});
    return c;
  }();
  return cat;
}

}  // namespace

std::string_view family_name(Family f) { return kFamilyNames[static_cast<int>(f)]; }

std::optional<Family> parse_family(std::string_view name) {
  for (int i = 0; i < kFamilyCount; ++i)
    if (kFamilyNames[i] == name) return static_cast<Family>(i);
  return std::nullopt;
}

std::vector<Family> FamilySet::list() const {
  std::vector<Family> out;
  for (int i = 0; i < kFamilyCount; ++i)
    if (has(static_cast<Family>(i))) out.push_back(static_cast<Family>(i));
  return out;
}

double ConstraintSpec::param(const std::string& key) const {
  auto it = params.find(key);
  if (it == params.end()) throw SpecError("missing parameter '" + key + "'");
  return it->second;
}

bool has_depot(const FamilySet& fs) {
  for (Family f : {Family::C, Family::O, Family::B, Family::BP, Family::L, Family::TW, Family::MD,
                   Family::PC, Family::PD, Family::OP})
    if (fs.has(f)) return true;
  return false;
}

bool is_multi_route(const FamilySet& fs) { return fs.has(Family::C); }

void validate(const ConstraintSpec& spec) {
  const FamilySet& fs = spec.families;
  if (spec.n_customers < 1) throw SpecError("n_customers must be positive");
  if (fs.has(Family::B) && fs.has(Family::BP))
    conflict({Family::B, Family::BP}, "BP supersedes mixed backhaul; choose one");
  if (fs.has(Family::PD) && fs.has(Family::B)) conflict({Family::PD, Family::B}, "disjoint demand pairing");
  if (fs.has(Family::PD) && fs.has(Family::BP)) conflict({Family::PD, Family::BP}, "disjoint demand pairing");
  for (Family f : {Family::O, Family::B, Family::BP, Family::L, Family::TW, Family::MD})
    if (fs.has(f) && !fs.has(Family::C))
      throw SpecError("family " + std::string(family_name(f)) + " requires C");
  for (Family single : {Family::PC, Family::OP}) {
    if (!fs.has(single)) continue;
    for (Family other : {Family::C, Family::PD, Family::MD})
      if (fs.has(other)) conflict({single, other}, "single-tour variant cannot combine");
  }
  if (fs.has(Family::PC) && fs.has(Family::OP)) conflict({Family::PC, Family::OP}, "pick one prize objective");
  if (fs.has(Family::PD) && (fs.has(Family::TW) || fs.has(Family::L) || fs.has(Family::MD)))
    throw SpecError("family PD only composes with C, O and A");
  if (fs.has(Family::PD) && spec.n_customers % 2 != 0)
    throw SpecError("family PD needs an even number of customers");

  auto dc = spec.params.find("depot_count");
  if (dc != spec.params.end()) {
    const double v = dc->second;
    if (fs.has(Family::MD) && v < 2) throw SpecError("family MD needs depot_count >= 2");
    if (!fs.has(Family::MD) && v != 0 && v != 1) throw SpecError("depot_count > 1 requires family MD");
    if (!fs.has(Family::MD) && (v == 1) != has_depot(fs))
      throw SpecError("depot_count disagrees with the family set");
  }
  for (const auto& [k, v] : spec.params) {
    if (k == "depot_count" || k == "backhaul_fraction") continue;
    if (!(v > 0)) throw SpecError("parameter '" + k + "' must be positive");
  }
  auto bf = spec.params.find("backhaul_fraction");
  if (bf != spec.params.end() && (bf->second < 0 || bf->second > 1))
    throw SpecError("backhaul_fraction must lie in [0,1]");
}

double default_op_max_length(int n) {
  if (n <= 20) return 2.0;
  if (n >= 100) return 4.0;
  if (n <= 50) return 2.0 + (n - 20) / 30.0;
  return 3.0 + (n - 50) / 50.0;
}

ConstraintSpec with_defaults(ConstraintSpec spec) {
  const FamilySet& fs = spec.families;
  const bool asym = fs.has(Family::A);
  auto set = [&](const char* key, double v) { spec.params.emplace(key, v); };
  if (fs.has(Family::C)) set("capacity", fs.has(Family::PD) ? 20.0 : 50.0);
  if (fs.has(Family::L)) set("duration_limit", asym ? 0.6 : 3.0);
  set("depot_count", fs.has(Family::MD) ? 3.0 : (has_depot(fs) ? 1.0 : 0.0));
  if (fs.has(Family::TW)) {
    set("depot_end_time", asym ? 1.0 : 3.0);
    set("service_time", 0.2);
  }
  if (fs.has(Family::PC)) set("required_prize", 1.0);
  if (fs.has(Family::OP)) set("max_tour_length", default_op_max_length(spec.n_customers));
  if (fs.has(Family::B) || fs.has(Family::BP)) set("backhaul_fraction", 0.2);
  return spec;
}

std::string variant_name(const FamilySet& fs) {
  std::string s;
  if (fs.has(Family::A)) s += "a";
  if (fs.has(Family::MD)) s += "md";
  if (fs.has(Family::O)) s += "o";
  if (fs.has(Family::PD)) s += "pd";
  if (fs.has(Family::OP)) return s + "op";
  if (fs.has(Family::PC)) return s + "pctsp";
  if (!fs.has(Family::C)) return s + "tsp";
  s += "cvrp";
  if (fs.has(Family::BP)) s += "bp";
  if (fs.has(Family::B)) s += "b";
  if (fs.has(Family::L)) s += "l";
  if (fs.has(Family::TW)) s += "tw";
  return s;
}

std::optional<FamilySet> parse_variant(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  const auto& cat = catalog();
  auto it = cat.by_name.find(lower);
  if (it == cat.by_name.end()) return std::nullopt;
  return it->second;
}

const std::vector<std::string>& variant_catalog() { return catalog().names; }

const std::vector<std::string>& seen_variants() {
  static const std::vector<std::string> seen = {"atsp",  "tsp",    "op",    "pctsp", "pdtsp",  "acvrp",
                                                "cvrp",  "cvrptw", "cvrpb", "ocvrp", "ocvrptw"};
  return seen;
}

ConstraintSpec make_spec(std::string_view variant, int n_customers) {
  auto fs = parse_variant(variant);
  if (!fs) throw SpecError("unknown variant '" + std::string(variant) + "'");
  ConstraintSpec spec;
  spec.families = *fs;
  spec.n_customers = n_customers;
  spec = with_defaults(std::move(spec));
  validate(spec);
  return spec;
}

}  // namespace urs
