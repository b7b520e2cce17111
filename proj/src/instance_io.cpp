#include "urs/instance_io.hpp"

#include <cmath>
#include <json.hpp>

#include "urs/hashing.hpp"
#include "urs/io.hpp"

namespace urs {

namespace {

using json = nlohmann::json;
using Reason = InstanceFormatError::Reason;

[[noreturn]] void fail(Reason r, const std::string& what) { throw InstanceFormatError(r, what); }

const json& field(const json& obj, const char* key) {
  if (!obj.is_object()) fail(Reason::kSchema, std::string("expected an object holding '") + key + "'");
  auto it = obj.find(key);
  if (it == obj.end()) fail(Reason::kSchema, std::string("missing key '") + key + "'");
  return *it;
}

double real_of(const json& v, const char* what) {
  if (!v.is_number()) fail(Reason::kMalformed, std::string("non-numeric value for '") + what + "'");
  const double x = v.get<double>();
  if (!std::isfinite(x)) fail(Reason::kMalformed, std::string("non-finite value for '") + what + "'");
  return x;
}

long long int_of(const json& v, const char* what) {
  if (!v.is_number_integer()) fail(Reason::kMalformed, std::string("expected an integer for '") + what + "'");
  return v.get<long long>();
}

void append_reals(std::string& out, const std::vector<double>& xs) {
  out += '[';
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += format_real(xs[i]);
  }
  out += ']';
}

}  // namespace

std::string instance_to_json(const UnifiedInstance& inst) {
  std::string s;
  s += "{\"version\":" + std::to_string(kInstanceFormatVersion) + ",\n";
  s += "\"spec\":{\"families\":[";
  bool first = true;
  for (Family f : inst.spec.families.list()) {
    if (!first) s += ',';
    first = false;
    s += '"';
    s += family_name(f);
    s += '"';
  }
  s += "],\"n\":" + std::to_string(inst.spec.n_customers) + ",\"params\":{";
  first = true;
  for (const auto& [k, v] : inst.spec.params) {
    if (!first) s += ',';
    first = false;
    s += '"' + k + "\":" + format_real(v);
  }
  s += "}},\n\"seed\":" + std::to_string(inst.seed) + ",\n\"depots\":[";
  for (std::size_t i = 0; i < inst.depot_indices.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(inst.depot_indices[i]);
  }
  s += "],\n\"nodes\":[\n";
  static constexpr const char* kAttrKeys[kAttrCount] = {"demand", "prize", "penalty", "tw_start", "tw_end", "service"};
  for (std::size_t i = 0; i < inst.nodes.size(); ++i) {
    const NodeRecord& nd = inst.nodes[i];
    s += "{\"eta\":" + format_real(nd.rho[0]) + ",\"x\":" + format_real(nd.rho[1]) + ",\"y\":" + format_real(nd.rho[2]);
    for (int a = 0; a < kAttrCount; ++a) s += std::string(",\"") + kAttrKeys[a] + "\":" + format_real(nd.omega[a]);
    s += ",\"type\":[";
    for (int b = 0; b < kTypeBitCount; ++b) {
      if (b) s += ',';
      s += nd.xi[b] ? '1' : '0';
    }
    s += "]}";
    s += i + 1 < inst.nodes.size() ? ",\n" : "\n";
  }
  s += "],\n\"dist\":";
  if (inst.symmetric()) s += "null";
  else append_reals(s, inst.dist);
  s += ",\n\"relation_pairs\":";
  if (!inst.has_relation()) {
    s += "null";
  } else {
    s += '[';
    first = true;
    for (auto [a, b] : inst.relation_pairs()) {
      if (!first) s += ',';
      first = false;
      s += '[' + std::to_string(a) + ',' + std::to_string(b) + ']';
    }
    s += ']';
  }
  s += "}\n";
  return s;
}

UnifiedInstance instance_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    fail(Reason::kMalformed, std::string("unparsable instance document: ") + e.what());
  }
  if (!doc.is_object()) fail(Reason::kSchema, "instance document must be an object");
  auto ver = doc.find("version");
  if (ver == doc.end()) fail(Reason::kVersion, "missing 'version'");
  if (!ver->is_number_integer() || ver->get<long long>() != kInstanceFormatVersion)
    fail(Reason::kVersion, "unsupported instance version " + ver->dump());

  UnifiedInstance inst;
  const json& spec = field(doc, "spec");
  const json& fams = field(spec, "families");
  if (!fams.is_array()) fail(Reason::kSchema, "'families' must be an array");
  for (const json& f : fams) {
    if (!f.is_string()) fail(Reason::kSchema, "family names must be strings");
    auto fam = parse_family(f.get<std::string>());
    if (!fam) fail(Reason::kSchema, "unknown family '" + f.get<std::string>() + "'");
    inst.spec.families.insert(*fam);
  }
  inst.spec.n_customers = static_cast<int>(int_of(field(spec, "n"), "n"));
  const json& params = field(spec, "params");
  if (!params.is_object()) fail(Reason::kSchema, "'params' must be an object");
  for (auto it = params.begin(); it != params.end(); ++it) inst.spec.params[it.key()] = real_of(it.value(), "params");

  const json& seed = field(doc, "seed");
  if (!seed.is_number_integer()) fail(Reason::kMalformed, "seed must be an integer");
  inst.seed = seed.is_number_unsigned() ? seed.get<std::uint64_t>() : static_cast<std::uint64_t>(seed.get<long long>());

  const json& depots = field(doc, "depots");
  if (!depots.is_array()) fail(Reason::kSchema, "'depots' must be an array");
  for (const json& d : depots) inst.depot_indices.push_back(static_cast<int>(int_of(d, "depots")));

  const json& nodes = field(doc, "nodes");
  if (!nodes.is_array()) fail(Reason::kSchema, "'nodes' must be an array");
  static constexpr const char* kAttrKeys[kAttrCount] = {"demand", "prize", "penalty", "tw_start", "tw_end", "service"};
  for (const json& jn : nodes) {
    NodeRecord nd;
    nd.rho = {real_of(field(jn, "eta"), "eta"), real_of(field(jn, "x"), "x"), real_of(field(jn, "y"), "y")};
    for (int a = 0; a < kAttrCount; ++a) nd.omega[a] = real_of(field(jn, kAttrKeys[a]), kAttrKeys[a]);
    const json& type = field(jn, "type");
    if (!type.is_array() || type.size() != kTypeBitCount) fail(Reason::kSize, "'type' must hold 5 bits");
    for (int b = 0; b < kTypeBitCount; ++b) {
      const long long bit = int_of(type[b], "type");
      if (bit != 0 && bit != 1) fail(Reason::kMalformed, "type bits must be 0 or 1");
      nd.xi[b] = static_cast<std::uint8_t>(bit);
    }
    inst.nodes.push_back(nd);
  }
  const std::size_t n = inst.nodes.size();
  if (static_cast<long long>(n) != inst.spec.n_customers + static_cast<long long>(inst.depot_indices.size()))
    fail(Reason::kSize, "node count disagrees with n plus depots");
  for (std::size_t k = 0; k < inst.depot_indices.size(); ++k)
    if (inst.depot_indices[k] != static_cast<int>(k)) fail(Reason::kSchema, "depots must occupy the leading indices");

  const json& dist = field(doc, "dist");
  if (dist.is_null()) {
    inst.dist = euclidean_distances(inst.nodes);
  } else {
    if (!dist.is_array()) fail(Reason::kSchema, "'dist' must be an array or null");
    if (dist.size() != n * n)
      fail(Reason::kSize, "distance matrix holds " + std::to_string(dist.size()) + " entries, expected " +
                              std::to_string(n * n));
    inst.dist.reserve(n * n);
    for (const json& v : dist) inst.dist.push_back(real_of(v, "dist"));
  }

  const json& rel = field(doc, "relation_pairs");
  if (!rel.is_null()) {
    if (!rel.is_array()) fail(Reason::kSchema, "'relation_pairs' must be an array or null");
    inst.relation.assign(n * n, 1);
    for (const json& p : rel) {
      if (!p.is_array() || p.size() != 2) fail(Reason::kSize, "relation pairs must have two entries");
      const long long a = int_of(p[0], "relation_pairs"), b = int_of(p[1], "relation_pairs");
      if (a < 0 || b < 0 || a >= static_cast<long long>(n) || b >= static_cast<long long>(n))
        fail(Reason::kSize, "relation pair index out of range");
      inst.relation[a * n + b] = 0;
      inst.relation[b * n + a] = 0;
    }
  }
  try {
    validate(inst.spec);
  } catch (const SpecError& e) {
    fail(Reason::kSchema, e.what());
  }
  return inst;
}

void write_instance(const std::filesystem::path& path, const UnifiedInstance& instance) {
  write_text_atomic(path, instance_to_json(instance));
}

UnifiedInstance read_instance(const std::filesystem::path& path) { return instance_from_json(read_text(path)); }

std::string instance_hash(const UnifiedInstance& instance) { return sha256_hex(instance_to_json(instance)); }

std::string solution_to_json(const SolutionRecord& r) {
  std::string s = "{\"version\":1,\"instance_ref\":\"" + r.instance_ref + "\",\"sequence\":[";
  for (std::size_t i = 0; i < r.sequence.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(r.sequence[i]);
  }
  s += "],\"objective\":" + format_real(r.objective);
  s += std::string(",\"sense\":\"") + (r.maximize ? "max" : "min") + "\"";
  s += std::string(",\"feasible\":") + (r.feasible ? "true" : "false");
  if (r.nodes_expanded) s += ",\"nodes_expanded\":" + std::to_string(*r.nodes_expanded);
  if (r.elapsed_ms) s += ",\"elapsed_ms\":" + std::to_string(*r.elapsed_ms);
  s += "}\n";
  return s;
}

SolutionRecord solution_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    fail(Reason::kMalformed, std::string("unparsable solution document: ") + e.what());
  }
  auto ver = doc.is_object() ? doc.find("version") : doc.end();
  if (ver == doc.end() || *ver != 1) fail(Reason::kVersion, "unsupported or missing solution version");
  SolutionRecord r;
  r.instance_ref = field(doc, "instance_ref").get<std::string>();
  for (const json& v : field(doc, "sequence")) r.sequence.push_back(static_cast<int>(int_of(v, "sequence")));
  r.objective = real_of(field(doc, "objective"), "objective");
  r.maximize = field(doc, "sense").get<std::string>() == "max";
  r.feasible = field(doc, "feasible").get<bool>();
  if (doc.contains("nodes_expanded")) r.nodes_expanded = int_of(doc["nodes_expanded"], "nodes_expanded");
  if (doc.contains("elapsed_ms")) r.elapsed_ms = int_of(doc["elapsed_ms"], "elapsed_ms");
  return r;
}

}  // namespace urs
