#include "urs/report.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "urs/hashing.hpp"
#include "urs/instance_io.hpp"
#include "urs/io.hpp"
#include "urs/oracle.hpp"
#include "urs/rng.hpp"

namespace urs {

namespace {

namespace fs = std::filesystem;

std::string catalog_list() {
  std::string s;
  for (const auto& v : variant_catalog()) s += (s.empty() ? "" : ", ") + v;
  return s;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

long long ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

UnknownVariantError::UnknownVariantError(const std::string& name)
    : std::invalid_argument("unknown variant '" + name + "'; known variants: " + catalog_list()) {}

ConstraintSpec resolve_spec(const std::string& name_or_file, int n_customers) {
  if (parse_variant(name_or_file)) return make_spec(name_or_file, n_customers);
  if (!fs::is_regular_file(name_or_file)) throw UnknownVariantError(name_or_file);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(name_or_file));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("spec file " + name_or_file + " is not valid JSON: " + e.what());
  }
  ConstraintSpec spec;
  spec.n_customers = n_customers;
  for (const auto& f : j.at("families")) {
    const std::string name = f;
    const auto fam = parse_family(name);
    if (!fam) throw std::invalid_argument("spec file names an unknown family '" + name + "'");
    spec.families.insert(*fam);
  }
  if (j.contains("params"))
    for (auto it = j["params"].begin(); it != j["params"].end(); ++it) spec.params[it.key()] = it.value();
  spec = with_defaults(spec);
  validate(spec);
  return spec;
}

GeneratedDataset generate_dataset(const ConstraintSpec& spec, int count, std::uint64_t seed, const fs::path& out_dir) {
  if (count < 0) throw std::invalid_argument("generate: count must be non-negative");
  fs::create_directories(out_dir);
  const std::string variant = variant_name(spec.families);
  GeneratedDataset out;
  std::vector<std::string> hashes(count);
  out.files.resize(count);
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < count; ++i) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(i);
    const UnifiedInstance inst = generate_instance(spec, s);
    const std::string text = instance_to_json(inst);
    out.files[i] = out_dir / (variant + "_" + std::to_string(spec.n_customers) + "_" + std::to_string(s) + ".json");
    write_text_atomic(out.files[i], text);
    hashes[i] = sha256_hex(text);
  }
  nlohmann::json files = nlohmann::json::array();
  for (int i = 0; i < count; ++i) files.push_back({{"file", out.files[i].filename().string()}, {"sha256", hashes[i]}});
  const nlohmann::json manifest = {{"variant", variant},
                                   {"n_customers", spec.n_customers},
                                   {"seed", seed},
                                   {"count", count},
                                   {"files", files}};
  out.manifest = out_dir / "manifest.json";
  write_text_atomic(out.manifest, manifest.dump(2) + "\n");
  return out;
}

std::vector<fs::path> dataset_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json" && e.path().filename() != "manifest.json")
      files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

fs::path reference_path(const fs::path& instance_file) {
  return instance_file.parent_path() / "references" / (instance_file.stem().string() + ".solution.json");
}

OracleSummary run_oracle(const fs::path& dir) {
  const auto files = dataset_files(dir);
  struct Item {
    std::string variant;
    bool solved = false;
    double objective = 0.0;
    std::string warning;
  };
  std::vector<Item> items(files.size());
  std::vector<std::exception_ptr> errors(files.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < static_cast<int>(files.size()); ++i) {
    try {
      const UnifiedInstance inst = read_instance(files[i]);
      items[i].variant = variant_name(inst.spec.families);
      if (inst.spec.n_customers > kExactCustomerCap) {
        items[i].warning = files[i].filename().string() + ": " + std::to_string(inst.spec.n_customers) +
                           " customers exceeds the exact cap of " + std::to_string(kExactCustomerCap) + "; skipped";
        continue;
      }
      const OracleResult r = exact_solve(inst);
      SolutionRecord rec;
      rec.instance_ref = files[i].filename().string();
      rec.sequence = r.solution;
      rec.objective = r.objective.value;
      rec.maximize = r.objective.maximize;
      rec.feasible = check_solution(inst, r.solution).feasible;
      rec.nodes_expanded = r.nodes_expanded;
      const fs::path out = reference_path(files[i]);
      fs::create_directories(out.parent_path());
      write_text_atomic(out, solution_to_json(rec));
      items[i].solved = true;
      items[i].objective = r.objective.value;
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  OracleSummary sum;
  std::map<std::string, std::pair<int, double>> acc;
  for (const auto& it : items) {
    if (!it.warning.empty()) {
      ++sum.skipped;
      sum.warnings.push_back(it.warning);
      continue;
    }
    auto& a = acc[it.variant];
    ++a.first;
    a.second += it.objective;
  }
  for (const auto& [v, a] : acc) sum.rows.push_back({v, a.first, a.second / a.first});
  return sum;
}

InstanceEval evaluate_instance(const PolicyParams<float>& params, const UnifiedInstance& inst, const EvalOptions& opt) {
  std::vector<UnifiedInstance> views;
  if (!opt.augment) views.push_back(inst);
  else if (inst.symmetric()) views = symmetric_augmentations(inst);
  else views = asymmetric_augmentations(inst, opt.asymmetric_copies, Rng(opt.seed).split("augment").split(inst.seed).next_u64());

  InstanceEval best;
  best.augmentation = static_cast<int>(views.size());
  Rng rng = Rng(opt.seed).split("eval").split(inst.seed);
  bool have = false;
  const auto starts = RoutingEnv(inst).default_starts();
  for (const auto& view : views) {
    const auto trajs = rollout(params, view, opt.mode == EvalMode::kGreedy ? DecodeMode::kGreedy : DecodeMode::kSample,
                               starts, &rng);
    for (const auto& t : trajs) {
      if (t.infeasible) continue;
      const ObjectiveResult obj = evaluate_solution(inst, t.sequence);
      const bool better = obj.maximize ? obj.value > best.objective : obj.value < best.objective;
      if (!have || better) {
        have = true;
        best.objective = obj.value;
        best.best_sequence = t.sequence;
      }
    }
  }
  best.feasible = have && check_solution(inst, best.best_sequence).feasible;
  return best;
}

EvalReport evaluate_dataset(const fs::path& dir, const PolicyParams<float>& params, const EvalOptions& opt) {
  const auto files = dataset_files(dir);
  if (files.empty()) throw IoError("no instances in " + dir.string());
  struct Item {
    std::string variant;
    InstanceEval eval;
    std::optional<double> gap;
    long long ms = 0;
  };
  std::vector<Item> items(files.size());
  std::vector<std::exception_ptr> errors(files.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < static_cast<int>(files.size()); ++i) {
    try {
      const UnifiedInstance inst = read_instance(files[i]);
      items[i].variant = variant_name(inst.spec.families);
      const auto t0 = std::chrono::steady_clock::now();
      items[i].eval = evaluate_instance(params, inst, opt);
      items[i].ms = ms_since(t0);
      std::optional<double> ref;
      bool maximize = false;
      const fs::path rp = reference_path(files[i]);
      if (fs::exists(rp)) {
        const SolutionRecord r = solution_from_json(read_text(rp));
        ref = r.objective;
        maximize = r.maximize;
      } else if (opt.exact_when_small && inst.spec.n_customers <= kExactCustomerCap) {
        const OracleResult r = exact_solve(inst);
        ref = r.objective.value;
        maximize = r.objective.maximize;
      }
      if (ref && items[i].eval.feasible && *ref != 0.0) items[i].gap = gap(items[i].eval.objective, *ref, maximize);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::map<std::string, EvalRow> rows;
  std::map<std::string, double> gap_sum;
  std::map<std::string, int> feasible;
  for (const auto& it : items) {
    EvalRow& r = rows[it.variant];
    r.variant = it.variant;
    ++r.instances;
    r.augmentation = it.eval.augmentation;
    r.wall_ms += it.ms;
    if (it.eval.feasible) {
      ++feasible[it.variant];
      r.mean_objective += it.eval.objective;
    }
    if (it.gap) {
      ++r.gap_instances;
      gap_sum[it.variant] += *it.gap;
    }
  }
  EvalReport rep;
  for (auto& [v, r] : rows) {
    const int f = feasible[v];
    r.mean_objective = f ? r.mean_objective / f : 0.0;
    r.feasibility = static_cast<double>(f) / r.instances;
    if (r.gap_instances) r.mean_gap = gap_sum[v] / r.gap_instances;
    rep.rows.push_back(r);
  }
  return rep;
}

namespace {

std::vector<std::vector<std::string>> eval_cells(const EvalReport& rep) {
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rep.rows)
    cells.push_back({r.variant, std::to_string(r.instances), fmt("%.6f", r.mean_objective),
                     r.mean_gap ? fmt("%.4f", *r.mean_gap) : std::string(""), std::to_string(r.wall_ms),
                     fmt("%.4f", r.feasibility), std::to_string(r.augmentation)});
  return cells;
}

}  // namespace

std::string eval_csv(const EvalReport& rep) {
  std::string out = std::string(kEvalHeader) + "\n";
  for (const auto& row : eval_cells(rep)) {
    for (std::size_t c = 0; c < row.size(); ++c) out += (c ? "," : "") + row[c];
    out += "\n";
  }
  return out;
}

void print_eval_table(const EvalReport& rep, std::ostream& out) {
  const std::vector<std::string> head{"variant", "n", "obj", "gap-to-exact %", "time ms", "feasible", "aug"};
  auto cells = eval_cells(rep);
  for (auto& row : cells)
    if (row[3].empty()) row[3] = "-";
  std::vector<std::size_t> w(head.size());
  for (std::size_t c = 0; c < head.size(); ++c) {
    w[c] = head[c].size();
    for (const auto& row : cells) w[c] = std::max(w[c], row[c].size());
  }
  auto line = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      const std::string pad(w[c] - row[c].size(), ' ');
      out << (c ? "  " : "") << (c == 0 ? row[c] + pad : pad + row[c]);
    }
    out << "\n";
  };
  line(head);
  std::size_t total = 0;
  for (auto x : w) total += x + 2;
  out << std::string(total - 2, '-') << "\n";
  for (const auto& row : cells) line(row);
}

UnifiedInstance read_cvrplib(const fs::path& path, double* scale_out) {
  std::istringstream in(read_text(path));
  std::string line, section;
  int dimension = 0;
  double capacity = 0.0;
  std::map<int, std::pair<double, double>> coords;
  std::map<int, double> demand;
  std::vector<int> depots;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto colon = line.find(':');
    std::istringstream ls(line);
    std::string first;
    ls >> first;
    if (first.empty()) continue;
    if (first == "EOF") break;
    if (first == "NODE_COORD_SECTION" || first == "DEMAND_SECTION" || first == "DEPOT_SECTION") {
      section = first;
      continue;
    }
    if (colon != std::string::npos && !std::isdigit(static_cast<unsigned char>(first[0]))) {
      std::string key = line.substr(0, colon), val = line.substr(colon + 1);
      key.erase(key.find_last_not_of(" \t") + 1);
      if (key == "DIMENSION") dimension = std::stoi(val);
      else if (key == "CAPACITY") capacity = std::stod(val);
      else if (key == "EDGE_WEIGHT_TYPE" && val.find("EUC_2D") == std::string::npos)
        throw InstanceFormatError(InstanceFormatError::Reason::kSchema, "only EUC_2D CVRPLIB files are supported");
      section.clear();
      continue;
    }
    std::istringstream row(line);
    if (section == "NODE_COORD_SECTION") {
      int id;
      double x, y;
      if (row >> id >> x >> y) coords[id] = {x, y};
    } else if (section == "DEMAND_SECTION") {
      int id;
      double d;
      if (row >> id >> d) demand[id] = d;
    } else if (section == "DEPOT_SECTION") {
      int id;
      if (row >> id && id > 0) depots.push_back(id);
    }
  }
  if (dimension < 2 || capacity <= 0 || static_cast<int>(coords.size()) != dimension ||
      static_cast<int>(demand.size()) != dimension || depots.size() != 1)
    throw InstanceFormatError(InstanceFormatError::Reason::kMalformed,
                              "CVRPLIB file needs DIMENSION, CAPACITY, one depot and full coordinate/demand sections");

  double minx = 1e300, miny = 1e300, maxx = -1e300, maxy = -1e300;
  for (const auto& [id, p] : coords) {
    minx = std::min(minx, p.first);
    maxx = std::max(maxx, p.first);
    miny = std::min(miny, p.second);
    maxy = std::max(maxy, p.second);
  }
  const double scale = std::max({maxx - minx, maxy - miny, 1e-12});
  if (scale_out) *scale_out = scale;

  ConstraintSpec spec = make_spec("cvrp", dimension - 1);
  spec.params["capacity"] = capacity;
  UnifiedInstance inst;
  inst.spec = spec;
  inst.depot_indices = {0};
  std::vector<int> order{depots[0]};
  for (const auto& [id, p] : coords)
    if (id != depots[0]) order.push_back(id);
  for (int id : order) {
    NodeRecord nd;
    nd.rho[1] = (coords[id].first - minx) / scale;
    nd.rho[2] = (coords[id].second - miny) / scale;
    const bool depot = id == depots[0];
    nd.omega[kDemand] = depot ? 0.0 : demand[id] / capacity;
    if (nd.omega[kDemand] > 1.0)
      throw InstanceFormatError(InstanceFormatError::Reason::kSchema, "customer demand exceeds vehicle capacity");
    nd.xi[depot ? kDepotBit : kDeliveryBit] = 1;
    nd.xi[kSubRouteBit] = 1;
    inst.nodes.push_back(nd);
  }
  inst.dist = euclidean_distances(inst.nodes);
  return inst;
}

}  // namespace urs
