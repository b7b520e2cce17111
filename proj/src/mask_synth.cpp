#include "urs/mask_synth.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <mutex>
#include <sstream>

#include "urs/hashing.hpp"
#include "urs/io.hpp"
#include "urs/rng.hpp"

namespace urs {

namespace {

using nlohmann::json;

constexpr const char* kHarness = R"PY(import json
import sys

namespace = {"__name__": "candidate"}
with open(sys.argv[1]) as f:
    exec(compile(f.read(), "candidate.py", "exec"), namespace)
generate_mask = namespace["generate_mask"]
instance = None
for line in sys.stdin:
    request = json.loads(line)
    if "instance" in request:
        instance = request["instance"]
    mask = generate_mask(request["state"], request["n"], instance)
    sys.stdout.write(json.dumps({"mask": [bool(x) for x in mask]}) + "\n")
    sys.stdout.flush()
)PY";

std::once_flag sigpipe_once;

std::string tail(const std::string& s, std::size_t n) { return s.size() <= n ? s : "..." + s.substr(s.size() - n); }

json instance_json(const UnifiedInstance& in) {
  json nodes = json::array();
  for (const auto& nd : in.nodes)
    nodes.push_back({{"x", nd.x()},
                     {"y", nd.y()},
                     {"demand", nd.omega[kDemand]},
                     {"prize", nd.omega[kPrize]},
                     {"penalty", nd.omega[kPenalty]},
                     {"earliest", nd.omega[kEarliest]},
                     {"latest", nd.omega[kLatest]},
                     {"service", nd.omega[kService]},
                     {"pickup", nd.xi[kPickupBit] != 0},
                     {"delivery", nd.xi[kDeliveryBit] != 0}});
  json dist = json::array();
  for (int i = 0; i < in.size(); ++i) {
    json row = json::array();
    for (int j = 0; j < in.size(); ++j) row.push_back(in.d(i, j));
    dist.push_back(std::move(row));
  }
  json pairs = json::array();
  for (const auto& [p, d] : in.relation_pairs()) pairs.push_back({p, d});
  return {{"depots", in.depot_count()}, {"nodes", nodes}, {"dist", dist},
          {"pairs", pairs},             {"params", in.spec.params}};
}

}  // namespace

// ---------------------------------------------------------------- tasks

std::string constraint_description(const ConstraintSpec& spec) {
  const FamilySet& f = spec.families;
  std::ostringstream o;
  if (!has_depot(f)) {
    o << "Given the current node, visited nodes, and the number of nodes, design a function to mask visited nodes. "
         "Every node is visited exactly once and the tour returns to its first node.";
    return o.str();
  }
  o << "Nodes 0.." << (f.has(Family::MD) ? "D-1" : "0")
    << " are depots (instance[\"depots\"] of them), the rest are customers. Every customer must be visited exactly "
       "once; already visited customers are masked for you, so the function only has to enforce the rules below.";
  if (f.has(Family::C))
    o << " Capacity: state[\"load\"] is the remaining capacity of the current route as a fraction of the vehicle "
         "capacity; a delivery customer i can only be served if nodes[i][\"demand\"] <= load. Selecting a depot closes "
         "the route and the next one starts with load 1.0.";
  if (f.has(Family::O)) o << " Open routes: vehicles do not return to the depot, so return legs cost nothing.";
  if (f.has(Family::B))
    o << " Backhauls: customers with negative demand are pickups; the volume already picked up is "
         "state[\"backhaul_load\"] and it may not exceed the route capacity together with remaining deliveries.";
  if (f.has(Family::BP))
    o << " Linehaul priority: on each route all linehaul (positive demand) customers come before any backhaul; "
         "state[\"phase\"] tells which phase the route is in.";
  if (f.has(Family::L))
    o << " Duration limit: a route's length, including the return to its depot, may not exceed "
         "params[\"duration_limit\"]; state[\"route_length\"] is the length so far.";
  if (f.has(Family::TW))
    o << " Time windows: service at customer i may not start after nodes[i][\"latest\"]; arriving before "
         "nodes[i][\"earliest\"] means waiting; nodes[i][\"service\"] is added after service; every route must get "
         "back to its depot by params[\"depot_end_time\"]. state[\"clock\"] is the current time.";
  if (f.has(Family::MD))
    o << " Multiple depots: a route starts and ends at the same depot (state[\"origin_depot\"]).";
  if (f.has(Family::PD))
    o << " Pickup and delivery: instance[\"pairs\"] lists (pickup, delivery) node pairs; a delivery is only "
         "selectable after its pickup was visited on the same route, and a route may only end once all its "
         "deliveries are done.";
  if (f.has(Family::PC))
    o << " Prize collecting: the tour may skip customers, but may only return to the depot once "
         "state[\"collected_prize\"] reaches params[\"required_prize\"].";
  if (f.has(Family::OP))
    o << " Orienteering: the tour may skip customers, but its length including the return to the depot may not "
         "exceed params[\"max_tour_length\"].";
  if (f.has(Family::A)) o << " Distances are asymmetric; always read dist[from][to].";
  return o.str();
}

std::string code_template() {
  return R"PY(def generate_mask(state: dict, num_nodes: int, instance: dict) -> list:
    """
    Design an algorithm that masks the nodes which can not be selected next.

    Args:
    state: current construction state (fields listed above).
    num_nodes: number of nodes, depots first.
    instance: {"depots", "nodes": [{"x", "y", "demand", "prize", "penalty",
        "earliest", "latest", "service", "pickup", "delivery"}, ...],
        "dist": num_nodes x num_nodes list, "pairs", "params"}.

    Return:
    mask: list of num_nodes booleans (True = selectable, False = masked).
    """
    return mask
)PY";
}

SynthesisTask make_synthesis_task(const std::string& variant, int n_customers, int instances, int rollouts,
                                  std::uint64_t seed) {
  if (instances < 1 || rollouts < 1) throw std::invalid_argument("synthesis task: validation set must be non-empty");
  SynthesisTask t;
  t.spec = make_spec(variant, n_customers);
  t.constraint_description = constraint_description(t.spec);
  t.template_text = code_template();
  t.compose_visit_once = has_depot(t.spec.families);
  t.rollouts_per_instance = rollouts;
  t.seed = seed;
  const Rng root = Rng(seed).split("synthesis-instances");
  for (int i = 0; i < instances; ++i)
    t.validation_instances.push_back(generate_instance(t.spec, root.split(static_cast<std::uint64_t>(i)).next_u64()));
  return t;
}

std::string build_prompt(const SynthesisTask& task) {
  if (task.constraint_description.empty() || task.template_text.empty())
    throw std::invalid_argument("build_prompt: description and template are required");
  std::ostringstream o;
  o << "Task description:\n" << task.constraint_description << "\n\n";
  o << "State fields (wire version " << kWireVersion << "):\n"
    << "- current: index of the node the vehicle stands at\n"
    << "- visited: indices of visited nodes\n"
    << "- load: remaining capacity of the current route (fraction of capacity)\n"
    << "- backhaul_load: volume picked up on the current route\n"
    << "- clock: current time on the route\n"
    << "- route_length: distance travelled on the current route\n"
    << "- origin_depot: depot the current route started from (-1 without depots)\n"
    << "- phase: \"linehaul\" or \"backhaul\"\n"
    << "- collected_prize: prize collected so far\n"
    << "- at_depot: whether the vehicle stands at a depot\n\n";
  o << "Code template (Python):\n" << task.template_text << "\n";
  o << "Return contract: a list of num_nodes booleans, True = selectable, False = masked. "
       "Reply with the complete function in one ```python block.\n";
  return o.str();
}

CandidateProgram CandidateProgram::from_source(std::string source) {
  CandidateProgram c;
  c.id = sha256_hex(source);
  c.source = std::move(source);
  return c;
}

// ---------------------------------------------------------------- sandbox

Sandbox::Sandbox(const CandidateProgram& candidate, SandboxConfig config) : cfg_(std::move(config)) {
  std::call_once(sigpipe_once, [] { ::signal(SIGPIPE, SIG_IGN); });
  std::string templ = (std::filesystem::temp_directory_path() / "urs-sandbox-XXXXXX").string();
  if (!::mkdtemp(templ.data())) throw IoError("cannot create sandbox directory: " + std::string(std::strerror(errno)));
  dir_ = templ;
  std::ofstream(dir_ / "harness.py") << kHarness;
  std::ofstream(dir_ / "candidate.py") << candidate.source;
}

Sandbox::~Sandbox() {
  stop();
  std::error_code ec;
  std::filesystem::remove_all(dir_, ec);
}

bool Sandbox::start() {
  int to_child[2], from_child[2];
  if (::pipe2(to_child, O_CLOEXEC) != 0) return false;
  if (::pipe2(from_child, O_CLOEXEC) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    return false;
  }
  const std::string harness = (dir_ / "harness.py").string(), cand = (dir_ / "candidate.py").string(),
                    err = (dir_ / "stderr.txt").string(), dir = dir_.string();
  const char* path = std::getenv("PATH");
  const std::string path_env = std::string("PATH=") + (path ? path : "/usr/bin:/bin");
  std::vector<char*> argv{const_cast<char*>(cfg_.interpreter.c_str()), const_cast<char*>("-I"),
                          const_cast<char*>("-B"), const_cast<char*>(harness.c_str()),
                          const_cast<char*>(cand.c_str()), nullptr};
  // The child sees only PATH; provider credentials never reach candidate code.
  std::vector<char*> envp{const_cast<char*>(path_env.c_str()), nullptr};
  const rlim_t mem = static_cast<rlim_t>(cfg_.memory_mb) << 20, cpu = static_cast<rlim_t>(cfg_.cpu_seconds);

  const pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) ::close(fd);
    return false;
  }
  if (pid == 0) {
    ::dup2(to_child[0], 0);
    ::dup2(from_child[1], 1);
    const int efd = ::open(err.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0600);
    if (efd >= 0) ::dup2(efd, 2);
    if (::chdir(dir.c_str()) != 0) ::_exit(126);
    const rlimit ml{mem, mem}, cl{cpu, cpu};
    ::setrlimit(RLIMIT_AS, &ml);
    ::setrlimit(RLIMIT_CPU, &cl);
    ::setpgid(0, 0);
    ::execvpe(argv[0], argv.data(), envp.data());
    ::_exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  pid_ = pid;
  in_fd_ = to_child[1];
  out_fd_ = from_child[0];
  buffer_.clear();
  return true;
}

void Sandbox::stop() {
  if (in_fd_ >= 0) ::close(in_fd_);
  if (out_fd_ >= 0) ::close(out_fd_);
  in_fd_ = out_fd_ = -1;
  if (pid_ > 0) {
    ::kill(-pid_, SIGKILL);
    ::kill(pid_, SIGKILL);
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }
  pid_ = -1;
  buffer_.clear();
}

std::optional<std::vector<std::uint8_t>> Sandbox::query(const std::string& request_line, int n) {
  error_.clear();
  if (pid_ < 0 && !start()) {
    error_ = "could not start the sandbox process";
    return std::nullopt;
  }
  auto crashed = [&](const std::string& what) {
    stop();
    std::string err;
    try {
      err = read_text(dir_ / "stderr.txt");
    } catch (const IoError&) {
    }
    while (!err.empty() && (err.back() == '\n' || err.back() == '\r')) err.pop_back();
    const auto nl = err.rfind('\n');
    if (nl != std::string::npos) err = err.substr(nl + 1);  // last line names the exception
    error_ = what + (err.empty() ? "" : ": " + tail(err, 200));
    return std::nullopt;
  };

  const std::string line = request_line + "\n";
  std::size_t sent = 0;
  while (sent < line.size()) {
    const ssize_t w = ::write(in_fd_, line.data() + sent, line.size() - sent);
    if (w < 0 && errno == EINTR) continue;
    if (w <= 0) return crashed("candidate process exited");
    sent += static_cast<std::size_t>(w);
  }

  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(cfg_.timeout_ms);
  std::size_t nl;
  while ((nl = buffer_.find('\n')) == std::string::npos) {
    const auto left =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now()).count();
    if (left <= 0) {
      stop();
      error_ = "timeout after " + std::to_string(cfg_.timeout_ms) + " ms";
      return std::nullopt;
    }
    pollfd pfd{out_fd_, POLLIN, 0};
    const int pr = ::poll(&pfd, 1, static_cast<int>(left));
    if (pr < 0 && errno == EINTR) continue;
    if (pr == 0) continue;
    char chunk[65536];
    const ssize_t r = ::read(out_fd_, chunk, sizeof chunk);
    if (r < 0 && errno == EINTR) continue;
    if (r <= 0) return crashed("candidate process exited");
    buffer_.append(chunk, static_cast<std::size_t>(r));
  }
  const std::string reply = buffer_.substr(0, nl);
  buffer_.erase(0, nl + 1);

  try {
    const json j = json::parse(reply);
    const json& m = j.at("mask");
    if (!m.is_array() || static_cast<int>(m.size()) != n) throw std::runtime_error("wrong mask length");
    std::vector<std::uint8_t> out(n);
    for (int i = 0; i < n; ++i) {
      if (!m[i].is_boolean()) throw std::runtime_error("mask entries must be booleans");
      out[i] = m[i].get<bool>() ? 1 : 0;
    }
    return out;
  } catch (const std::exception& e) {
    stop();
    error_ = std::string("malformed response (") + e.what() + "): " + tail(reply, 120);
    return std::nullopt;
  }
}

std::string wire_request(int step, const StepState& s, const UnifiedInstance& in, bool include_instance) {
  json visited = json::array();
  for (int i = 0; i < static_cast<int>(s.visited.size()); ++i)
    if (s.visited[i]) visited.push_back(i);
  json req = {{"step", step},
              {"n", in.size()},
              {"state",
               {{"version", kWireVersion},
                {"current", s.current},
                {"visited", visited},
                {"load", s.load},
                {"backhaul_load", s.backhaul_load},
                {"clock", s.clock},
                {"route_length", s.route_length},
                {"origin_depot", s.origin_depot},
                {"phase", s.phase == Phase::kLinehaul ? "linehaul" : "backhaul"},
                {"collected_prize", s.collected_prize},
                {"at_depot", s.at_depot}}}};
  if (include_instance) req["instance"] = instance_json(in);
  return req.dump();
}

// ---------------------------------------------------------------- validation

ValidationRecord validate_candidate(const CandidateProgram& candidate, const SynthesisTask& task,
                                    const SandboxConfig& sandbox_config) {
  if (task.validation_instances.empty() || task.rollouts_per_instance < 1)
    throw std::invalid_argument("validate_candidate: empty validation set");
  for (const auto& in : task.validation_instances)
    if (!(in.spec == task.spec)) throw std::invalid_argument("validate_candidate: instances must share the task spec");
  SandboxConfig cfg = sandbox_config;
  cfg.timeout_ms = task.timeout_ms;
  Sandbox box(candidate, cfg);

  ValidationRecord rec;
  rec.candidate_id = candidate.id;
  constexpr std::size_t kMaxDiagnostics = 8;
  auto note = [&](int inst, int roll, const std::string& msg) {
    if (rec.diagnostics.size() < kMaxDiagnostics)
      rec.diagnostics.push_back("instance " + std::to_string(inst) + " rollout " + std::to_string(roll) + ": " + msg);
  };

  const Rng root = Rng(task.seed).split("validation");
  for (std::size_t i = 0; i < task.validation_instances.size(); ++i) {
    const UnifiedInstance& in = task.validation_instances[i];
    const RoutingEnv env(in);
    const int n = in.size();
    const std::size_t cap = 4 * static_cast<std::size_t>(n) + 8;
    for (int r = 0; r < task.rollouts_per_instance; ++r) {
      ++rec.rollouts;
      Rng rng = root.split(static_cast<std::uint64_t>(i)).split(static_cast<std::uint64_t>(r));
      std::vector<int> seq;
      StepState s;
      if (env.rules().tsp) {
        const int first = static_cast<int>(rng.index(static_cast<std::size_t>(n)));
        s = env.initial_state(-1, first);
        seq.push_back(first);
      } else {
        const int origin = static_cast<int>(rng.index(static_cast<std::size_t>(in.depot_count())));
        s = env.initial_state(origin, origin);
        seq.push_back(origin);
      }
      std::string failure;
      for (int step = 0; !s.done; ++step) {
        if (seq.size() > cap) {
          failure = "no completion within " + std::to_string(cap) + " steps";
          break;
        }
        auto m = box.query(wire_request(step, s, in, step == 0), n);
        if (!m) {
          failure = "step " + std::to_string(step) + ": " + box.last_error();
          break;
        }
        if (task.compose_visit_once)
          for (int j = env.rules().tsp ? 0 : in.depot_count(); j < n; ++j)
            if (s.visited[j]) (*m)[j] = 0;
        std::vector<int> options;
        for (int j = 0; j < n; ++j)
          if ((*m)[j]) options.push_back(j);
        if (options.empty()) {
          failure = "step " + std::to_string(step) + ": empty mask with work remaining";
          break;
        }
        const int pick = options[rng.index(options.size())];
        env.advance(s, pick);
        seq.push_back(pick);
      }
      if (!failure.empty()) {
        note(static_cast<int>(i), r, failure);
        continue;
      }
      const CheckReport report = check_solution(in, seq);
      if (report.feasible) {
        ++rec.feasible;
      } else {
        const Violation& v = report.violations.front();
        note(static_cast<int>(i), r, "checker: " + v.rule + (v.detail.empty() ? "" : " (" + v.detail + ")"));
      }
    }
  }
  rec.validity_rate = static_cast<double>(rec.feasible) / rec.rollouts;
  return rec;
}

// ---------------------------------------------------------------- synthesis

std::string MaskGeneratorArtifact::to_json() const {
  const json j = {{"cache_key", cache_key},
                  {"variant", variant},
                  {"template_version", template_version},
                  {"accepted", accepted},
                  {"validity_rate", validity_rate},
                  {"candidate_id", candidate.id},
                  {"source", candidate.source}};
  return j.dump(2) + "\n";
}

MaskGeneratorArtifact MaskGeneratorArtifact::from_json(const std::string& text) {
  const json j = json::parse(text);
  MaskGeneratorArtifact a;
  a.cache_key = j.at("cache_key");
  a.variant = j.at("variant");
  a.template_version = j.at("template_version");
  a.accepted = j.at("accepted");
  a.validity_rate = j.at("validity_rate");
  a.candidate = CandidateProgram::from_source(j.at("source"));
  if (a.candidate.id != j.at("candidate_id").get<std::string>())
    throw std::runtime_error("artifact source does not match its content hash");
  return a;
}

std::string synthesis_cache_key(const ConstraintSpec& spec, int template_version) {
  return sha256_hex("urs-mask-generator|families=" + variant_name(spec.families) +
                    "|template=" + std::to_string(template_version));
}

SynthesisResult synthesize(const SynthesisTask& task, Provider& provider, const SynthesisOptions& options) {
  if (task.budget.rounds < 1 || task.budget.candidates_per_round < 1)
    throw std::invalid_argument("synthesize: budget must be positive");
  SynthesisResult res;
  const std::string key = synthesis_cache_key(task.spec);
  const std::string variant = variant_name(task.spec.families);
  std::filesystem::path cache_file;
  if (!options.cache_dir.empty()) {
    cache_file = options.cache_dir / (key + ".json");
    if (std::filesystem::exists(cache_file)) {
      res.artifact = MaskGeneratorArtifact::from_json(read_text(cache_file));
      res.cache_hit = true;
      res.artifact_path = cache_file;
      return res;
    }
  }

  const std::string base_prompt = build_prompt(task);
  std::string prompt = base_prompt;
  res.artifact.cache_key = key;
  res.artifact.variant = variant;
  bool have_best = false;

  for (int round = 1; round <= task.budget.rounds; ++round) {
    CandidateBatch batch = request_candidates(provider, prompt, task.budget.candidates_per_round);
    for (auto& d : batch.diagnostics) res.provider_diagnostics.push_back("round " + std::to_string(round) + ": " + d);
    std::vector<ValidationRecord> recs(batch.candidates.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (int c = 0; c < static_cast<int>(batch.candidates.size()); ++c)
      recs[c] = validate_candidate(batch.candidates[c], task, options.sandbox);

    for (std::size_t c = 0; c < recs.size(); ++c) {
      recs[c].round = round;
      res.records.push_back(recs[c]);
      if (!have_best || recs[c].validity_rate > res.artifact.validity_rate) {
        have_best = true;
        res.artifact.candidate = batch.candidates[c];
        res.artifact.validity_rate = recs[c].validity_rate;
      }
    }
    for (std::size_t c = 0; c < recs.size(); ++c) {
      if (recs[c].validity_rate == 1.0) {
        res.artifact.candidate = batch.candidates[c];
        res.artifact.validity_rate = 1.0;
        res.artifact.accepted = true;
        if (!cache_file.empty()) {
          std::filesystem::create_directories(options.cache_dir);
          write_text_atomic(cache_file, res.artifact.to_json());
          res.artifact_path = cache_file;
        }
        return res;
      }
    }

    // Feed the strongest failures back into the next round.
    std::vector<std::size_t> order(recs.size());
    for (std::size_t c = 0; c < order.size(); ++c) order[c] = c;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return recs[a].validity_rate > recs[b].validity_rate; });
    std::ostringstream fb;
    fb << base_prompt << "\nPrevious candidates were rejected by the checker:\n";
    for (std::size_t k = 0; k < std::min<std::size_t>(2, order.size()); ++k) {
      const auto& r = recs[order[k]];
      fb << "--- candidate " << r.candidate_id.substr(0, 12) << ", validity " << r.validity_rate << "\n";
      for (std::size_t d = 0; d < std::min<std::size_t>(3, r.diagnostics.size()); ++d)
        fb << "  " << r.diagnostics[d] << "\n";
    }
    prompt = fb.str();
  }
  return res;
}

}  // namespace urs
