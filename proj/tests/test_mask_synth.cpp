#include <doctest.h>
#include <httplib.h>
#include <unistd.h>

#include <json.hpp>
#include <thread>

#include "urs/io.hpp"
#include "urs/mask_synth.hpp"

using namespace urs;

namespace {

const std::filesystem::path kCandidates = std::filesystem::path(URS_DATA_DIR) / "candidates";

std::string candidate_source(const std::string& rel) { return read_text(kCandidates / rel); }

SynthesisTask small_task(const std::string& variant, int n = 8, int instances = 4, int rollouts = 4) {
  SynthesisTask t = make_synthesis_task(variant, n, instances, rollouts, 3);
  t.timeout_ms = 1500;
  return t;
}

std::filesystem::path fresh_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / ("urs_synth_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  return p;
}

// Local HTTP endpoint standing in for a completion service.
class FakeEndpoint {
 public:
  explicit FakeEndpoint(httplib::Server::Handler handler) {
    server_.Post("/v1/complete", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeEndpoint() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/complete"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST_SUITE("mask_synth") {
  TEST_CASE("prompt assembly") {
    const auto t = small_task("tsp");
    const std::string p = build_prompt(t);
    CHECK(p.find("mask visited nodes") != std::string::npos);
    CHECK(p.find(code_template()) != std::string::npos);
    CHECK(p.find("True = selectable, False = masked") != std::string::npos);
    CHECK(p == build_prompt(small_task("tsp")));

    const std::string cvrp = build_prompt(small_task("cvrptw"));
    CHECK(cvrp.find("Capacity") != std::string::npos);
    CHECK(cvrp.find("Time windows") != std::string::npos);

    SynthesisTask empty = t;
    empty.constraint_description.clear();
    CHECK_THROWS_AS(build_prompt(empty), std::invalid_argument);
  }

  TEST_CASE("candidate extraction") {
    const std::string body = "def generate_mask(state, num_nodes, instance):\n    return [True] * num_nodes\n";
    CHECK(extract_candidate("Here you go:\n```python\n" + body + "```\nDone.") == body);
    CHECK(extract_candidate(body) == body);
    CHECK_FALSE(extract_candidate("I can not help with that.").has_value());
    CHECK_FALSE(extract_candidate("```python\nprint('hi')\n```").has_value());
  }

  TEST_CASE("stub provider contract") {
    const std::string a = candidate_source("broken/never_mask.py"), b = candidate_source("broken/crash.py");
    StubProvider stub({a, b});
    const auto got = request_candidates(stub, "prompt", 2);
    REQUIRE(got.candidates.size() == 2);
    CHECK(got.candidates[0].source == a);
    CHECK(got.candidates[1].source == b);
    CHECK(got.candidates[0].id == CandidateProgram::from_source(a).id);
    CHECK(request_candidates(stub, "prompt", 0).candidates.empty());

    StubProvider junk({"no code here"});
    const auto dropped = request_candidates(junk, "prompt", 2);
    CHECK(dropped.candidates.empty());
    CHECK(dropped.diagnostics.size() == 2);
  }

  TEST_CASE("live provider over a local endpoint") {
    const std::string body = candidate_source("reference/tsp_visited.py");
    std::string seen_auth, seen_prompt;
    FakeEndpoint ok([&](const httplib::Request& req, httplib::Response& res) {
      seen_auth = req.get_header_value("Authorization");
      seen_prompt = nlohmann::json::parse(req.body).at("prompt");
      res.set_content(nlohmann::json{{"choices", {{{"text", "```python\n" + body + "```"}}}}}.dump(),
                      "application/json");
    });
    LiveProviderConfig cfg;
    cfg.url = ok.url();
    cfg.api_key = "secret";
    LiveProvider live(cfg);
    const auto got = request_candidates(live, "the prompt", 1);
    REQUIRE(got.candidates.size() == 1);
    CHECK(got.candidates[0].source == body);
    CHECK(seen_auth == "Bearer secret");
    CHECK(seen_prompt == "the prompt");

    FakeEndpoint slow([](const httplib::Request&, httplib::Response& res) {
      std::this_thread::sleep_for(std::chrono::milliseconds(400));
      res.set_content("{}", "application/json");
    });
    cfg.url = slow.url();
    cfg.timeout_ms = 100;
    cfg.attempts = 2;
    cfg.backoff_ms = 10;
    LiveProvider timing_out(cfg);
    const auto none = request_candidates(timing_out, "p", 2);
    CHECK(none.candidates.empty());
    REQUIRE(none.diagnostics.size() == 2);
    CHECK(none.diagnostics[0].find("2 attempts") != std::string::npos);
    CHECK(timing_out.calls() == 2);
  }

  TEST_CASE("provider configuration from the environment") {
    ::setenv("URS_PROVIDER_URL", "http://127.0.0.1:9/x", 1);
    ::setenv("URS_PROVIDER_KEY_VAR", "URS_TEST_KEY", 1);
    ::setenv("URS_TEST_KEY", "k123", 1);
    const auto cfg = LiveProviderConfig::from_environment();
    CHECK(cfg.url == "http://127.0.0.1:9/x");
    CHECK(cfg.api_key == "k123");
    ::unsetenv("URS_PROVIDER_URL");
    ::unsetenv("URS_PROVIDER_KEY_VAR");
    ::unsetenv("URS_TEST_KEY");
    CHECK_THROWS_AS(LiveProvider(LiveProviderConfig::from_environment()), std::invalid_argument);
  }

  TEST_CASE("wire protocol request") {
    const auto in = generate_instance(make_spec("cvrp", 5), 2);
    RoutingEnv env(in);
    StepState s = env.initial_state(0, 0);
    env.advance(s, 3);
    const auto j = nlohmann::json::parse(wire_request(4, s, in, true));
    CHECK(j.at("step") == 4);
    CHECK(j.at("n") == in.size());
    CHECK(j.at("state").at("current") == 3);
    CHECK(j.at("state").at("visited") == nlohmann::json::array({0, 3}));
    CHECK(j.at("state").at("phase") == "linehaul");
    CHECK(j.at("state").at("load").get<double>() == doctest::Approx(1.0 - in.nodes[3].demand()));
    CHECK(j.at("instance").at("nodes").size() == static_cast<std::size_t>(in.size()));
    CHECK_FALSE(nlohmann::json::parse(wire_request(5, s, in, false)).contains("instance"));
  }

  TEST_CASE("sandbox isolates failures") {
    const auto in = generate_instance(make_spec("tsp", 4), 1);
    const std::string req = wire_request(0, RoutingEnv(in).initial_state(-1, 0), in, true);

    Sandbox good(CandidateProgram::from_source(candidate_source("reference/tsp_visited.py")), {});
    auto m = good.query(req, 4);
    REQUIRE(m.has_value());
    CHECK(*m == std::vector<std::uint8_t>{0, 1, 1, 1});

    Sandbox crash(CandidateProgram::from_source(candidate_source("broken/crash.py")), {});
    CHECK_FALSE(crash.query(req, 4).has_value());
    CHECK(crash.last_error().find("RuntimeError") != std::string::npos);
    CHECK_FALSE(crash.query(req, 4).has_value());  // restarts and fails again

    SandboxConfig quick;
    quick.timeout_ms = 150;
    Sandbox loop(CandidateProgram::from_source(candidate_source("broken/infinite_loop.py")), quick);
    CHECK_FALSE(loop.query(req, 4).has_value());
    CHECK(loop.last_error().find("timeout") != std::string::npos);

    Sandbox wrong_len(CandidateProgram::from_source(candidate_source("reference/tsp_visited.py")), {});
    CHECK_FALSE(wrong_len.query(req, 5).has_value());
    CHECK(wrong_len.last_error().find("malformed") != std::string::npos);

    Sandbox env_probe(CandidateProgram::from_source(
                          "import os\n"
                          "def generate_mask(state, num_nodes, instance):\n"
                          "    return [os.environ.get('URS_API_KEY') is None] * num_nodes\n"),
                      {});
    ::setenv("URS_API_KEY", "do-not-leak", 1);
    auto probe = env_probe.query(req, 4);
    ::unsetenv("URS_API_KEY");
    REQUIRE(probe.has_value());
    CHECK((*probe)[0] == 1);
  }

  TEST_CASE("validation of reference and broken candidates") {
    const auto tsp = small_task("tsp");
    const auto ref = validate_candidate(CandidateProgram::from_source(candidate_source("reference/tsp_visited.py")), tsp);
    CHECK(ref.validity_rate == 1.0);
    CHECK(ref.rollouts == 16);

    const auto never = validate_candidate(CandidateProgram::from_source(candidate_source("broken/never_mask.py")), tsp);
    CHECK(never.validity_rate == 0.0);
    REQUIRE_FALSE(never.diagnostics.empty());

    const auto crash = validate_candidate(CandidateProgram::from_source(candidate_source("broken/crash.py")), tsp);
    CHECK(crash.validity_rate == 0.0);
    CHECK(crash.diagnostics[0].find("RuntimeError") != std::string::npos);

    SynthesisTask quick = small_task("tsp", 6, 2, 2);
    quick.timeout_ms = 150;
    const auto loop =
        validate_candidate(CandidateProgram::from_source(candidate_source("broken/infinite_loop.py")), quick);
    CHECK(loop.validity_rate == 0.0);
    REQUIRE(loop.diagnostics.size() == 4);
    for (const auto& d : loop.diagnostics) CHECK(d.find("timeout") != std::string::npos);

    const auto cvrp = small_task("cvrp", 10, 4, 8);
    CHECK(validate_candidate(CandidateProgram::from_source(candidate_source("reference/cvrp_capacity.py")), cvrp)
              .validity_rate == 1.0);
    // Visit-once alone does not make CVRP routes feasible.
    CHECK(validate_candidate(CandidateProgram::from_source(candidate_source("broken/never_mask.py")), cvrp)
              .validity_rate < 1.0);
  }

  TEST_CASE("synthesis accepts, caches and reuses") {
    const auto cache = fresh_dir("cache");
    SynthesisOptions opt;
    opt.cache_dir = cache;
    const auto task = small_task("tsp");
    StubProvider stub({candidate_source("reference/tsp_visited.py"), candidate_source("broken/crash.py")});
    const auto first = synthesize(task, stub, opt);
    CHECK(first.artifact.accepted);
    CHECK(first.artifact.validity_rate == 1.0);
    CHECK_FALSE(first.cache_hit);
    REQUIRE(first.artifact_path.has_value());
    CHECK(std::filesystem::exists(*first.artifact_path));
    CHECK(stub.calls() == task.budget.candidates_per_round);

    StubProvider second_stub({candidate_source("broken/crash.py")});
    const auto again = synthesize(small_task("tsp", 12), second_stub, opt);
    CHECK(again.cache_hit);
    CHECK(second_stub.calls() == 0);
    CHECK(again.artifact.to_json() == read_text(*first.artifact_path));
    CHECK(again.artifact.candidate.id == first.artifact.candidate.id);

    // Replay on fresh instances with the visit-once rule composed in.
    SynthesisTask replay = make_synthesis_task("tsp", 10, 100, 1, 777);
    replay.compose_visit_once = true;
    CHECK(validate_candidate(again.artifact.candidate, replay).validity_rate == 1.0);
    std::filesystem::remove_all(cache);
  }

  TEST_CASE("exhausted budget returns the best candidate unaccepted") {
    SynthesisTask task = small_task("tsp", 6, 2, 2);
    task.timeout_ms = 150;
    task.budget = {2, 3};
    StubProvider stub({candidate_source("broken/crash.py"), candidate_source("broken/infinite_loop.py"),
                       candidate_source("broken/never_mask.py")});
    const auto res = synthesize(task, stub);
    CHECK_FALSE(res.artifact.accepted);
    CHECK(res.records.size() == 6);
    CHECK(res.records[3].round == 2);
    CHECK(res.artifact.validity_rate == 0.0);
    CHECK(stub.calls() == 6);
    CHECK_FALSE(res.artifact_path.has_value());
  }

  TEST_CASE("cache keys follow families and template version only") {
    CHECK(synthesis_cache_key(make_spec("cvrp", 10)) == synthesis_cache_key(make_spec("cvrp", 50)));
    CHECK(synthesis_cache_key(make_spec("cvrp", 10)) != synthesis_cache_key(make_spec("cvrptw", 10)));
    CHECK(synthesis_cache_key(make_spec("cvrp", 10), 1) != synthesis_cache_key(make_spec("cvrp", 10), 2));
    MaskGeneratorArtifact a;
    a.candidate = CandidateProgram::from_source("def generate_mask(s, n, i):\n    return [True] * n\n");
    a.cache_key = "k";
    a.variant = "tsp";
    a.validity_rate = 0.5;
    CHECK(MaskGeneratorArtifact::from_json(a.to_json()).to_json() == a.to_json());
    std::string tampered = a.to_json();
    tampered.replace(tampered.find("[True]"), 6, "[False]");
    CHECK_THROWS(MaskGeneratorArtifact::from_json(tampered));
  }
}
