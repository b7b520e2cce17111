#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "urs/feasibility.hpp"

namespace urs {

inline constexpr int kTemplateVersion = 1;
inline constexpr int kWireVersion = 1;

struct SynthesisBudget {
  int rounds = 3;
  int candidates_per_round = 4;
};

struct SynthesisTask {
  std::string constraint_description;
  std::string template_text;
  ConstraintSpec spec;
  std::vector<UnifiedInstance> validation_instances;
  int rollouts_per_instance = 16;
  SynthesisBudget budget;
  int timeout_ms = 2000;
  // Intersect candidate masks with the universal visit-once rule. Off for
  // tasks whose own description is that rule.
  bool compose_visit_once = true;
  std::uint64_t seed = 0;
};

// Description, template and validation set for a catalog variant.
SynthesisTask make_synthesis_task(const std::string& variant, int n_customers = 10, int instances = 8,
                                  int rollouts = 16, std::uint64_t seed = 0);
std::string constraint_description(const ConstraintSpec& spec);
std::string code_template();

std::string build_prompt(const SynthesisTask& task);

struct CandidateProgram {
  std::string source;
  std::string id;  // sha256 of source

  static CandidateProgram from_source(std::string source);
};

// Code block of a completion, or nullopt when it holds no mask function.
std::optional<std::string> extract_candidate(const std::string& completion);

class Provider {
 public:
  virtual ~Provider() = default;
  // One completion per call; throws on transport failure.
  virtual std::string complete(const std::string& prompt) = 0;
  virtual bool deterministic() const = 0;
  long long calls() const { return calls_; }

 protected:
  long long calls_ = 0;
};

// Cycles through a fixed corpus of completions.
class StubProvider : public Provider {
 public:
  explicit StubProvider(std::vector<std::string> corpus);
  static StubProvider from_directory(const std::filesystem::path& dir);
  std::string complete(const std::string& prompt) override;
  bool deterministic() const override { return true; }

 private:
  std::vector<std::string> corpus_;
  std::size_t next_ = 0;
};

struct LiveProviderConfig {
  std::string url;  // http(s)://host[:port]/path
  std::string api_key;
  std::string model = "default";
  int max_tokens = 2048;
  double temperature = 0.7;
  int timeout_ms = 60000;
  int attempts = 3;
  int backoff_ms = 500;

  // URS_PROVIDER_URL, URS_PROVIDER_MODEL, and the key from the variable
  // named by URS_PROVIDER_KEY_VAR (default URS_API_KEY).
  static LiveProviderConfig from_environment();
};

class LiveProvider : public Provider {
 public:
  explicit LiveProvider(LiveProviderConfig config);
  std::string complete(const std::string& prompt) override;
  bool deterministic() const override { return false; }

 private:
  LiveProviderConfig cfg_;
};

struct CandidateBatch {
  std::vector<CandidateProgram> candidates;
  std::vector<std::string> diagnostics;
};

CandidateBatch request_candidates(Provider& provider, const std::string& prompt, int k);

struct SandboxConfig {
  std::string interpreter = "python3";
  int timeout_ms = 2000;
  int memory_mb = 512;
  int cpu_seconds = 60;
};

// One candidate process speaking the wire protocol. Restarted after a
// crash or timeout.
class Sandbox {
 public:
  Sandbox(const CandidateProgram& candidate, SandboxConfig config);
  ~Sandbox();
  Sandbox(const Sandbox&) = delete;
  Sandbox& operator=(const Sandbox&) = delete;

  // Sends one request line and waits for the reply; nullopt on crash,
  // timeout or malformed output, with the reason in last_error().
  std::optional<std::vector<std::uint8_t>> query(const std::string& request_line, int n);
  const std::string& last_error() const { return error_; }
  void stop();

 private:
  bool start();

  std::filesystem::path dir_;
  SandboxConfig cfg_;
  int pid_ = -1;
  int in_fd_ = -1;
  int out_fd_ = -1;
  std::string buffer_;
  std::string error_;
};

std::string wire_request(int step, const StepState& state, const UnifiedInstance& instance, bool include_instance);

struct ValidationRecord {
  std::string candidate_id;
  int round = 0;
  double validity_rate = 0.0;
  int rollouts = 0;
  int feasible = 0;
  std::vector<std::string> diagnostics;  // first few failures
};

ValidationRecord validate_candidate(const CandidateProgram& candidate, const SynthesisTask& task,
                                    const SandboxConfig& sandbox = {});

struct MaskGeneratorArtifact {
  CandidateProgram candidate;
  double validity_rate = 0.0;
  bool accepted = false;
  std::string cache_key;
  std::string variant;
  int template_version = kTemplateVersion;

  std::string to_json() const;
  static MaskGeneratorArtifact from_json(const std::string& text);
};

std::string synthesis_cache_key(const ConstraintSpec& spec, int template_version = kTemplateVersion);

struct SynthesisResult {
  MaskGeneratorArtifact artifact;
  bool cache_hit = false;
  std::optional<std::filesystem::path> artifact_path;
  std::vector<ValidationRecord> records;
  std::vector<std::string> provider_diagnostics;
};

struct SynthesisOptions {
  std::filesystem::path cache_dir;  // empty disables caching
  SandboxConfig sandbox;
};

SynthesisResult synthesize(const SynthesisTask& task, Provider& provider, const SynthesisOptions& options = {});

}  // namespace urs
