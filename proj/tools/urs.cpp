// urs: command-line front end (generate, train, eval, oracle, synth).
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <json.hpp>

#include "urs/checkpoint.hpp"
#include "urs/instance_io.hpp"
#include "urs/io.hpp"
#include "urs/mask_synth.hpp"
#include "urs/oracle.hpp"
#include "urs/report.hpp"
#include "urs/training.hpp"

namespace {

namespace fs = std::filesystem;
using namespace urs;

enum Exit : int { kOk = 0, kUsage = 1, kDomain = 2, kIo = 3 };

struct GenerateArgs {
  std::string spec;
  int n = 10;
  int count = 1;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_generate(const GenerateArgs& a) {
  const ConstraintSpec spec = resolve_spec(a.spec, a.n);
  const auto ds = generate_dataset(spec, a.count, a.seed, a.out);
  std::cout << "wrote " << ds.files.size() << " instances and " << ds.manifest.string() << "\n";
  return kOk;
}

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> epochs;
  long long max_steps = 0;
  std::string init;
};

int cmd_train(const TrainArgs& a) {
  if (!fs::is_regular_file(a.config)) throw std::invalid_argument("config file not found: " + a.config);
  TrainConfig cfg = parse_train_config(read_text(a.config));
  if (a.seed) cfg.seed = *a.seed;
  if (!a.out.empty()) cfg.out_dir = a.out;
  if (a.epochs) cfg.epochs = *a.epochs;
  if (cfg.out_dir.empty()) cfg.out_dir = "runs/train";
  TrainHooks hooks;
  hooks.max_steps = a.max_steps;
  hooks.on_epoch = [](const EpochSummary& e, const PolicyParams<float>&) {
    std::printf("epoch %d  mean_reward %.6f  feasibility %.4f  %lld ms\n", e.epoch, e.mean_reward, e.feasibility,
                e.wall_ms);
    std::fflush(stdout);
  };
  TrainResult res = a.init.empty() ? train(cfg, hooks) : train(cfg, load_checkpoint(a.init), hooks);
  std::cout << "checkpoint: " << (fs::path(cfg.out_dir) / "checkpoint.ckpt").string() << "\n"
            << "metrics:    " << (fs::path(cfg.out_dir) / "metrics.csv").string() << "\n";
  return kOk;
}

struct EvalArgs {
  std::string data;
  std::string checkpoint;
  std::string augment = "on";
  std::string mode = "greedy";
  std::uint64_t seed = 0;
  std::string csv;
};

int cmd_eval(const EvalArgs& a) {
  const PolicyParams<float> params = load_checkpoint(a.checkpoint);
  EvalOptions opt;
  opt.augment = a.augment == "on";
  opt.mode = a.mode == "greedy" ? EvalMode::kGreedy : EvalMode::kSample;
  opt.seed = a.seed;
  const EvalReport rep = evaluate_dataset(a.data, params, opt);
  const fs::path csv = a.csv.empty() ? fs::path(a.data) / "eval.csv" : fs::path(a.csv);
  write_text_atomic(csv, eval_csv(rep));
  print_eval_table(rep, std::cout);
  std::cout << "csv: " << csv.string() << "\n";
  for (const auto& r : rep.rows)
    if (r.feasibility < 1.0) return kDomain;
  return kOk;
}

int cmd_oracle(const std::string& data) {
  const OracleSummary s = run_oracle(data);
  for (const auto& w : s.warnings) std::cerr << "warning: " << w << "\n";
  std::printf("%-12s %8s %14s\n", "variant", "solved", "mean optimum");
  for (const auto& r : s.rows) std::printf("%-12s %8d %14.6f\n", r.variant.c_str(), r.solved, r.mean_optimum);
  std::printf("skipped: %d\n", s.skipped);
  return kOk;
}

struct SynthArgs {
  std::string spec;
  std::string provider = "stub";
  std::string corpus;
  int rounds = 3;
  int candidates = 4;
  int timeout_ms = 2000;
  int n = 10;
  int instances = 8;
  int rollouts = 16;
  std::uint64_t seed = 0;
  std::string cache = ".urs-cache/masks";
};

int cmd_synth(const SynthArgs& a) {
  SynthesisTask task = make_synthesis_task(a.spec, a.n, a.instances, a.rollouts, a.seed);
  task.budget = {a.rounds, a.candidates};
  task.timeout_ms = a.timeout_ms;
  std::unique_ptr<Provider> provider;
  if (a.provider == "stub") {
    if (a.corpus.empty()) throw std::invalid_argument("--corpus is required with the stub provider");
    provider = std::make_unique<StubProvider>(StubProvider::from_directory(a.corpus));
  } else {
    provider = std::make_unique<LiveProvider>(LiveProviderConfig::from_environment());
    std::cout << "live provider: results are not reproducible\n";
  }
  SynthesisOptions opt;
  opt.cache_dir = a.cache;
  const SynthesisResult res = synthesize(task, *provider, opt);
  if (res.cache_hit) {
    std::cout << "cache hit: " << res.artifact_path->string() << " (0 provider calls)\n";
    return kOk;
  }
  for (const auto& d : res.provider_diagnostics) std::cerr << "provider: " << d << "\n";
  for (const auto& r : res.records) {
    std::printf("round %d  candidate %s  validity %.4f (%d/%d)\n", r.round, r.candidate_id.substr(0, 12).c_str(),
                r.validity_rate, r.feasible, r.rollouts);
    if (r.validity_rate < 1.0 && !r.diagnostics.empty()) std::printf("    %s\n", r.diagnostics.front().c_str());
  }
  std::printf("provider calls: %lld\n", provider->calls());
  if (res.artifact.accepted) {
    std::cout << "accepted: " << res.artifact_path->string() << "\n";
    return kOk;
  }
  std::printf("budget exhausted; best validity %.4f\n", res.artifact.validity_rate);
  return kDomain;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unified routing solver: data generation, training, evaluation, exact references and mask synthesis"};
  app.require_subcommand(1);

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Write a dataset of random instances");
  gen->add_option("--spec", ga.spec, "Variant name (e.g. cvrptw) or spec JSON file")->required();
  gen->add_option("--n", ga.n, "Customers per instance")->check(CLI::PositiveNumber);
  gen->add_option("--count", ga.count, "Number of instances")->check(CLI::NonNegativeNumber);
  gen->add_option("--seed", ga.seed, "Seed of the first instance");
  gen->add_option("--out", ga.out, "Output directory")->required();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a policy from a JSON config");
  tr->add_option("--config", ta.config, "Config JSON")->required();
  tr->add_option("--seed", ta.seed, "Override the config seed");
  tr->add_option("--out", ta.out, "Override the output directory");
  tr->add_option("--epochs", ta.epochs, "Override the epoch count")->check(CLI::PositiveNumber);
  tr->add_option("--max-steps", ta.max_steps, "Stop after this many optimizer steps");
  tr->add_option("--checkpoint", ta.init, "Continue from this checkpoint");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  ev->add_option("--data", ea.data, "Dataset directory")->required();
  ev->add_option("--checkpoint", ea.checkpoint, "Checkpoint file")->required();
  ev->add_option("--augment", ea.augment, "Instance augmentation")->check(CLI::IsMember({"on", "off"}));
  ev->add_option("--mode", ea.mode, "Decoding")->check(CLI::IsMember({"greedy", "sample"}));
  ev->add_option("--seed", ea.seed, "Seed for sampling and asymmetric augmentation");
  ev->add_option("--csv", ea.csv, "Report CSV path (default DATA/eval.csv)");

  std::string oracle_dir;
  auto* orc = app.add_subcommand("oracle", "Exact reference solutions for small instances");
  orc->add_option("--data", oracle_dir, "Dataset directory")->required();

  SynthArgs sa;
  auto* sy = app.add_subcommand("synth", "Synthesize and validate a mask generator");
  sy->add_option("--spec", sa.spec, "Variant name")->required();
  sy->add_option("--provider", sa.provider, "Completion provider")->check(CLI::IsMember({"stub", "live"}));
  sy->add_option("--corpus", sa.corpus, "Directory of canned completions for the stub provider");
  sy->add_option("--rounds", sa.rounds, "Refinement rounds")->check(CLI::PositiveNumber);
  sy->add_option("--candidates", sa.candidates, "Candidates per round")->check(CLI::PositiveNumber);
  sy->add_option("--timeout-ms", sa.timeout_ms, "Per-step sandbox timeout")->check(CLI::PositiveNumber);
  sy->add_option("--n", sa.n, "Customers per validation instance")->check(CLI::PositiveNumber);
  sy->add_option("--instances", sa.instances, "Validation instances")->check(CLI::PositiveNumber);
  sy->add_option("--rollouts", sa.rollouts, "Rollouts per validation instance")->check(CLI::PositiveNumber);
  sy->add_option("--seed", sa.seed, "Validation seed");
  sy->add_option("--cache", sa.cache, "Artifact cache directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_generate(ga);
    if (*tr) return cmd_train(ta);
    if (*ev) return cmd_eval(ea);
    if (*orc) return cmd_oracle(oracle_dir);
    if (*sy) return cmd_synth(sa);
  } catch (const TrainingError& e) {
    std::cerr << "error: " << e.what() << " (batch seed " << e.batch_seed() << ")\n";
    return kDomain;
  } catch (const OracleCapError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDomain;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const InstanceFormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDomain;
  }
  return kUsage;
}
