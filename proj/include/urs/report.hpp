#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "urs/policy.hpp"

namespace urs {

class UnknownVariantError : public std::invalid_argument {
 public:
  explicit UnknownVariantError(const std::string& name);
};

// A catalog name, or a JSON file {"families": [...], "params": {...}}.
ConstraintSpec resolve_spec(const std::string& name_or_file, int n_customers);

struct GeneratedDataset {
  std::vector<std::filesystem::path> files;
  std::filesystem::path manifest;
};

// Files {variant}_{n}_{seed+i}.json plus manifest.json with content hashes.
GeneratedDataset generate_dataset(const ConstraintSpec& spec, int count, std::uint64_t seed,
                                  const std::filesystem::path& out_dir);

// Instance files of a dataset directory, sorted; manifest and references excluded.
std::vector<std::filesystem::path> dataset_files(const std::filesystem::path& dir);

std::filesystem::path reference_path(const std::filesystem::path& instance_file);

struct OracleSummaryRow {
  std::string variant;
  int solved = 0;
  double mean_optimum = 0.0;
};

struct OracleSummary {
  std::vector<OracleSummaryRow> rows;
  int skipped = 0;
  std::vector<std::string> warnings;
};

// Exact references under dir/references/. Instances above the exact cap are
// skipped with a warning. Reference files leave out timing so reruns are
// byte-identical.
OracleSummary run_oracle(const std::filesystem::path& dir);

enum class EvalMode { kGreedy, kSample };

struct EvalOptions {
  bool augment = true;
  EvalMode mode = EvalMode::kGreedy;
  std::uint64_t seed = 0;
  int asymmetric_copies = 128;
  // Compute exact references on the fly when no reference file exists.
  bool exact_when_small = true;
};

struct EvalRow {
  std::string variant;
  double mean_objective = 0.0;
  std::optional<double> mean_gap;  // gap-to-exact, percent
  int gap_instances = 0;
  long long wall_ms = 0;
  double feasibility = 0.0;
  int instances = 0;
  int augmentation = 1;
};

struct EvalReport {
  std::vector<EvalRow> rows;
};

struct InstanceEval {
  std::vector<int> best_sequence;
  double objective = 0.0;
  bool feasible = false;
  int augmentation = 1;
};

// Multi-start rollouts over every augmentation; the best objective on the
// original instance is kept.
InstanceEval evaluate_instance(const PolicyParams<float>& params, const UnifiedInstance& instance,
                               const EvalOptions& options);

EvalReport evaluate_dataset(const std::filesystem::path& dir, const PolicyParams<float>& params,
                            const EvalOptions& options);

inline constexpr const char* kEvalHeader = "variant,instances,objective,gap_to_exact_pct,time_ms,feasibility,augmentation";
std::string eval_csv(const EvalReport& report);
// Same cells as the CSV, aligned for a terminal.
void print_eval_table(const EvalReport& report, std::ostream& out);

// Set-X style CVRPLIB file as a unit-square CVRP instance; scale receives
// the factor that maps objectives back to file units.
UnifiedInstance read_cvrplib(const std::filesystem::path& path, double* scale = nullptr);

}  // namespace urs
