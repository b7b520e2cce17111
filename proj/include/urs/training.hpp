#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "urs/policy.hpp"

namespace urs {

struct TrainConfig {
  std::vector<std::string> tasks = seen_variants();
  int n_customers = 100;
  PolicyConfig policy;
  int batch_size = 128;
  int batches_per_epoch = 2000;
  int epochs = 500;
  double lr = 1e-4;
  int lr_decay_epoch = 451;
  double lr_decay_factor = 0.1;
  double weight_decay = 1e-6;
  double grad_clip = 1.0;
  std::uint64_t seed = 1;
  std::string out_dir;  // checkpoint + metrics; empty keeps everything in memory
};

TrainConfig paper_profile();
// Small sizes for a single CPU; optimizer and schedule keep the full-scale defaults.
TrainConfig desk_profile();

// Flat JSON object whose keys mirror TrainConfig (unknown keys are rejected).
TrainConfig parse_train_config(const std::string& json_text, TrainConfig base = desk_profile());
std::string train_config_json(const TrainConfig& config);

ConstraintSpec sample_task(Rng& rng, const std::vector<ConstraintSpec>& tasks);

double lr_at(int epoch, const TrainConfig& config);

// Shared-baseline REINFORCE over one batch. rewards[b][k] and log_probs[b][k]
// belong to trajectory k of instance b. Infeasible trajectories are dropped
// from their instance's baseline and from the loss; instances left empty are
// skipped and counted.
struct ReinforceTerms {
  std::vector<std::vector<double>> advantages;
  // d loss / d log_probs[b][k]; zero for dropped trajectories.
  std::vector<std::vector<double>> weights;
  double loss = 0.0;
  int used_instances = 0;
  int excluded_instances = 0;
  int excluded_trajectories = 0;
};
ReinforceTerms reinforce_loss(const std::vector<std::vector<double>>& rewards,
                              const std::vector<std::vector<double>>& log_probs,
                              const std::vector<std::vector<std::uint8_t>>* infeasible = nullptr);

// Loss value and parameter gradient for a batch of same-task instances.
// forced, when given, replays fixed sequences instead of sampling.
template <class T>
struct BatchGradient {
  std::vector<Mat<T>> grads;
  std::vector<std::vector<Trajectory>> trajectories;
  ReinforceTerms terms;
  double mean_reward = 0.0;
  double feasibility = 0.0;
};
template <class T>
BatchGradient<T> policy_gradient(const PolicyParams<T>& params, const std::vector<UnifiedInstance>& batch,
                                 const std::vector<std::uint64_t>& rollout_seeds,
                                 const std::vector<std::vector<std::vector<int>>>* forced = nullptr);

class AdamW {
 public:
  AdamW(const std::vector<Mat<float>>& shapes, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8);
  void step(std::vector<Mat<float>>& params, const std::vector<Mat<float>>& grads, double lr);
  long long steps() const { return t_; }

 private:
  double wd_, b1_, b2_, eps_;
  long long t_ = 0;
  std::vector<Mat<float>> m_, v_;
};

// Scales grads in place so their global L2 norm is at most max_norm; returns
// the norm before clipping.
double clip_global_norm(std::vector<Mat<float>>& grads, double max_norm);

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::uint64_t batch_seed)
      : std::runtime_error(what), batch_seed_(batch_seed) {}
  std::uint64_t batch_seed() const { return batch_seed_; }

 private:
  std::uint64_t batch_seed_;
};

struct StepMetrics {
  int epoch = 0;
  long long step = 0;
  std::string task;
  double mean_reward = 0.0;
  double loss = 0.0;
  double lr = 0.0;
  long long wall_ms = 0;
  double feasibility = 1.0;
};

inline constexpr const char* kMetricsHeader = "epoch,step,task,mean_reward,loss,lr,wall_ms";
std::string metrics_row(const StepMetrics& m);

struct EpochSummary {
  int epoch = 0;
  double mean_reward = 0.0;
  double feasibility = 1.0;
  long long wall_ms = 0;
};

struct TrainHooks {
  std::function<void(const StepMetrics&)> on_step;
  std::function<void(const EpochSummary&, const PolicyParams<float>&)> on_epoch;
  // Stop after this many optimizer steps in total (0 = run every epoch).
  long long max_steps = 0;
};

struct TrainResult {
  PolicyParams<float> params;
  std::vector<StepMetrics> metrics;
  std::vector<EpochSummary> epochs;
};

// Seed of instance b at global step s, a pure function of (seed, step, b).
std::uint64_t instance_seed(std::uint64_t seed, long long step, int b);

TrainResult train(const TrainConfig& config, const TrainHooks& hooks = {});
// Continue from given parameters (fresh optimizer state).
TrainResult train(const TrainConfig& config, PolicyParams<float> init, const TrainHooks& hooks = {});

}  // namespace urs
