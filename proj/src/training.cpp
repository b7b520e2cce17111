#include "urs/training.hpp"

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <json.hpp>

#include "urs/checkpoint.hpp"
#include "urs/io.hpp"
#include "urs/rng.hpp"

namespace urs {

TrainConfig paper_profile() { return TrainConfig{}; }

TrainConfig desk_profile() {
  TrainConfig c;
  c.n_customers = 10;
  c.policy.d = 32;
  c.policy.layers = 3;
  c.batch_size = 64;
  c.batches_per_epoch = 100;
  c.epochs = 20;
  return c;
}

TrainConfig parse_train_config(const std::string& text, TrainConfig c) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config must be a flat JSON object");
  if (j.contains("profile")) {
    const std::string p = j["profile"];
    if (p == "paper") c = paper_profile();
    else if (p == "desk") c = desk_profile();
    else throw std::invalid_argument("unknown profile " + p);
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const auto& v = it.value();
    try {
      if (k == "profile") continue;
      if (k == "tasks") {
        c.tasks.clear();
        if (v.is_string()) {
          std::string s = v;
          std::size_t pos = 0;
          while (pos <= s.size()) {
            const std::size_t comma = s.find(',', pos);
            std::string name = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            name.erase(0, name.find_first_not_of(" \t"));
            name.erase(name.find_last_not_of(" \t") + 1);
            if (!name.empty()) c.tasks.push_back(name);
            if (comma == std::string::npos) break;
            pos = comma + 1;
          }
        } else {
          for (const auto& t : v) c.tasks.push_back(t.get<std::string>());
        }
      } else if (k == "n_customers") c.n_customers = v;
      else if (k == "d") c.policy.d = v;
      else if (k == "layers") c.policy.layers = v;
      else if (k == "hyper_hidden") c.policy.hyper_hidden = v;
      else if (k == "ff_hidden") c.policy.ff_hidden = v;
      else if (k == "use_xi") c.policy.use_xi = v;
      else if (k == "use_context") c.policy.use_context = v;
      else if (k == "prior_in") c.policy.prior_in = v;
      else if (k == "prior_rel") c.policy.prior_rel = v;
      else if (k == "batch_size") c.batch_size = v;
      else if (k == "batches_per_epoch") c.batches_per_epoch = v;
      else if (k == "epochs") c.epochs = v;
      else if (k == "lr") c.lr = v;
      else if (k == "lr_decay_epoch") c.lr_decay_epoch = v;
      else if (k == "lr_decay_factor") c.lr_decay_factor = v;
      else if (k == "weight_decay") c.weight_decay = v;
      else if (k == "grad_clip") c.grad_clip = v;
      else if (k == "seed") c.seed = v;
      else if (k == "out_dir") c.out_dir = v;
      else throw std::invalid_argument("unknown config key " + k);
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("bad value for " + k + ": " + e.what());
    }
  }
  for (const auto& t : c.tasks) make_spec(t, c.n_customers);  // validates names
  if (c.tasks.empty()) throw std::invalid_argument("config: task list is empty");
  if (c.batch_size < 1 || c.batches_per_epoch < 1 || c.epochs < 1)
    throw std::invalid_argument("config: batch and epoch counts must be positive");
  return c;
}

std::string train_config_json(const TrainConfig& c) {
  nlohmann::json j = {{"tasks", c.tasks},
                      {"n_customers", c.n_customers},
                      {"d", c.policy.d},
                      {"layers", c.policy.layers},
                      {"hyper_hidden", c.policy.hyper_hidden},
                      {"ff_hidden", c.policy.ff_hidden},
                      {"use_xi", c.policy.use_xi},
                      {"use_context", c.policy.use_context},
                      {"prior_in", c.policy.prior_in},
                      {"prior_rel", c.policy.prior_rel},
                      {"batch_size", c.batch_size},
                      {"batches_per_epoch", c.batches_per_epoch},
                      {"epochs", c.epochs},
                      {"lr", c.lr},
                      {"lr_decay_epoch", c.lr_decay_epoch},
                      {"lr_decay_factor", c.lr_decay_factor},
                      {"weight_decay", c.weight_decay},
                      {"grad_clip", c.grad_clip},
                      {"seed", c.seed},
                      {"out_dir", c.out_dir}};
  return j.dump(2);
}

ConstraintSpec sample_task(Rng& rng, const std::vector<ConstraintSpec>& tasks) {
  if (tasks.empty()) throw std::invalid_argument("sample_task: empty task set");
  return tasks[rng.index(tasks.size())];
}

double lr_at(int epoch, const TrainConfig& c) {
  if (epoch < 1) throw std::invalid_argument("lr_at: epochs are 1-based");
  return epoch >= c.lr_decay_epoch ? c.lr * c.lr_decay_factor : c.lr;
}

ReinforceTerms reinforce_loss(const std::vector<std::vector<double>>& rewards,
                              const std::vector<std::vector<double>>& log_probs,
                              const std::vector<std::vector<std::uint8_t>>* infeasible) {
  if (rewards.size() != log_probs.size() || (infeasible && infeasible->size() != rewards.size()))
    throw std::invalid_argument("reinforce_loss: batch shapes disagree");
  ReinforceTerms out;
  const std::size_t B = rewards.size();
  out.advantages.resize(B);
  out.weights.resize(B);
  std::vector<double> inst_term(B, 0.0);
  std::vector<int> valid_count(B, 0);
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t M = rewards[b].size();
    if (log_probs[b].size() != M || (infeasible && (*infeasible)[b].size() != M))
      throw std::invalid_argument("reinforce_loss: trajectory counts disagree");
    out.advantages[b].assign(M, 0.0);
    out.weights[b].assign(M, 0.0);
    auto bad = [&](std::size_t k) { return infeasible && (*infeasible)[b][k]; };
    double sum = 0.0;
    for (std::size_t k = 0; k < M; ++k) {
      if (bad(k)) {
        ++out.excluded_trajectories;
        continue;
      }
      sum += rewards[b][k];
      ++valid_count[b];
    }
    if (valid_count[b] == 0) {
      ++out.excluded_instances;
      continue;
    }
    ++out.used_instances;
    const double mean = sum / valid_count[b];
    for (std::size_t k = 0; k < M; ++k) {
      if (bad(k)) continue;
      out.advantages[b][k] = rewards[b][k] - mean;
      inst_term[b] += out.advantages[b][k] * log_probs[b][k];
    }
  }
  if (out.used_instances == 0) return out;
  for (std::size_t b = 0; b < B; ++b) {
    if (valid_count[b] == 0) continue;
    const double scale = 1.0 / (static_cast<double>(valid_count[b]) * out.used_instances);
    out.loss -= inst_term[b] * scale;
    for (std::size_t k = 0; k < out.advantages[b].size(); ++k) out.weights[b][k] = -out.advantages[b][k] * scale;
  }
  return out;
}

template <class T>
BatchGradient<T> policy_gradient(const PolicyParams<T>& params, const std::vector<UnifiedInstance>& batch,
                                 const std::vector<std::uint64_t>& rollout_seeds,
                                 const std::vector<std::vector<std::vector<int>>>* forced) {
  if (batch.empty()) throw std::invalid_argument("policy_gradient: empty batch");
  if (rollout_seeds.size() != batch.size() || (forced && forced->size() != batch.size()))
    throw std::invalid_argument("policy_gradient: one seed (and forced set) per instance");
  const Lambda lam = derive_signature(batch[0]).lambda;
  for (const auto& in : batch)
    if (derive_signature(in).lambda != lam) throw std::invalid_argument("policy_gradient: batch mixes problem types");

  BatchGradient<T> out;
  out.grads = params.zeros();
  Conditioning<T> cond(params, lam, &out.grads);
  const int B = static_cast<int>(batch.size());
  const int threads = std::max(1, std::min(omp_get_max_threads(), B));
  std::vector<std::vector<Mat<T>>> tgrads(threads);
  std::vector<std::vector<Mat<T>>> tcgrads(threads);
  out.trajectories.resize(B);
  std::vector<std::exception_ptr> errors(threads);

#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (int b = 0; b < B; ++b) {
    const int tid = omp_get_thread_num();
    try {
      if (tgrads[tid].empty()) {
        tgrads[tid] = params.zeros();
        tcgrads[tid] = cond.zero_output_grads();
      }
      InstanceGraph<T> g(params, cond, batch[b], true, &tgrads[tid], &tcgrads[tid]);
      Rng rng(rollout_seeds[b]);
      const auto starts = g.env().default_starts();
      auto trajs = forced ? g.rollout(DecodeMode::kForced, starts, nullptr, &(*forced)[b])
                          : g.rollout(DecodeMode::kSample, starts, &rng);
      std::vector<double> r, lp;
      std::vector<std::uint8_t> bad;
      for (const auto& t : trajs) {
        r.push_back(t.reward);
        lp.push_back(t.log_prob_sum);
        bad.push_back(t.infeasible);
      }
      const std::vector<std::vector<std::uint8_t>> bad_one{bad};
      const auto one = reinforce_loss({r}, {lp}, &bad_one);
      if (one.used_instances) g.backward(one.weights[0]);
      out.trajectories[b] = std::move(trajs);
    } catch (...) {
      if (!errors[tid]) errors[tid] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<std::vector<double>> rewards(B), lps(B);
  std::vector<std::vector<std::uint8_t>> bad(B);
  double reward_sum = 0.0;
  long long total = 0, feasible = 0;
  for (int b = 0; b < B; ++b)
    for (const auto& t : out.trajectories[b]) {
      rewards[b].push_back(t.reward);
      lps[b].push_back(t.log_prob_sum);
      bad[b].push_back(t.infeasible);
      ++total;
      if (!t.infeasible) {
        ++feasible;
        reward_sum += t.reward;
      }
    }
  out.terms = reinforce_loss(rewards, lps, &bad);
  out.mean_reward = feasible ? reward_sum / feasible : 0.0;
  out.feasibility = total ? static_cast<double>(feasible) / total : 0.0;

  auto cg = cond.zero_output_grads();
  for (int t = 0; t < threads; ++t) {
    if (tgrads[t].empty()) continue;
    for (std::size_t i = 0; i < out.grads.size(); ++i)
      for (std::size_t k = 0; k < out.grads[i].size(); ++k) out.grads[i].data[k] += tgrads[t][i].data[k];
    for (std::size_t i = 0; i < cg.size(); ++i)
      for (std::size_t k = 0; k < cg[i].size(); ++k) cg[i].data[k] += tcgrads[t][i].data[k];
  }
  cond.backward(cg);
  if (out.terms.used_instances > 0) {
    const T s = T(1) / static_cast<T>(out.terms.used_instances);
    for (auto& g : out.grads)
      for (T& x : g.data) x *= s;
  }
  return out;
}

template BatchGradient<float> policy_gradient<float>(const PolicyParams<float>&, const std::vector<UnifiedInstance>&,
                                                     const std::vector<std::uint64_t>&,
                                                     const std::vector<std::vector<std::vector<int>>>*);
template BatchGradient<double> policy_gradient<double>(const PolicyParams<double>&,
                                                       const std::vector<UnifiedInstance>&,
                                                       const std::vector<std::uint64_t>&,
                                                       const std::vector<std::vector<std::vector<int>>>*);

AdamW::AdamW(const std::vector<Mat<float>>& shapes, double wd, double b1, double b2, double eps)
    : wd_(wd), b1_(b1), b2_(b2), eps_(eps) {
  for (const auto& s : shapes) {
    m_.emplace_back(s.rows, s.cols);
    v_.emplace_back(s.rows, s.cols);
  }
}

void AdamW::step(std::vector<Mat<float>>& params, const std::vector<Mat<float>>& grads, double lr) {
  if (params.size() != m_.size() || grads.size() != m_.size()) throw std::invalid_argument("AdamW: shape mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  const double step = lr / c1;
  const double decay = 1.0 - lr * wd_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    float* p = params[i].data.data();
    const float* g = grads[i].data.data();
    float* m = m_[i].data.data();
    float* v = v_[i].data.data();
    const std::size_t n = params[i].size();
    for (std::size_t k = 0; k < n; ++k) {
      m[k] = static_cast<float>(b1_ * m[k] + (1.0 - b1_) * g[k]);
      v[k] = static_cast<float>(b2_ * v[k] + (1.0 - b2_) * g[k] * g[k]);
      const double denom = std::sqrt(v[k] / c2) + eps_;
      p[k] = static_cast<float>(p[k] * decay - step * m[k] / denom);
    }
  }
}

double clip_global_norm(std::vector<Mat<float>>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (float x : g.data) sq += static_cast<double>(x) * x;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const float s = static_cast<float>(max_norm / (norm + 1e-12));
    for (auto& g : grads)
      for (float& x : g.data) x *= s;
  }
  return norm;
}

std::string metrics_row(const StepMetrics& m) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%d,%lld,%s,%.9g,%.9g,%.9g,%lld", m.epoch, m.step, m.task.c_str(), m.mean_reward,
                m.loss, m.lr, m.wall_ms);
  return buf;
}

std::uint64_t instance_seed(std::uint64_t seed, long long step, int b) {
  return Rng(seed).split("instances").split(static_cast<std::uint64_t>(step)).split(static_cast<std::uint64_t>(b))
      .next_u64();
}

TrainResult train(const TrainConfig& config, const TrainHooks& hooks) {
  PolicyParams<float> params(config.policy);
  params.init(Rng(config.seed).split("init").next_u64());
  return train(config, std::move(params), hooks);
}

TrainResult train(const TrainConfig& config, PolicyParams<float> init, const TrainHooks& hooks) {
  if (config.tasks.empty()) throw std::invalid_argument("train: empty task set");
  if (!(init.config() == config.policy)) throw std::invalid_argument("train: parameters do not match the config");
  std::vector<ConstraintSpec> specs;
  std::vector<std::string> names;
  for (const auto& t : config.tasks) {
    specs.push_back(make_spec(t, config.n_customers));
    names.push_back(variant_name(specs.back().families));
  }
  TrainResult res{std::move(init), {}, {}};
  PolicyParams<float>& params = res.params;
  Rng task_rng = Rng(config.seed).split("tasks");
  const Rng rollout_root = Rng(config.seed).split("rollouts");
  AdamW opt(params.tensors(), config.weight_decay);

  std::ofstream metrics_file;
  std::filesystem::path dir;
  if (!config.out_dir.empty()) {
    dir = config.out_dir;
    std::filesystem::create_directories(dir);
    write_text_atomic(dir / "config.json", train_config_json(config) + "\n");
    metrics_file.open(dir / "metrics.csv", std::ios::trunc);
    if (!metrics_file) throw IoError("cannot write " + (dir / "metrics.csv").string());
    metrics_file << kMetricsHeader << "\n";
  }
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
  };

  long long step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = lr_at(epoch, config);
    double reward_sum = 0.0, feas_sum = 0.0;
    int steps_in_epoch = 0;
    for (int s = 0; s < config.batches_per_epoch; ++s) {
      if (hooks.max_steps > 0 && step >= hooks.max_steps) break;
      ++step;
      const std::size_t ti = task_rng.index(specs.size());
      const ConstraintSpec& spec = specs[ti];
      std::vector<UnifiedInstance> batch;
      std::vector<std::uint64_t> seeds;
      for (int b = 0; b < config.batch_size; ++b) {
        batch.push_back(generate_instance(spec, instance_seed(config.seed, step, b)));
        seeds.push_back(rollout_root.split(static_cast<std::uint64_t>(step)).split(static_cast<std::uint64_t>(b))
                            .next_u64());
      }
      auto bg = policy_gradient<float>(params, batch, seeds);
      bool finite = std::isfinite(bg.terms.loss);
      for (const auto& g : bg.grads)
        for (float x : g.data) finite = finite && std::isfinite(x);
      if (!finite)
        throw TrainingError("non-finite loss at step " + std::to_string(step) + " (" + names[ti] + ")",
                            instance_seed(config.seed, step, 0));
      clip_global_norm(bg.grads, config.grad_clip);
      opt.step(params.tensors(), bg.grads, lr);

      StepMetrics m{epoch, step, names[ti], bg.mean_reward, bg.terms.loss, lr, elapsed(), bg.feasibility};
      if (metrics_file.is_open()) metrics_file << metrics_row(m) << "\n" << std::flush;
      if (hooks.on_step) hooks.on_step(m);
      res.metrics.push_back(m);
      reward_sum += bg.mean_reward;
      feas_sum += bg.feasibility;
      ++steps_in_epoch;
    }
    if (steps_in_epoch == 0) break;
    EpochSummary es{epoch, reward_sum / steps_in_epoch, feas_sum / steps_in_epoch, elapsed()};
    res.epochs.push_back(es);
    if (!dir.empty()) save_checkpoint(dir / "checkpoint.ckpt", params, nlohmann::json{{"epoch", epoch}}.dump());
    if (hooks.on_epoch) hooks.on_epoch(es, params);
  }
  return res;
}

}  // namespace urs
