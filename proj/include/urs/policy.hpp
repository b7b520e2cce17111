#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "urs/autodiff.hpp"
#include "urs/feasibility.hpp"
#include "urs/instance.hpp"
#include "urs/tensor.hpp"

namespace urs {

class Rng;

using Lambda = std::array<std::uint8_t, kSignatureSize>;

struct PolicyConfig {
  int d = 128;
  int layers = 12;
  int hyper_hidden = 256;
  int ff_hidden = 512;
  // Ablation switches.
  bool use_xi = true;       // node-type indicator in the embedding
  bool use_context = true;  // problem-state scalar in the decoder context
  bool prior_in = true;     // incoming-distance branch
  bool prior_rel = true;    // relation branch
  bool operator==(const PolicyConfig&) const = default;
};

inline constexpr double kLogitClip = 50.0;

// enc.<l>.out, enc.<l>.in, enc.<l>.rel for every layer, then dec.glimpse, dec.compat.
std::vector<std::string> bias_sites(int layers);

// -alpha * log2(n_nodes) * value, or -alpha * value when scale_free.
double adaptation_bias(double alpha, int n_nodes, double value, bool scale_free);

// Named, ordered parameter set whose shapes depend only on the config.
template <class T>
class PolicyParams {
 public:
  explicit PolicyParams(PolicyConfig config);

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights; norms at (1, 0); bias
  // MLP output offsets start at 2 so every alpha begins above its floor.
  void init(std::uint64_t seed);

  const PolicyConfig& config() const { return config_; }
  std::size_t count() const { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const std::vector<std::string>& names() const { return names_; }
  Mat<T>& operator[](std::size_t i) { return tensors_[i]; }
  const Mat<T>& operator[](std::size_t i) const { return tensors_[i]; }
  std::vector<Mat<T>>& tensors() { return tensors_; }
  const std::vector<Mat<T>>& tensors() const { return tensors_; }
  int index(const std::string& name) const;  // throws std::out_of_range
  Mat<T>& at(const std::string& name) { return tensors_[index(name)]; }
  const Mat<T>& at(const std::string& name) const { return tensors_[index(name)]; }
  std::size_t scalar_count() const;
  // Zero tensors with the same shapes.
  std::vector<Mat<T>> zeros() const;

  template <class U>
  PolicyParams<U> cast() const {
    PolicyParams<U> out(config_);
    for (std::size_t i = 0; i < tensors_.size(); ++i) out[i] = tensors_[i].template cast<U>();
    return out;
  }

 private:
  void add(const std::string& name, int rows, int cols);

  PolicyConfig config_;
  std::vector<std::string> names_;
  std::vector<Mat<T>> tensors_;
  std::map<std::string, int> lookup_;
};

template <class T>
struct DecoderParams {
  Mat<T> w_first, w_last, w_c, w_k, w_v;
  std::map<std::string, T> alphas;  // dec.glimpse, dec.compat
};

// Everything generated from lambda: one alpha per bias site plus the decoder
// projections. Built once per task and shared by every instance of a batch.
template <class T>
class Conditioning {
 public:
  // grads, when given, receives parameter gradients on backward().
  Conditioning(const PolicyParams<T>& params, const Lambda& lambda, std::vector<Mat<T>>* grads = nullptr);

  std::size_t site_count() const { return sites_.size(); }
  const std::vector<std::string>& sites() const { return sites_; }
  // Outputs: [0, site_count) are 1 x 1 alphas; then w_first, w_last, w_c, w_k, w_v.
  std::size_t output_count() const { return outputs_.size(); }
  const Mat<T>& output(std::size_t i) const { return tape_.value(outputs_[i]); }
  T alpha(const std::string& site) const;
  T raw_alpha(const std::string& site) const;
  DecoderParams<T> decoder() const;
  std::vector<Mat<T>> zero_output_grads() const;
  void backward(const std::vector<Mat<T>>& output_grads);

  static constexpr int kFirst = 0, kLast = 1, kCtx = 2, kKey = 3, kValue = 4;
  std::size_t decoder_output(int which) const { return sites_.size() + which; }

 private:
  Tape<T> tape_;
  std::vector<std::string> sites_;
  std::vector<typename Tape<T>::Var> raw_;
  std::vector<typename Tape<T>::Var> outputs_;
};

template <class T>
T bias_alpha(const PolicyParams<T>& params, const Lambda& lambda, const std::string& site);

template <class T>
DecoderParams<T> hyper_decoder_params(const PolicyParams<T>& params, const Lambda& lambda);

// Node features (rho, omega, xi) as matrices; time attributes are scaled by
// the horizon so every variant sees the same range.
template <class T>
struct NodeFeatures {
  Mat<T> rho, omega, xi;
};
template <class T>
NodeFeatures<T> node_features(const UnifiedInstance& instance);

template <class T>
Mat<T> embed_nodes(const PolicyParams<T>& params, const UnifiedInstance& instance);

// Distance matrix divided by its largest entry.
template <class T>
Mat<T> normalized_distances(const UnifiedInstance& instance);

// Encoder on explicit inputs. dnorm must have maximum 1; relation may be null.
template <class T>
Mat<T> encode(const PolicyParams<T>& params, const Mat<T>& h0, const Mat<T>& dnorm, const Mat<T>* relation,
              const Lambda& lambda);

enum class DecodeMode { kGreedy, kSample, kForced };

struct Trajectory {
  std::vector<int> sequence;
  double log_prob_sum = 0.0;
  double reward = 0.0;  // -objective, or +objective when maximizing
  std::pair<int, int> start{-1, -1};
  bool infeasible = false;
};

template <class T>
struct StepDistribution {
  std::vector<T> logits;  // before masking
  std::vector<T> probs;
};

// Encoder output plus decoder for one instance. In training mode the whole
// episode stays on one tape so backward() can run after rewards are known.
template <class T>
class InstanceGraph {
 public:
  InstanceGraph(const PolicyParams<T>& params, const Conditioning<T>& cond, const UnifiedInstance& instance,
                bool record, std::vector<Mat<T>>* param_grads = nullptr, std::vector<Mat<T>>* cond_grads = nullptr);

  const Mat<T>& encoded() const { return tape_.value(hl_); }
  const RoutingEnv& env() const { return env_; }

  // One trajectory per start. kForced replays the given sequences (which must
  // begin with their start) to score them.
  std::vector<Trajectory> rollout(DecodeMode mode, const std::vector<std::pair<int, int>>& starts, Rng* rng = nullptr,
                                  const std::vector<std::vector<int>>* forced = nullptr);

  // Distribution at a state whose first node (forced start) is first_node.
  StepDistribution<T> step_distribution(const StepState& state, int first_node);

  // Accumulates gradients of sum_k weights[k] * log_prob_sum_k for the last
  // recorded rollout.
  void backward(const std::vector<double>& weights);

 private:
  using Var = typename Tape<T>::Var;
  struct Bound;
  Var decode_logits(Tape<T>& t, Bound& b, Var hl, Var kl, Var vl, const std::vector<int>& firsts,
                    const std::vector<int>& currents, const std::vector<T>& ctx,
                    const std::vector<std::uint8_t>& mask);

  const PolicyParams<T>& params_;
  const Conditioning<T>& cond_;
  const UnifiedInstance& inst_;
  RoutingEnv env_;
  bool record_;
  std::vector<Mat<T>>* param_grads_;
  std::vector<Mat<T>>* cond_grads_;
  Tape<T> tape_;
  std::unique_ptr<Bound> bound_;
  Mat<T> dnorm_;
  T log2n_;
  Var hl_, kl_, vl_;
  // (log-prob column, trajectory index per row) per decoding step.
  std::vector<std::pair<Var, std::vector<int>>> steps_;
  std::size_t traj_count_ = 0;

 public:
  ~InstanceGraph();
};

// Convenience: condition, encode and decode one instance without gradients.
template <class T>
std::vector<Trajectory> rollout(const PolicyParams<T>& params, const UnifiedInstance& instance, DecodeMode mode,
                                const std::vector<std::pair<int, int>>& starts, Rng* rng = nullptr);

extern template class PolicyParams<float>;
extern template class PolicyParams<double>;
extern template class Conditioning<float>;
extern template class Conditioning<double>;
extern template class InstanceGraph<float>;
extern template class InstanceGraph<double>;

}  // namespace urs
