#include "urs/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "urs/rng.hpp"

namespace urs {

namespace {

constexpr const char* kBranches[3] = {"out", "in", "rel"};
constexpr const char* kDecoderBlocks[5] = {"first", "last", "ctx", "key", "value"};

template <class T>
Mat<T> lambda_row(const Lambda& lambda) {
  Mat<T> m(1, kSignatureSize);
  for (int i = 0; i < kSignatureSize; ++i) m.data[i] = static_cast<T>(lambda[i]);
  return m;
}

std::string layer_prefix(int l) { return "enc." + std::to_string(l) + "."; }

}  // namespace

std::vector<std::string> bias_sites(int layers) {
  std::vector<std::string> s;
  for (int l = 0; l < layers; ++l)
    for (const char* b : kBranches) s.push_back(layer_prefix(l) + b);
  s.push_back("dec.glimpse");
  s.push_back("dec.compat");
  return s;
}

double adaptation_bias(double alpha, int n_nodes, double value, bool scale_free) {
  if (alpha < 1.0) throw std::invalid_argument("adaptation_bias: alpha must be at least 1");
  if (value < 0.0) throw std::invalid_argument("adaptation_bias: value must be non-negative");
  if (scale_free) return -alpha * value;
  if (n_nodes < 2) throw std::invalid_argument("adaptation_bias: log2 scale needs at least 2 nodes");
  return -alpha * std::log2(static_cast<double>(n_nodes)) * value;
}

// ---------------------------------------------------------------- parameters

template <class T>
PolicyParams<T>::PolicyParams(PolicyConfig c) : config_(c) {
  if (c.d < 1 || c.layers < 1 || c.hyper_hidden < 1 || c.ff_hidden < 1)
    throw std::invalid_argument("PolicyConfig: sizes must be positive");
  const int d = c.d;
  add("embed.W_rho", 3, d);
  add("embed.W_omega", kAttrCount, d);
  add("embed.W_xi", kTypeBitCount, d);
  for (int l = 0; l < c.layers; ++l) {
    const std::string p = layer_prefix(l);
    for (const char* b : kBranches)
      for (const char* w : {"Wq", "Wk", "Wv"}) add(p + b + "." + w, d, d);
    add(p + "W_O", 3 * d, d);
    add(p + "norm1.gamma", 1, d);
    add(p + "norm1.beta", 1, d);
    add(p + "ff.W1", d, c.ff_hidden);
    add(p + "ff.b1", 1, c.ff_hidden);
    add(p + "ff.W2", c.ff_hidden, d);
    add(p + "ff.b2", 1, d);
    add(p + "norm2.gamma", 1, d);
    add(p + "norm2.beta", 1, d);
  }
  for (const auto& site : bias_sites(c.layers)) {
    add("bias." + site + ".W1", kSignatureSize, d);
    add("bias." + site + ".b1", 1, d);
    add("bias." + site + ".W2", d, 1);
    add("bias." + site + ".b2", 1, 1);
  }
  const int h = c.hyper_hidden;
  add("hyper.W1", kSignatureSize, h);
  add("hyper.b1", 1, h);
  add("hyper.W2", h, h);
  add("hyper.b2", 1, h);
  add("hyper.W3", h, 5 * kSignatureSize);
  add("hyper.b3", 1, 5 * kSignatureSize);
  for (const char* blk : kDecoderBlocks) {
    const int rows = std::string(blk) == "ctx" ? 1 : d;
    add(std::string("hyper.P_") + blk, kSignatureSize, rows * d);
  }
}

template <class T>
void PolicyParams<T>::add(const std::string& name, int rows, int cols) {
  lookup_[name] = static_cast<int>(tensors_.size());
  names_.push_back(name);
  tensors_.emplace_back(rows, cols);
}

template <class T>
int PolicyParams<T>::index(const std::string& name) const {
  auto it = lookup_.find(name);
  if (it == lookup_.end()) throw std::out_of_range("unknown parameter " + name);
  return it->second;
}

template <class T>
std::size_t PolicyParams<T>::scalar_count() const {
  std::size_t s = 0;
  for (const auto& t : tensors_) s += t.size();
  return s;
}

template <class T>
std::vector<Mat<T>> PolicyParams<T>::zeros() const {
  std::vector<Mat<T>> z;
  z.reserve(tensors_.size());
  for (const auto& t : tensors_) z.emplace_back(t.rows, t.cols);
  return z;
}

template <class T>
void PolicyParams<T>::init(std::uint64_t seed) {
  Rng root(seed);
  auto ends_with = [](const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
  };
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const std::string& nm = names_[i];
    Mat<T>& m = tensors_[i];
    Rng rng = root.split(nm);
    if (ends_with(nm, ".gamma")) {
      std::fill(m.data.begin(), m.data.end(), T(1));
      continue;
    }
    if (ends_with(nm, ".beta")) {
      m.zero();
      continue;
    }
    // Biases take the fan-in of the weight that feeds them.
    int fan_in = m.rows;
    const bool is_bias = nm.rfind(".b") == nm.size() - 3 && std::isdigit(static_cast<unsigned char>(nm.back()));
    if (is_bias) fan_in = tensors_[i - 1].rows;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (T& x : m.data) x = static_cast<T>(rng.uniform(-bound, bound));
    if (nm.rfind("bias.", 0) == 0 && ends_with(nm, ".b2")) m.data[0] += T(2);
  }
}

// -------------------------------------------------------------- conditioning

template <class T>
Conditioning<T>::Conditioning(const PolicyParams<T>& params, const Lambda& lambda, std::vector<Mat<T>>* grads)
    : sites_(bias_sites(params.config().layers)) {
  auto p = [&](const std::string& name) {
    const int i = params.index(name);
    return tape_.external(params[i], grads ? &(*grads)[i] : nullptr);
  };
  const auto lam = tape_.constant(lambda_row<T>(lambda));
  for (const auto& site : sites_) {
    const std::string b = "bias." + site + ".";
    auto hidden = tape_.add_row(tape_.matmul(lam, p(b + "W1")), p(b + "b1"));
    auto raw = tape_.add(tape_.matmul(hidden, p(b + "W2")), p(b + "b2"));
    raw_.push_back(raw);
    outputs_.push_back(tape_.clamp_min(raw, T(1)));
  }
  auto h1 = tape_.add_row(tape_.matmul(lam, p("hyper.W1")), p("hyper.b1"));
  auto h2 = tape_.add_row(tape_.matmul(h1, p("hyper.W2")), p("hyper.b2"));
  auto h3 = tape_.add_row(tape_.matmul(h2, p("hyper.W3")), p("hyper.b3"));
  auto blocks = tape_.reshape(h3, 5, kSignatureSize);
  const int d = params.config().d;
  for (int i = 0; i < 5; ++i) {
    const int rows = i == kCtx ? 1 : d;
    auto flat = tape_.matmul(tape_.slice_rows(blocks, i, 1), p(std::string("hyper.P_") + kDecoderBlocks[i]));
    outputs_.push_back(tape_.reshape(flat, rows, d));
  }
}

template <class T>
T Conditioning<T>::alpha(const std::string& site) const {
  auto it = std::find(sites_.begin(), sites_.end(), site);
  if (it == sites_.end()) throw std::invalid_argument("unknown bias site " + site);
  return output(it - sites_.begin()).data[0];
}

template <class T>
T Conditioning<T>::raw_alpha(const std::string& site) const {
  auto it = std::find(sites_.begin(), sites_.end(), site);
  if (it == sites_.end()) throw std::invalid_argument("unknown bias site " + site);
  return tape_.value(raw_[it - sites_.begin()]).data[0];
}

template <class T>
DecoderParams<T> Conditioning<T>::decoder() const {
  DecoderParams<T> dp;
  dp.w_first = output(decoder_output(kFirst));
  dp.w_last = output(decoder_output(kLast));
  dp.w_c = output(decoder_output(kCtx));
  dp.w_k = output(decoder_output(kKey));
  dp.w_v = output(decoder_output(kValue));
  dp.alphas["dec.glimpse"] = alpha("dec.glimpse");
  dp.alphas["dec.compat"] = alpha("dec.compat");
  return dp;
}

template <class T>
std::vector<Mat<T>> Conditioning<T>::zero_output_grads() const {
  std::vector<Mat<T>> z;
  for (std::size_t i = 0; i < outputs_.size(); ++i) z.emplace_back(output(i).rows, output(i).cols);
  return z;
}

template <class T>
void Conditioning<T>::backward(const std::vector<Mat<T>>& output_grads) {
  if (output_grads.size() != outputs_.size()) throw std::invalid_argument("Conditioning::backward: wrong seed count");
  std::vector<std::pair<typename Tape<T>::Var, const Mat<T>*>> seeds;
  for (std::size_t i = 0; i < outputs_.size(); ++i) seeds.emplace_back(outputs_[i], &output_grads[i]);
  tape_.backward(seeds);
}

template <class T>
T bias_alpha(const PolicyParams<T>& params, const Lambda& lambda, const std::string& site) {
  return Conditioning<T>(params, lambda).alpha(site);
}

template <class T>
DecoderParams<T> hyper_decoder_params(const PolicyParams<T>& params, const Lambda& lambda) {
  return Conditioning<T>(params, lambda).decoder();
}

// ------------------------------------------------------------------ features

template <class T>
NodeFeatures<T> node_features(const UnifiedInstance& in) {
  const int n = in.size();
  NodeFeatures<T> f{Mat<T>(n, 3), Mat<T>(n, kAttrCount), Mat<T>(n, kTypeBitCount)};
  const bool tw = in.spec.families.has(Family::TW);
  const double horizon = tw ? in.spec.param("depot_end_time") : 1.0;
  for (int i = 0; i < n; ++i) {
    const NodeRecord& r = in.nodes[i];
    for (int k = 0; k < 3; ++k) f.rho(i, k) = static_cast<T>(r.rho[k]);
    for (int k = 0; k < kAttrCount; ++k) {
      double v = r.omega[k];
      if (k == kEarliest || k == kLatest || k == kService) v /= horizon;
      f.omega(i, k) = static_cast<T>(v);
    }
    for (int k = 0; k < kTypeBitCount; ++k) f.xi(i, k) = static_cast<T>(r.xi[k]);
  }
  return f;
}

template <class T>
Mat<T> normalized_distances(const UnifiedInstance& in) {
  const int n = in.size();
  Mat<T> m(n, n);
  double mx = 0.0;
  for (double v : in.dist) mx = std::max(mx, v);
  if (mx <= 0.0) mx = 1.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = static_cast<T>(in.d(i, j) / mx);
  return m;
}

// -------------------------------------------------------------- shared graph

namespace {

// Per-tape cache of external nodes for parameters and conditioning outputs.
template <class T>
struct Binder {
  using Var = typename Tape<T>::Var;
  Tape<T>& tape;
  const PolicyParams<T>& params;
  const Conditioning<T>& cond;
  std::vector<Mat<T>>* param_grads;
  std::vector<Mat<T>>* cond_grads;
  std::vector<Var> pvars;
  std::vector<Var> cvars;

  Binder(Tape<T>& t, const PolicyParams<T>& p, const Conditioning<T>& c, std::vector<Mat<T>>* pg,
         std::vector<Mat<T>>* cg)
      : tape(t), params(p), cond(c), param_grads(pg), cond_grads(cg), pvars(p.count()), cvars(c.output_count()) {}

  Var param(const std::string& name) {
    const int i = params.index(name);
    if (!pvars[i].valid()) pvars[i] = tape.external(params[i], param_grads ? &(*param_grads)[i] : nullptr);
    return pvars[i];
  }
  Var out(std::size_t i) {
    if (!cvars[i].valid()) cvars[i] = tape.external(cond.output(i), cond_grads ? &(*cond_grads)[i] : nullptr);
    return cvars[i];
  }
};

template <class T>
typename Tape<T>::Var embed_on(Binder<T>& b, const NodeFeatures<T>& f) {
  Tape<T>& t = b.tape;
  auto h = t.add(t.matmul(t.constant(f.rho), b.param("embed.W_rho")),
                 t.matmul(t.constant(f.omega), b.param("embed.W_omega")));
  if (b.params.config().use_xi) h = t.add(h, t.matmul(t.constant(f.xi), b.param("embed.W_xi")));
  return h;
}

template <class T>
typename Tape<T>::Var encode_on(Binder<T>& b, typename Tape<T>::Var h, const Mat<T>& dnorm, const Mat<T>* relation) {
  Tape<T>& t = b.tape;
  const PolicyConfig& cfg = b.params.config();
  const int n = dnorm.rows;
  if (dnorm.cols != n || t.value(h).rows != n) throw std::invalid_argument("encode: size mismatch");
  T mx = 0;
  for (T v : dnorm.data) mx = std::max(mx, v);
  if (n > 1 && std::abs(mx - T(1)) > T(1e-6)) throw std::invalid_argument("encode: distances are not normalized");
  const T scale = n >= 2 ? static_cast<T>(std::log2(static_cast<double>(n))) : T(0);

  Mat<T> c_out(n, n), c_in(n, n), c_rel;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      c_out(i, j) = -scale * dnorm(i, j);
      c_in(i, j) = -scale * dnorm(j, i);
    }
  const bool rel = relation && cfg.prior_rel;
  if (rel) {
    c_rel = Mat<T>(n, n);
    for (std::size_t k = 0; k < c_rel.size(); ++k) c_rel.data[k] = -relation->data[k];
  }
  const bool active[3] = {true, cfg.prior_in, rel};
  const Mat<T>* priors[3] = {&c_out, &c_in, &c_rel};
  const auto zero = t.constant(Mat<T>(n, cfg.d));
  const auto sites = b.cond.sites();

  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = layer_prefix(l);
    std::vector<typename Tape<T>::Var> parts;
    for (int br = 0; br < 3; ++br) {
      if (!active[br]) {
        parts.push_back(zero);
        continue;
      }
      const std::string bp = p + kBranches[br] + ".";
      auto q = t.matmul(h, b.param(bp + "Wq"));
      auto k = t.matmul(h, b.param(bp + "Wk"));
      auto v = t.matmul(h, b.param(bp + "Wv"));
      auto alpha = b.out(static_cast<std::size_t>(l) * 3 + br);
      parts.push_back(t.aafm(q, k, v, t.scalar_times(alpha, *priors[br])));
    }
    auto mixed = t.matmul(t.concat_cols(parts), b.param(p + "W_O"));
    h = t.instance_norm(t.add(h, mixed), b.param(p + "norm1.gamma"), b.param(p + "norm1.beta"));
    auto ff = t.relu(t.add_row(t.matmul(h, b.param(p + "ff.W1")), b.param(p + "ff.b1")));
    ff = t.add_row(t.matmul(ff, b.param(p + "ff.W2")), b.param(p + "ff.b2"));
    h = t.instance_norm(t.add(h, ff), b.param(p + "norm2.gamma"), b.param(p + "norm2.beta"));
  }
  return h;
}

template <class T>
Mat<T> relation_matrix(const UnifiedInstance& in) {
  const int n = in.size();
  Mat<T> r(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) r(i, j) = static_cast<T>(in.r(i, j));
  return r;
}

}  // namespace

template <class T>
Mat<T> embed_nodes(const PolicyParams<T>& params, const UnifiedInstance& instance) {
  Lambda lam{};
  Conditioning<T> cond(params, lam);
  Tape<T> t;
  Binder<T> b(t, params, cond, nullptr, nullptr);
  return t.value(embed_on(b, node_features<T>(instance)));
}

template <class T>
Mat<T> encode(const PolicyParams<T>& params, const Mat<T>& h0, const Mat<T>& dnorm, const Mat<T>* relation,
              const Lambda& lambda) {
  Conditioning<T> cond(params, lambda);
  Tape<T> t;
  Binder<T> b(t, params, cond, nullptr, nullptr);
  return t.value(encode_on(b, t.constant(h0), dnorm, relation));
}

// ------------------------------------------------------------ instance graph

template <class T>
struct InstanceGraph<T>::Bound : Binder<T> {
  using Binder<T>::Binder;
};

template <class T>
InstanceGraph<T>::InstanceGraph(const PolicyParams<T>& params, const Conditioning<T>& cond,
                                const UnifiedInstance& instance, bool record, std::vector<Mat<T>>* param_grads,
                                std::vector<Mat<T>>* cond_grads)
    : params_(params),
      cond_(cond),
      inst_(instance),
      env_(instance),
      record_(record),
      param_grads_(record ? param_grads : nullptr),
      cond_grads_(record ? cond_grads : nullptr) {
  bound_ = std::make_unique<Bound>(tape_, params_, cond_, param_grads_, cond_grads_);
  dnorm_ = normalized_distances<T>(inst_);
  const int n = inst_.size();
  log2n_ = n >= 2 ? static_cast<T>(std::log2(static_cast<double>(n))) : T(0);
  Mat<T> rel;
  if (inst_.has_relation()) rel = relation_matrix<T>(inst_);
  auto h0 = embed_on(*bound_, node_features<T>(inst_));
  hl_ = encode_on(*bound_, h0, dnorm_, inst_.has_relation() ? &rel : nullptr);
  kl_ = tape_.matmul(hl_, bound_->out(cond_.decoder_output(Conditioning<T>::kKey)));
  vl_ = tape_.matmul(hl_, bound_->out(cond_.decoder_output(Conditioning<T>::kValue)));
}

template <class T>
InstanceGraph<T>::~InstanceGraph() = default;

template <class T>
typename InstanceGraph<T>::Var InstanceGraph<T>::decode_logits(Tape<T>& t, Bound& b, Var hl, Var kl, Var vl,
                                                               const std::vector<int>& firsts,
                                                               const std::vector<int>& currents,
                                                               const std::vector<T>& ctx,
                                                               const std::vector<std::uint8_t>& mask) {
  const int m = static_cast<int>(currents.size());
  const int n = inst_.size();
  const PolicyConfig& cfg = params_.config();
  auto hc = t.add(t.matmul(t.gather_rows(hl, firsts), b.out(cond_.decoder_output(Conditioning<T>::kFirst))),
                  t.matmul(t.gather_rows(hl, currents), b.out(cond_.decoder_output(Conditioning<T>::kLast))));
  if (cfg.use_context) {
    Mat<T> c(m, 1);
    for (int r = 0; r < m; ++r) c.data[r] = ctx[r];
    hc = t.add(hc, t.matmul(t.constant(std::move(c)), b.out(cond_.decoder_output(Conditioning<T>::kCtx))));
  }
  Mat<T> dist(m, n);
  for (int r = 0; r < m; ++r) {
    const T* src = dnorm_.row(currents[r]);
    for (int j = 0; j < n; ++j) dist(r, j) = -log2n_ * src[j];
  }
  std::vector<std::uint8_t> exclude(mask.size());
  for (std::size_t k = 0; k < mask.size(); ++k) exclude[k] = !mask[k];
  const std::size_t glimpse_site = static_cast<std::size_t>(cfg.layers) * 3;
  auto glimpse = t.aafm(hc, kl, vl, t.scalar_times(b.out(glimpse_site), dist), std::move(exclude));
  auto compat = t.add(t.scale(t.matmul_bt(glimpse, hl), T(1) / std::sqrt(static_cast<T>(cfg.d))),
                      t.scalar_times(b.out(glimpse_site + 1), std::move(dist)));
  return t.scale(t.tanh(compat), static_cast<T>(kLogitClip));
}

template <class T>
StepDistribution<T> InstanceGraph<T>::step_distribution(const StepState& state, int first_node) {
  std::vector<std::uint8_t> m;
  env_.mask(state, m);
  if (std::find(m.begin(), m.end(), 1) == m.end()) throw std::invalid_argument("step_distribution: empty mask");
  Tape<T> t;
  Bound b(t, params_, cond_, nullptr, nullptr);
  auto hl = t.external(tape_.value(hl_), nullptr);
  auto kl = t.external(tape_.value(kl_), nullptr);
  auto vl = t.external(tape_.value(vl_), nullptr);
  auto logits = decode_logits(t, b, hl, kl, vl, {first_node}, {state.current},
                              {static_cast<T>(env_.context_feature(state))}, m);
  StepDistribution<T> out;
  out.logits = t.value(logits).data;
  out.probs = Tape<T>::masked_softmax(t.value(logits), m).data;
  return out;
}

template <class T>
std::vector<Trajectory> InstanceGraph<T>::rollout(DecodeMode mode, const std::vector<std::pair<int, int>>& starts,
                                                  Rng* rng, const std::vector<std::vector<int>>* forced) {
  if (starts.empty()) throw std::invalid_argument("rollout: no starts");
  if (mode == DecodeMode::kSample && !rng) throw std::invalid_argument("rollout: sampling needs an rng");
  if (mode == DecodeMode::kForced && (!forced || forced->size() != starts.size()))
    throw std::invalid_argument("rollout: forced mode needs one sequence per start");
  steps_.clear();
  traj_count_ = starts.size();
  const int n = inst_.size();
  const std::size_t cap = 4 * static_cast<std::size_t>(n) + 8;

  struct Run {
    StepState s;
    int first = 0;
  };
  std::vector<Run> runs(starts.size());
  std::vector<Trajectory> out(starts.size());
  for (std::size_t k = 0; k < starts.size(); ++k) {
    const auto [origin, first] = starts[k];
    runs[k].s = env_.initial_state(origin, first);
    runs[k].first = first;
    out[k].start = starts[k];
    if (origin >= 0) out[k].sequence.push_back(origin);
    if (first != origin) out[k].sequence.push_back(first);
    if (forced) {
      const auto& f = (*forced)[k];
      if (f.size() < out[k].sequence.size() || !std::equal(out[k].sequence.begin(), out[k].sequence.end(), f.begin()))
        throw ContractViolation("rollout: forced sequence does not begin with its start");
    }
  }

  std::vector<std::uint8_t> m, batch_mask;
  std::vector<int> batch, firsts, currents, picks;
  std::vector<T> ctx;
  while (true) {
    batch.clear();
    batch_mask.clear();
    for (std::size_t k = 0; k < runs.size(); ++k) {
      Run& r = runs[k];
      if (r.s.done || out[k].infeasible) continue;
      env_.mask(r.s, m);
      const int options = static_cast<int>(std::count(m.begin(), m.end(), 1));
      if (options == 0 || out[k].sequence.size() > cap) {
        out[k].infeasible = true;
        continue;
      }
      if (options == 1 && mode != DecodeMode::kForced) {
        const int only = static_cast<int>(std::find(m.begin(), m.end(), 1) - m.begin());
        env_.advance(r.s, only);
        out[k].sequence.push_back(only);
        continue;
      }
      batch.push_back(static_cast<int>(k));
      batch_mask.insert(batch_mask.end(), m.begin(), m.end());
    }
    if (batch.empty()) {
      bool any = false;
      for (std::size_t k = 0; k < runs.size(); ++k) any = any || (!runs[k].s.done && !out[k].infeasible);
      if (!any) break;
      continue;
    }
    const int bm = static_cast<int>(batch.size());
    firsts.assign(bm, 0);
    currents.assign(bm, 0);
    ctx.assign(bm, T(0));
    for (int r = 0; r < bm; ++r) {
      const Run& run = runs[batch[r]];
      firsts[r] = run.first;
      currents[r] = run.s.current;
      ctx[r] = static_cast<T>(env_.context_feature(run.s));
    }

    Tape<T> scratch;
    std::unique_ptr<Bound> scratch_bound;
    Tape<T>* t = &tape_;
    Bound* b = bound_.get();
    Var hl = hl_, kl = kl_, vl = vl_;
    if (!record_) {
      scratch_bound = std::make_unique<Bound>(scratch, params_, cond_, nullptr, nullptr);
      t = &scratch;
      b = scratch_bound.get();
      hl = scratch.external(tape_.value(hl_), nullptr);
      kl = scratch.external(tape_.value(kl_), nullptr);
      vl = scratch.external(tape_.value(vl_), nullptr);
    }
    Var logits = decode_logits(*t, *b, hl, kl, vl, firsts, currents, ctx, batch_mask);

    picks.assign(bm, -1);
    if (mode == DecodeMode::kForced) {
      for (int r = 0; r < bm; ++r) {
        const Trajectory& tr = out[batch[r]];
        const auto& f = (*forced)[batch[r]];
        if (tr.sequence.size() >= f.size()) throw ContractViolation("rollout: forced sequence ended early");
        picks[r] = f[tr.sequence.size()];
        if (picks[r] < 0 || picks[r] >= n || !batch_mask[static_cast<std::size_t>(r) * n + picks[r]])
          throw ContractViolation("rollout: forced node is masked");
      }
    } else {
      const Mat<T> probs = Tape<T>::masked_softmax(t->value(logits), batch_mask);
      for (int r = 0; r < bm; ++r) {
        const T* p = probs.row(r);
        const std::uint8_t* mk = batch_mask.data() + static_cast<std::size_t>(r) * n;
        if (mode == DecodeMode::kGreedy) {
          int best = -1;
          for (int j = 0; j < n; ++j)
            if (mk[j] && (best < 0 || p[j] > p[best])) best = j;
          picks[r] = best;
        } else {
          const double u = rng->uniform();
          double acc = 0.0;
          for (int j = 0; j < n; ++j) {
            if (!mk[j]) continue;
            picks[r] = j;
            acc += static_cast<double>(p[j]);
            if (u < acc) break;
          }
        }
      }
    }
    Var lp = t->log_softmax_pick(logits, batch_mask, picks);
    for (int r = 0; r < bm; ++r) {
      const int k = batch[r];
      out[k].log_prob_sum += static_cast<double>(t->value(lp).data[r]);
      env_.advance(runs[k].s, picks[r]);
      out[k].sequence.push_back(picks[r]);
    }
    if (record_) steps_.emplace_back(lp, batch);
  }

  for (std::size_t k = 0; k < out.size(); ++k) {
    if (forced && !out[k].infeasible && out[k].sequence != (*forced)[k])
      throw ContractViolation("rollout: forced sequence does not match a completed episode");
    if (out[k].infeasible) continue;
    const ObjectiveResult obj = evaluate_solution(inst_, out[k].sequence);
    out[k].reward = obj.maximize ? obj.value : -obj.value;
  }
  return out;
}

template <class T>
void InstanceGraph<T>::backward(const std::vector<double>& weights) {
  if (!record_) throw std::logic_error("InstanceGraph::backward: graph was built without recording");
  if (weights.size() != traj_count_) throw std::invalid_argument("InstanceGraph::backward: wrong weight count");
  std::vector<Mat<T>> seeds_store;
  seeds_store.reserve(steps_.size());
  std::vector<std::pair<Var, const Mat<T>*>> seeds;
  for (const auto& [lp, rows] : steps_) {
    Mat<T> g(static_cast<int>(rows.size()), 1);
    for (std::size_t r = 0; r < rows.size(); ++r) g.data[r] = static_cast<T>(weights[rows[r]]);
    seeds_store.push_back(std::move(g));
  }
  for (std::size_t i = 0; i < steps_.size(); ++i) seeds.emplace_back(steps_[i].first, &seeds_store[i]);
  tape_.backward(seeds);
}

template <class T>
std::vector<Trajectory> rollout(const PolicyParams<T>& params, const UnifiedInstance& instance, DecodeMode mode,
                                const std::vector<std::pair<int, int>>& starts, Rng* rng) {
  const Conditioning<T> cond(params, derive_signature(instance).lambda);
  InstanceGraph<T> g(params, cond, instance, false);
  return g.rollout(mode, starts, rng);
}

template class PolicyParams<float>;
template class PolicyParams<double>;
template class Conditioning<float>;
template class Conditioning<double>;
template class InstanceGraph<float>;
template class InstanceGraph<double>;

#define URS_POLICY_FUNCS(T)                                                                                         \
  template T bias_alpha<T>(const PolicyParams<T>&, const Lambda&, const std::string&);                               \
  template DecoderParams<T> hyper_decoder_params<T>(const PolicyParams<T>&, const Lambda&);                          \
  template NodeFeatures<T> node_features<T>(const UnifiedInstance&);                                                 \
  template Mat<T> embed_nodes<T>(const PolicyParams<T>&, const UnifiedInstance&);                                    \
  template Mat<T> normalized_distances<T>(const UnifiedInstance&);                                                   \
  template Mat<T> encode<T>(const PolicyParams<T>&, const Mat<T>&, const Mat<T>&, const Mat<T>*, const Lambda&);     \
  template std::vector<Trajectory> rollout<T>(const PolicyParams<T>&, const UnifiedInstance&, DecodeMode,            \
                                              const std::vector<std::pair<int, int>>&, Rng*);

URS_POLICY_FUNCS(float)
URS_POLICY_FUNCS(double)

#undef URS_POLICY_FUNCS

}  // namespace urs
