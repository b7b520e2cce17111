#include "urs/autodiff.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "urs/kernels.hpp"

namespace urs {

namespace {

[[noreturn]] void shape_error(const char* op) { throw std::invalid_argument(std::string("tape: shape mismatch in ") + op); }

template <class T>
inline T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace

template <class T>
typename Tape<T>::Var Tape<T>::push(Node&& n) {
  if (!n.rg) {
    // Nothing flows back through this node; drop its backward caches.
    n.cmat = Mat<T>();
    std::vector<T>().swap(n.aux);
    std::vector<T>().swap(n.aux2);
    std::vector<int>().swap(n.iaux);
    std::vector<std::uint8_t>().swap(n.baux);
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <class T>
typename Tape<T>::Var Tape<T>::constant(Mat<T> value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Var Tape<T>::parameter(Mat<T> value) {
  Node n;
  n.value = std::move(value);
  n.rg = true;
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Var Tape<T>::external(const Mat<T>& value, Mat<T>* sink) {
  if (sink && !sink->same_shape(value)) shape_error("external");
  Node n;
  n.ext = &value;
  n.sink = sink;
  n.rg = sink != nullptr;
  return push(std::move(n));
}

template <class T>
const Mat<T>& Tape<T>::value(Var v) const {
  return nodes_[v.id].val();
}

template <class T>
const Mat<T>& Tape<T>::grad(Var v) const {
  const Node& n = nodes_[v.id];
  return n.sink ? *n.sink : n.grad;
}

template <class T>
Mat<T>& Tape<T>::grad_buffer(int id) {
  Node& n = nodes_[id];
  n.has_grad = true;
  if (n.sink) return *n.sink;
  if (n.grad.empty() && !n.val().empty()) n.grad.resize(n.val().rows, n.val().cols);
  return n.grad;
}

template <class T>
typename Tape<T>::Var Tape<T>::matmul(Var a, Var b) {
  Node n;
  n.op = Op::kMatmul;
  kernels::gemm_nn(value(a), value(b), n.value, false);
  n.a = a.id;
  n.b = b.id;
  n.rg = nodes_[a.id].rg || nodes_[b.id].rg;
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Var Tape<T>::matmul_bt(Var a, Var b) {
  Node n;
  n.op = Op::kMatmulBt;
  kernels::gemm_nt(value(a), value(b), n.value, false);
  n.a = a.id;
  n.b = b.id;
  n.rg = nodes_[a.id].rg || nodes_[b.id].rg;
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Var Tape<T>::add(Var a, Var b) {
  const Mat<T>& x = value(a);
  const Mat<T>& y = value(b);
  if (!x.same_shape(y)) shape_error("add");
  Node n;
  n.op = Op::kAdd;
  n.value = x;
  for (std::size_t i = 0; i < y.size(); ++i) n.value.data[i] += y.data[i];
  n.a = a.id;
  n.b = b.id;
  n.rg = nodes_[a.id].rg || nodes_[b.id].rg;
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Var Tape<T>::add_row(Var a, Var row) {
  const Mat<T>& x = value(a);
  const Mat<T>& r = value(row);
  if (r.rows != 1 || r.cols != x.cols) shape_error("add_row");
  Node n;
  n.op = Op::kAddRow;
  n.value = x;
  for (int i = 0; i < x.rows; ++i) {
    T* out = n.value.row(i);
    for (int j = 0; j < x.cols; ++j) out[j] += r.data[j];
  }
  n.a = a.id;
  n.b = row.id;
  n.rg = nodes_[a.id].rg || nodes_[row.id].rg;
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Var Tape<T>::scale(Var a, T s) {
  Node n;
  n.op = Op::kScale;
  n.value = value(a);
  for (T& x : n.value.data) x *= s;
  n.scalar = s;
  n.a = a.id;
  n.rg = nodes_[a.id].rg;
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Var Tape<T>::scalar_times(Var alpha, Mat<T> c) {
  const Mat<T>& al = value(alpha);
  if (al.rows != 1 || al.cols != 1) shape_error("scalar_times");
  Node n;
  n.op = Op::kScalarTimes;
  n.value = c;
  const T s = al.data[0];
  for (T& x : n.value.data) x *= s;
  n.cmat = std::move(c);
  n.a = alpha.id;
  n.rg = nodes_[alpha.id].rg;
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Var Tape<T>::relu(Var a) {
  Node n;
  n.op = Op::kRelu;
  n.value = value(a);
  for (T& x : n.value.data) x = x > T(0) ? x : T(0);
  n.a = a.id;
  n.rg = nodes_[a.id].rg;
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Var Tape<T>::tanh(Var a) {
  Node n;
  n.op = Op::kTanh;
  n.value = value(a);
  for (T& x : n.value.data) x = std::tanh(x);
  n.a = a.id;
  n.rg = nodes_[a.id].rg;
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Var Tape<T>::clamp_min(Var a, T lo) {
  Node n;
  n.op = Op::kClampMin;
  n.value = value(a);
  for (T& x : n.value.data) x = x > lo ? x : lo;
  n.scalar = lo;
  n.a = a.id;
  n.rg = nodes_[a.id].rg;
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Var Tape<T>::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) shape_error("concat_cols");
  const int rows = value(parts[0]).rows;
  int cols = 0;
  for (Var p : parts) {
    if (value(p).rows != rows) shape_error("concat_cols");
    cols += value(p).cols;
  }
  Node n;
  n.op = Op::kConcat;
  n.value.resize(rows, cols);
  int off = 0;
  for (Var p : parts) {
    const Mat<T>& src = value(p);
    for (int i = 0; i < rows; ++i) std::copy(src.row(i), src.row(i) + src.cols, n.value.row(i) + off);
    off += src.cols;
    n.iaux.push_back(p.id);
    n.rg = n.rg || nodes_[p.id].rg;
  }
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Var Tape<T>::reshape(Var a, int rows, int cols) {
  const Mat<T>& x = value(a);
  if (static_cast<std::size_t>(rows) * cols != x.size()) shape_error("reshape");
  Node n;
  n.op = Op::kReshape;
  n.value = x;
  n.value.rows = rows;
  n.value.cols = cols;
  n.a = a.id;
  n.rg = nodes_[a.id].rg;
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Var Tape<T>::slice_rows(Var a, int begin, int count) {
  const Mat<T>& x = value(a);
  if (begin < 0 || count < 0 || begin + count > x.rows) shape_error("slice_rows");
  Node n;
  n.op = Op::kSliceRows;
  n.value.rows = count;
  n.value.cols = x.cols;
  n.value.data.assign(x.row(begin), x.row(begin) + static_cast<std::size_t>(count) * x.cols);
  n.a = a.id;
  n.c = begin;
  n.rg = nodes_[a.id].rg;
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Var Tape<T>::gather_rows(Var a, std::vector<int> rows) {
  const Mat<T>& x = value(a);
  Node n;
  n.op = Op::kGatherRows;
  n.value.resize(static_cast<int>(rows.size()), x.cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= x.rows) shape_error("gather_rows");
    std::copy(x.row(rows[r]), x.row(rows[r]) + x.cols, n.value.row(static_cast<int>(r)));
  }
  n.iaux = std::move(rows);
  n.a = a.id;
  n.rg = nodes_[a.id].rg;
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Var Tape<T>::aafm(Var q, Var k, Var v, Var bias, std::vector<std::uint8_t> exclude) {
  const Mat<T>& Q = value(q);
  const Mat<T>& K = value(k);
  const Mat<T>& V = value(v);
  const int m = Q.rows, nk = K.rows, d = Q.cols;
  if (K.cols != d || V.cols != d || V.rows != nk) shape_error("aafm");
  const Mat<T>* A = bias.valid() ? &value(bias) : nullptr;
  if (A && (A->rows != m || A->cols != nk)) shape_error("aafm bias");
  if (!exclude.empty() && exclude.size() != static_cast<std::size_t>(m) * nk) shape_error("aafm exclude");

  Node n;
  n.op = Op::kAafm;
  n.value.resize(m, d);
  n.aux.assign(static_cast<std::size_t>(m) * nk * d, T(0));  // normalized weights p_ijc
  n.aux2.assign(static_cast<std::size_t>(m) * d, T(0));      // weighted means ybar_ic
  std::vector<T> mx(d), z(d);
  for (int i = 0; i < m; ++i) {
    const std::uint8_t* ex = exclude.empty() ? nullptr : exclude.data() + static_cast<std::size_t>(i) * nk;
    std::fill(mx.begin(), mx.end(), -std::numeric_limits<T>::infinity());
    bool any = false;
    for (int j = 0; j < nk; ++j) {
      if (ex && ex[j]) continue;
      any = true;
      const T aij = A ? (*A)(i, j) : T(0);
      const T* kj = K.row(j);
      for (int c = 0; c < d; ++c) mx[c] = std::max(mx[c], aij + kj[c]);
    }
    if (!any) throw std::invalid_argument("aafm: every key is excluded for a query row");
    std::fill(z.begin(), z.end(), T(0));
    T* ybar = n.aux2.data() + static_cast<std::size_t>(i) * d;
    T* pi = n.aux.data() + static_cast<std::size_t>(i) * nk * d;
    for (int j = 0; j < nk; ++j) {
      if (ex && ex[j]) continue;
      const T aij = A ? (*A)(i, j) : T(0);
      const T* kj = K.row(j);
      const T* vj = V.row(j);
      T* pij = pi + static_cast<std::size_t>(j) * d;
      for (int c = 0; c < d; ++c) {
        const T e = std::exp(aij + kj[c] - mx[c]);
        pij[c] = e;
        z[c] += e;
        ybar[c] += e * vj[c];
      }
    }
    for (int c = 0; c < d; ++c) ybar[c] /= z[c];
    for (int j = 0; j < nk; ++j) {
      if (ex && ex[j]) continue;
      T* pij = pi + static_cast<std::size_t>(j) * d;
      for (int c = 0; c < d; ++c) pij[c] /= z[c];
    }
    const T* qi = Q.row(i);
    T* out = n.value.row(i);
    for (int c = 0; c < d; ++c) out[c] = sigmoid(qi[c]) * ybar[c];
  }
  n.a = q.id;
  n.b = k.id;
  n.c = v.id;
  n.d = bias.id;
  n.baux = std::move(exclude);
  n.rg = nodes_[q.id].rg || nodes_[k.id].rg || nodes_[v.id].rg || (bias.valid() && nodes_[bias.id].rg);
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Var Tape<T>::instance_norm(Var x, Var gamma, Var beta, T eps) {
  const Mat<T>& X = value(x);
  const Mat<T>& G = value(gamma);
  const Mat<T>& B = value(beta);
  const int m = X.rows, d = X.cols;
  if (G.rows != 1 || G.cols != d || !B.same_shape(G)) shape_error("instance_norm");
  Node n;
  n.op = Op::kInstanceNorm;
  n.value.resize(m, d);
  n.aux.assign(static_cast<std::size_t>(m) * d, T(0));  // xhat
  n.aux2.assign(d, T(0));                               // inverse std
  for (int c = 0; c < d; ++c) {
    T mean = 0;
    for (int i = 0; i < m; ++i) mean += X(i, c);
    mean /= m;
    T var = 0;
    for (int i = 0; i < m; ++i) var += (X(i, c) - mean) * (X(i, c) - mean);
    var /= m;
    const T inv = T(1) / std::sqrt(var + eps);
    n.aux2[c] = inv;
    for (int i = 0; i < m; ++i) {
      const T xh = (X(i, c) - mean) * inv;
      n.aux[static_cast<std::size_t>(i) * d + c] = xh;
      n.value(i, c) = G.data[c] * xh + B.data[c];
    }
  }
  n.a = x.id;
  n.b = gamma.id;
  n.c = beta.id;
  n.rg = nodes_[x.id].rg || nodes_[gamma.id].rg || nodes_[beta.id].rg;
  return push(std::move(n));
}

template <class T>
Mat<T> Tape<T>::masked_softmax(const Mat<T>& logits, const std::vector<std::uint8_t>& mask) {
  const int m = logits.rows, nc = logits.cols;
  Mat<T> p(m, nc);
  for (int r = 0; r < m; ++r) {
    const std::uint8_t* mk = mask.data() + static_cast<std::size_t>(r) * nc;
    T mx = -std::numeric_limits<T>::infinity();
    for (int j = 0; j < nc; ++j)
      if (mk[j]) mx = std::max(mx, logits(r, j));
    if (mx == -std::numeric_limits<T>::infinity()) throw std::invalid_argument("masked_softmax: empty mask row");
    T z = 0;
    for (int j = 0; j < nc; ++j)
      if (mk[j]) z += (p(r, j) = std::exp(logits(r, j) - mx));
    for (int j = 0; j < nc; ++j) p(r, j) /= z;
  }
  return p;
}

template <class T>
typename Tape<T>::Var Tape<T>::log_softmax_pick(Var logits, std::vector<std::uint8_t> mask, std::vector<int> picks) {
  const Mat<T>& L = value(logits);
  const int m = L.rows, nc = L.cols;
  if (mask.size() != static_cast<std::size_t>(m) * nc || picks.size() != static_cast<std::size_t>(m))
    shape_error("log_softmax_pick");
  Node n;
  n.op = Op::kLogSoftmaxPick;
  n.value.resize(m, 1);
  n.aux.assign(static_cast<std::size_t>(m) * nc, T(0));
  for (int r = 0; r < m; ++r) {
    const std::uint8_t* mk = mask.data() + static_cast<std::size_t>(r) * nc;
    if (!mk[picks[r]]) throw std::invalid_argument("log_softmax_pick: picked a masked entry");
    T mx = -std::numeric_limits<T>::infinity();
    for (int j = 0; j < nc; ++j)
      if (mk[j]) mx = std::max(mx, L(r, j));
    T z = 0;
    for (int j = 0; j < nc; ++j)
      if (mk[j]) z += std::exp(L(r, j) - mx);
    const T lse = mx + std::log(z);
    for (int j = 0; j < nc; ++j)
      if (mk[j]) n.aux[static_cast<std::size_t>(r) * nc + j] = std::exp(L(r, j) - lse);
    n.value.data[r] = L(r, picks[r]) - lse;
  }
  n.iaux = std::move(picks);
  n.baux = std::move(mask);
  n.a = logits.id;
  n.rg = nodes_[logits.id].rg;
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Var Tape<T>::weighted_sum(Var column, std::vector<T> weights) {
  const Mat<T>& x = value(column);
  if (x.cols != 1 || weights.size() != static_cast<std::size_t>(x.rows)) shape_error("weighted_sum");
  Node n;
  n.op = Op::kWeightedSum;
  n.value.resize(1, 1);
  T s = 0;
  for (int r = 0; r < x.rows; ++r) s += weights[r] * x.data[r];
  n.value.data[0] = s;
  n.aux = std::move(weights);
  n.a = column.id;
  n.rg = nodes_[column.id].rg;
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Var Tape<T>::add_n(const std::vector<Var>& scalars) {
  Node n;
  n.op = Op::kAddN;
  n.value.resize(1, 1);
  for (Var s : scalars) {
    if (value(s).size() != 1) shape_error("add_n");
    n.value.data[0] += value(s).data[0];
    n.iaux.push_back(s.id);
    n.rg = n.rg || nodes_[s.id].rg;
  }
  return push(std::move(n));
}

template <class T>
void Tape<T>::backward(Var root) {
  if (value(root).size() != 1) throw std::invalid_argument("backward: root must be a scalar");
  if (!nodes_[root.id].rg) return;
  grad_buffer(root.id).data[0] += T(1);
  run_backward();
}

template <class T>
void Tape<T>::backward(const std::vector<std::pair<Var, const Mat<T>*>>& seeds) {
  for (const auto& [v, g] : seeds) {
    if (!nodes_[v.id].rg) continue;
    Mat<T>& buf = grad_buffer(v.id);
    if (!buf.same_shape(*g)) shape_error("backward seed");
    for (std::size_t i = 0; i < g->size(); ++i) buf.data[i] += g->data[i];
  }
  run_backward();
}

template <class T>
void Tape<T>::run_backward() {
  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    const Node& n = nodes_[id];
    if (!n.rg || !n.has_grad || n.op == Op::kLeaf) continue;
    backward_node(id);
  }
}

template <class T>
void Tape<T>::backward_node(int id) {
  Node& n = nodes_[id];
  const Mat<T>& G = n.sink ? *n.sink : n.grad;
  auto rg = [&](int i) { return i >= 0 && nodes_[i].rg; };

  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kMatmul:
      if (rg(n.a)) kernels::gemm_nt(G, nodes_[n.b].val(), grad_buffer(n.a), true);
      if (rg(n.b)) kernels::gemm_tn(nodes_[n.a].val(), G, grad_buffer(n.b), true);
      break;
    case Op::kMatmulBt:
      if (rg(n.a)) kernels::gemm_nn(G, nodes_[n.b].val(), grad_buffer(n.a), true);
      if (rg(n.b)) kernels::gemm_tn(G, nodes_[n.a].val(), grad_buffer(n.b), true);
      break;
    case Op::kAdd:
      for (int in : {n.a, n.b}) {
        if (!rg(in)) continue;
        Mat<T>& g = grad_buffer(in);
        for (std::size_t i = 0; i < G.size(); ++i) g.data[i] += G.data[i];
      }
      break;
    case Op::kAddRow:
      if (rg(n.a)) {
        Mat<T>& g = grad_buffer(n.a);
        for (std::size_t i = 0; i < G.size(); ++i) g.data[i] += G.data[i];
      }
      if (rg(n.b)) {
        Mat<T>& g = grad_buffer(n.b);
        for (int i = 0; i < G.rows; ++i)
          for (int j = 0; j < G.cols; ++j) g.data[j] += G(i, j);
      }
      break;
    case Op::kScale:
      if (rg(n.a)) {
        Mat<T>& g = grad_buffer(n.a);
        for (std::size_t i = 0; i < G.size(); ++i) g.data[i] += n.scalar * G.data[i];
      }
      break;
    case Op::kScalarTimes:
      if (rg(n.a)) {
        T s = 0;
        for (std::size_t i = 0; i < G.size(); ++i) s += G.data[i] * n.cmat.data[i];
        grad_buffer(n.a).data[0] += s;
      }
      break;
    case Op::kRelu:
      if (rg(n.a)) {
        Mat<T>& g = grad_buffer(n.a);
        for (std::size_t i = 0; i < G.size(); ++i)
          if (n.value.data[i] > T(0)) g.data[i] += G.data[i];
      }
      break;
    case Op::kTanh:
      if (rg(n.a)) {
        Mat<T>& g = grad_buffer(n.a);
        for (std::size_t i = 0; i < G.size(); ++i) {
          const T y = n.value.data[i];
          g.data[i] += G.data[i] * (T(1) - y * y);
        }
      }
      break;
    case Op::kClampMin:
      if (rg(n.a)) {
        Mat<T>& g = grad_buffer(n.a);
        const Mat<T>& x = nodes_[n.a].val();
        for (std::size_t i = 0; i < G.size(); ++i)
          if (x.data[i] > n.scalar) g.data[i] += G.data[i];
      }
      break;
    case Op::kConcat: {
      int off = 0;
      for (int in : n.iaux) {
        const int w = nodes_[in].val().cols;
        if (rg(in)) {
          Mat<T>& g = grad_buffer(in);
          for (int i = 0; i < G.rows; ++i)
            for (int j = 0; j < w; ++j) g(i, j) += G(i, off + j);
        }
        off += w;
      }
      break;
    }
    case Op::kReshape:
      if (rg(n.a)) {
        Mat<T>& g = grad_buffer(n.a);
        for (std::size_t i = 0; i < G.size(); ++i) g.data[i] += G.data[i];
      }
      break;
    case Op::kSliceRows:
      if (rg(n.a)) {
        Mat<T>& g = grad_buffer(n.a);
        T* dst = g.row(n.c);
        for (std::size_t i = 0; i < G.size(); ++i) dst[i] += G.data[i];
      }
      break;
    case Op::kGatherRows:
      if (rg(n.a)) {
        Mat<T>& g = grad_buffer(n.a);
        for (std::size_t r = 0; r < n.iaux.size(); ++r) {
          T* dst = g.row(n.iaux[r]);
          const T* src = G.row(static_cast<int>(r));
          for (int j = 0; j < G.cols; ++j) dst[j] += src[j];
        }
      }
      break;
    case Op::kAafm: {
      const Mat<T>& Q = nodes_[n.a].val();
      const Mat<T>& V = nodes_[n.c].val();
      const int m = Q.rows, d = Q.cols, nk = V.rows;
      Mat<T>* gq = rg(n.a) ? &grad_buffer(n.a) : nullptr;
      Mat<T>* gk = rg(n.b) ? &grad_buffer(n.b) : nullptr;
      Mat<T>* gv = rg(n.c) ? &grad_buffer(n.c) : nullptr;
      Mat<T>* ga = rg(n.d) ? &grad_buffer(n.d) : nullptr;
      std::vector<T> dy(d);
      for (int i = 0; i < m; ++i) {
        const T* qi = Q.row(i);
        const T* gi = G.row(i);
        const T* ybar = n.aux2.data() + static_cast<std::size_t>(i) * d;
        for (int c = 0; c < d; ++c) {
          const T s = sigmoid(qi[c]);
          dy[c] = gi[c] * s;
          if (gq) (*gq)(i, c) += gi[c] * ybar[c] * s * (T(1) - s);
        }
        const std::uint8_t* ex = n.baux.empty() ? nullptr : n.baux.data() + static_cast<std::size_t>(i) * nk;
        const T* pi = n.aux.data() + static_cast<std::size_t>(i) * nk * d;
        for (int j = 0; j < nk; ++j) {
          if (ex && ex[j]) continue;
          const T* pij = pi + static_cast<std::size_t>(j) * d;
          const T* vj = V.row(j);
          T arow = 0;
          T* gkj = gk ? gk->row(j) : nullptr;
          T* gvj = gv ? gv->row(j) : nullptr;
          for (int c = 0; c < d; ++c) {
            if (gvj) gvj[c] += dy[c] * pij[c];
            const T dl = pij[c] * (vj[c] - ybar[c]) * dy[c];
            if (gkj) gkj[c] += dl;
            arow += dl;
          }
          if (ga) (*ga)(i, j) += arow;
        }
      }
      break;
    }
    case Op::kInstanceNorm: {
      const int m = G.rows, d = G.cols;
      const Mat<T>& gamma = nodes_[n.b].val();
      Mat<T>* gx = rg(n.a) ? &grad_buffer(n.a) : nullptr;
      Mat<T>* gg = rg(n.b) ? &grad_buffer(n.b) : nullptr;
      Mat<T>* gb = rg(n.c) ? &grad_buffer(n.c) : nullptr;
      for (int c = 0; c < d; ++c) {
        T sum_g = 0, sum_gx = 0;
        for (int i = 0; i < m; ++i) {
          const T g = G(i, c);
          const T xh = n.aux[static_cast<std::size_t>(i) * d + c];
          sum_g += g;
          sum_gx += g * xh;
        }
        if (gg) gg->data[c] += sum_gx;
        if (gb) gb->data[c] += sum_g;
        if (gx) {
          const T inv = n.aux2[c];
          const T gam = gamma.data[c];
          for (int i = 0; i < m; ++i) {
            const T xh = n.aux[static_cast<std::size_t>(i) * d + c];
            (*gx)(i, c) += gam * inv / m * (m * G(i, c) - sum_g - xh * sum_gx);
          }
        }
      }
      break;
    }
    case Op::kLogSoftmaxPick:
      if (rg(n.a)) {
        Mat<T>& g = grad_buffer(n.a);
        const int nc = g.cols;
        for (int r = 0; r < g.rows; ++r) {
          const T gr = G.data[r];
          const std::uint8_t* mk = n.baux.data() + static_cast<std::size_t>(r) * nc;
          const T* p = n.aux.data() + static_cast<std::size_t>(r) * nc;
          T* dst = g.row(r);
          for (int j = 0; j < nc; ++j)
            if (mk[j]) dst[j] -= gr * p[j];
          dst[n.iaux[r]] += gr;
        }
      }
      break;
    case Op::kWeightedSum:
      if (rg(n.a)) {
        Mat<T>& g = grad_buffer(n.a);
        for (std::size_t r = 0; r < n.aux.size(); ++r) g.data[r] += G.data[0] * n.aux[r];
      }
      break;
    case Op::kAddN:
      for (int in : n.iaux)
        if (rg(in)) grad_buffer(in).data[0] += G.data[0];
      break;
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace urs
