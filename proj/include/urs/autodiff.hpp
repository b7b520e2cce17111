#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "urs/tensor.hpp"

namespace urs {

// Reverse-mode tape over dense matrices. Values are computed eagerly; the
// tape records enough to run backward once. Instantiated for float (training)
// and double (gradient checks).
template <class T>
class Tape {
 public:
  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves.
  Var constant(Mat<T> value);
  Var parameter(Mat<T> value);  // owned, gradient readable through grad()
  // Borrowed value (must outlive the tape). Gradients accumulate into *sink
  // when sink is non-null; sink must already have the value's shape.
  Var external(const Mat<T>& value, Mat<T>* sink);

  const Mat<T>& value(Var v) const;
  const Mat<T>& grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].rg; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  Var matmul(Var a, Var b);     // a * b
  Var matmul_bt(Var a, Var b);  // a * b^T
  Var add(Var a, Var b);
  Var add_row(Var a, Var row);  // broadcast a 1 x n row over every row of a
  Var scale(Var a, T s);
  Var scalar_times(Var alpha, Mat<T> c);  // alpha (1 x 1) times a constant matrix
  Var relu(Var a);
  Var tanh(Var a);
  Var clamp_min(Var a, T lo);
  Var concat_cols(const std::vector<Var>& parts);
  Var reshape(Var a, int rows, int cols);
  Var slice_rows(Var a, int begin, int count);
  Var gather_rows(Var a, std::vector<int> rows);

  // Attention-free weighting: out_i = sigmoid(q_i) * sum_j w_ij * v_j with
  // w_ij proportional (per channel) to exp(A_ij + k_j). bias may be invalid
  // (treated as zero); exclude is row-major m x n with 1 = excluded, or empty.
  Var aafm(Var q, Var k, Var v, Var bias, std::vector<std::uint8_t> exclude = {});

  // Per-column normalization over rows, then gamma * xhat + beta.
  Var instance_norm(Var x, Var gamma, Var beta, T eps = T(1e-5));

  // Row-wise log-softmax restricted to mask (m x n, 1 = selectable), picking
  // column picks[r] of each row. Result is m x 1.
  Var log_softmax_pick(Var logits, std::vector<std::uint8_t> mask, std::vector<int> picks);

  Var weighted_sum(Var column, std::vector<T> weights);  // sum_r w_r * column_r, 1 x 1
  Var add_n(const std::vector<Var>& scalars);            // 1 x 1 inputs

  void backward(Var root);
  void backward(const std::vector<std::pair<Var, const Mat<T>*>>& seeds);

  // Probabilities of a masked softmax over each row (no recording).
  static Mat<T> masked_softmax(const Mat<T>& logits, const std::vector<std::uint8_t>& mask);

 private:
  enum class Op : std::uint8_t {
    kLeaf,
    kMatmul,
    kMatmulBt,
    kAdd,
    kAddRow,
    kScale,
    kScalarTimes,
    kRelu,
    kTanh,
    kClampMin,
    kConcat,
    kReshape,
    kSliceRows,
    kGatherRows,
    kAafm,
    kInstanceNorm,
    kLogSoftmaxPick,
    kWeightedSum,
    kAddN,
  };

  struct Node {
    Op op = Op::kLeaf;
    bool rg = false;
    bool has_grad = false;
    int a = -1, b = -1, c = -1, d = -1;
    T scalar = T(0);
    Mat<T> value;
    const Mat<T>* ext = nullptr;
    Mat<T>* sink = nullptr;
    Mat<T> grad;
    Mat<T> cmat;
    std::vector<T> aux;
    std::vector<T> aux2;
    std::vector<int> iaux;
    std::vector<std::uint8_t> baux;

    const Mat<T>& val() const { return ext ? *ext : value; }
  };

  Var push(Node&& n);
  Mat<T>& grad_buffer(int id);
  void run_backward();
  void backward_node(int id);

  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace urs
