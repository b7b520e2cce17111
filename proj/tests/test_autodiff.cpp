#include <doctest.h>

#include <cmath>
#include <functional>

#include "urs/autodiff.hpp"
#include "urs/kernels.hpp"
#include "urs/rng.hpp"

using namespace urs;

namespace {

Mat<double> random_mat(Rng& rng, int r, int c, double lo = -1, double hi = 1) {
  Mat<double> m(r, c);
  for (double& x : m.data) x = rng.uniform(lo, hi);
  return m;
}

// Direct evaluation of the gated weighted average, no stabilization.
Mat<double> naive_aafm(const Mat<double>& q, const Mat<double>& k, const Mat<double>& v, const Mat<double>* a,
                       const std::vector<std::uint8_t>& ex) {
  Mat<double> out(q.rows, q.cols);
  for (int i = 0; i < q.rows; ++i)
    for (int c = 0; c < q.cols; ++c) {
      double num = 0, den = 0;
      for (int j = 0; j < k.rows; ++j) {
        if (!ex.empty() && ex[static_cast<std::size_t>(i) * k.rows + j]) continue;
        const double w = std::exp(a ? (*a)(i, j) : 0.0) * std::exp(k(j, c));
        num += w * v(j, c);
        den += w;
      }
      out(i, c) = num / den / (1.0 + std::exp(-q(i, c)));
    }
  return out;
}

}  // namespace

TEST_SUITE("autodiff") {
  TEST_CASE("serial and parallel gemm agree") {
    Rng rng(3);
    auto a = random_mat(rng, 37, 29), b = random_mat(rng, 29, 41), bt = random_mat(rng, 41, 29),
         at = random_mat(rng, 29, 37);
    Mat<double> c1, c2;
    kernels::serial::gemm_nn(a, b, c1, false);
    kernels::parallel::gemm_nn(a, b, c2, false);
    CHECK(c1 == c2);
    kernels::serial::gemm_nt(a, bt, c1, false);
    kernels::parallel::gemm_nt(a, bt, c2, false);
    CHECK(c1 == c2);
    kernels::serial::gemm_tn(at, b, c1, false);
    kernels::parallel::gemm_tn(at, b, c2, false);
    CHECK(c1 == c2);
    // Straight triple loop.
    kernels::gemm_nn(a, b, c1, false);
    for (int i = 0; i < a.rows; ++i)
      for (int j = 0; j < b.cols; ++j) {
        double s = 0;
        for (int p = 0; p < a.cols; ++p) s += a(i, p) * b(p, j);
        CHECK(std::abs(c1(i, j) - s) < 1e-12);
      }
  }

  TEST_CASE("every op matches central differences") {
    Rng rng(11);
    const int n = 5, d = 4;
    std::vector<Mat<double>> params = {
        random_mat(rng, n, d),      // 0 x
        random_mat(rng, d, d),      // 1 wq
        random_mat(rng, d, d),      // 2 wk
        random_mat(rng, d, d),      // 3 wv
        random_mat(rng, n, n),      // 4 bias
        random_mat(rng, 1, d),      // 5 gamma
        random_mat(rng, 1, d),      // 6 beta
        random_mat(rng, 1, 1, 1.2, 2.0),  // 7 alpha (above the clamp)
        random_mat(rng, 2 * d, d),  // 8 wo
        random_mat(rng, 1, d),      // 9 row
    };
    const Mat<double> cst = random_mat(rng, n, n);
    std::vector<std::uint8_t> ex(n * n, 0);
    ex[1] = ex[7] = ex[13] = 1;
    std::vector<std::uint8_t> mask(3 * n, 1);
    mask[2] = mask[9] = 0;
    const std::vector<int> picks = {1, 3, 4};

    auto build = [&](Tape<double>& t, std::vector<Mat<double>>& p, std::vector<Mat<double>>* sinks) {
      std::vector<Tape<double>::Var> v;
      for (std::size_t i = 0; i < p.size(); ++i) v.push_back(t.external(p[i], sinks ? &(*sinks)[i] : nullptr));
      auto x = v[0];
      auto q = t.matmul(x, v[1]);
      auto k = t.tanh(t.matmul(x, v[2]));
      auto val = t.matmul(x, v[3]);
      auto alpha = t.clamp_min(v[7], 1.0);
      auto bias = t.add(v[4], t.scalar_times(alpha, cst));
      auto att = t.aafm(q, k, val, bias, ex);
      auto cat = t.concat_cols({att, t.relu(x)});
      auto proj = t.add_row(t.matmul(cat, v[8]), v[9]);
      auto h = t.instance_norm(t.add(proj, x), v[5], v[6]);
      auto sq = t.reshape(t.matmul_bt(h, h), n, n);
      auto sel = t.gather_rows(t.slice_rows(sq, 1, 4), {0, 2, 3});
      auto logits = t.scale(t.tanh(sel), 3.0);
      auto lp = t.log_softmax_pick(logits, mask, picks);
      auto s1 = t.weighted_sum(lp, {0.5, -1.0, 2.0});
      return t.add_n({s1, t.weighted_sum(t.slice_rows(t.reshape(h, n * d, 1), 0, n * d),
                                         std::vector<double>(n * d, 0.1))});
    };

    std::vector<Mat<double>> grads;
    for (auto& p : params) grads.emplace_back(p.rows, p.cols);
    {
      Tape<double> t;
      auto root = build(t, params, &grads);
      t.backward(root);
    }
    auto eval = [&]() {
      Tape<double> t;
      auto root = build(t, params, nullptr);
      return t.value(root).data[0];
    };
    const double h = 1e-6;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      for (std::size_t e = 0; e < params[pi].size(); ++e) {
        const double orig = params[pi].data[e];
        params[pi].data[e] = orig + h;
        const double up = eval();
        params[pi].data[e] = orig - h;
        const double dn = eval();
        params[pi].data[e] = orig;
        const double fd = (up - dn) / (2 * h);
        const double an = grads[pi].data[e];
        CAPTURE(pi);
        CAPTURE(e);
        CHECK(std::abs(fd - an) <= 1e-6 * std::max(1.0, std::abs(fd)));
      }
    }
  }

  TEST_CASE("owned parameters receive gradients") {
    Tape<double> t;
    auto a = t.parameter(Mat<double>(1, 1, 3.0));
    auto b = t.parameter(Mat<double>(1, 1, 4.0));
    auto c = t.matmul(a, b);
    t.backward(c);
    CHECK(t.grad(a).data[0] == 4.0);
    CHECK(t.grad(b).data[0] == 3.0);
  }

  TEST_CASE("aafm stabilized form equals the naive formula") {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
      const int m = 3 + rng.uniform_int(0, 13), nk = m, d = 8;
      auto q = random_mat(rng, m, d, -5, 5), k = random_mat(rng, nk, d, -5, 5), v = random_mat(rng, nk, d, -5, 5),
           a = random_mat(rng, m, nk, -5, 5);
      std::vector<std::uint8_t> ex;
      if (trial % 2) {
        ex.assign(static_cast<std::size_t>(m) * nk, 0);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < nk; ++j)
            if (j != i && rng.uniform() < 0.3) ex[static_cast<std::size_t>(i) * nk + j] = 1;
      }
      Tape<double> t;
      auto out = t.aafm(t.constant(q), t.constant(k), t.constant(v), t.constant(a), ex);
      const auto ref = naive_aafm(q, k, v, &a, ex);
      double num = 0, den = 0;
      for (std::size_t i = 0; i < ref.size(); ++i) {
        num += std::pow(t.value(out).data[i] - ref.data[i], 2);
        den += std::pow(ref.data[i], 2);
      }
      CHECK(std::sqrt(num / den) <= 1e-12);
    }
  }

  TEST_CASE("aafm closed forms") {
    Rng rng(8);
    auto q = random_mat(rng, 1, 6), k = random_mat(rng, 1, 6), v = random_mat(rng, 1, 6), a = random_mat(rng, 1, 1);
    Tape<double> t;
    auto out = t.aafm(t.constant(q), t.constant(k), t.constant(v), t.constant(a));
    for (int c = 0; c < 6; ++c) CHECK(t.value(out)(0, c) == 1.0 / (1.0 + std::exp(-q(0, c))) * v(0, c));

    auto q2 = random_mat(rng, 3, 4), v2 = random_mat(rng, 5, 4);
    auto o2 = t.aafm(t.constant(q2), t.constant(Mat<double>(5, 4)), t.constant(v2), Tape<double>::Var{});
    for (int i = 0; i < 3; ++i)
      for (int c = 0; c < 4; ++c) {
        double mean = 0;
        for (int j = 0; j < 5; ++j) mean += v2(j, c) / 5;
        CHECK(t.value(o2)(i, c) == doctest::Approx(mean / (1.0 + std::exp(-q2(i, c)))).epsilon(1e-14));
      }

    std::vector<std::uint8_t> all(5, 1);
    CHECK_THROWS(t.aafm(t.constant(random_mat(rng, 1, 4)), t.constant(v2), t.constant(v2), Tape<double>::Var{}, all));
  }

  TEST_CASE("masked softmax support") {
    Mat<double> l(1, 4);
    l.data = {1, 2, 3, 4};
    auto p = Tape<double>::masked_softmax(l, {1, 0, 1, 0});
    CHECK(p.data[1] == 0.0);
    CHECK(p.data[3] == 0.0);
    CHECK(p.data[0] + p.data[2] == doctest::Approx(1.0));
  }
}
