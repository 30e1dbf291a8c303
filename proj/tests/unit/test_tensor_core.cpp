#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "../oracles/oracles.hpp"
#include "helpers.hpp"
#include "tenet/ops.hpp"
#include "tenet/optim.hpp"
#include "tenet/tape.hpp"
#include "tenet/tensor.hpp"

using namespace tenet;
using testing::gradient_check;
using testing::random_tensor;

namespace {

Tensor conv_eval(const Tensor& x, const Tensor& k, std::size_t stride, std::size_t pad) {
  Tape tape;
  return ops::conv2d(tape.constant(x), tape.constant(k), stride, pad).value();
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("shape and element count agree") {
    Tensor t({2, 3, 4});
    CHECK(t.size() == 24);
    CHECK(numel({2, 3, 4}) == 24);
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>(3)), DimensionError);
    CHECK_THROWS_AS(t.reshaped({5, 5}), DimensionError);
    CHECK(t.reshaped({6, 4}).shape() == Shape{6, 4});
  }

  TEST_CASE("multi-index access is row-major") {
    Tensor t({2, 3});
    t.at({1, 2}) = 5.0f;
    CHECK(t[5] == 5.0f);
    CHECK_THROWS(t.at({1}));
  }

  TEST_CASE("all_finite detects NaN and Inf") {
    Tensor t({100}, 1.0f);
    CHECK(t.all_finite());
    t[57] = std::numeric_limits<float>::quiet_NaN();
    CHECK_FALSE(t.all_finite());
    t[57] = -std::numeric_limits<float>::infinity();
    CHECK_FALSE(t.all_finite());
  }

  TEST_CASE("stack and slice are inverse") {
    std::mt19937_64 rng(1);
    std::vector<Tensor> items = {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)};
    Tensor s = stack(items);
    CHECK(s.shape() == Shape{2, 2, 3});
    CHECK(bitwise_equal(s.slice(1), items[1]));
  }
}

TEST_SUITE("tape") {
  TEST_CASE("grad of sum is all ones") {
    std::mt19937_64 rng(2);
    Tape tape;
    Var x = tape.leaf(random_tensor({2, 3, 4}, rng));
    tape.backward(ops::sum(x));
    REQUIRE(x.grad() != nullptr);
    for (float g : x.grad()->data()) CHECK(g == 1.0f);
  }

  TEST_CASE("grad of sum(x*x) is 2x") {
    Tape tape;
    Var x = tape.leaf(Tensor({3}, {1.0f, 2.0f, 3.0f}));
    tape.backward(ops::sum(ops::hadamard(x, x)));
    CHECK(x.grad()->data()[0] == 2.0f);
    CHECK(x.grad()->data()[1] == 4.0f);
    CHECK(x.grad()->data()[2] == 6.0f);
  }

  TEST_CASE("constants receive no gradient") {
    Tape tape;
    Var c = tape.constant(Tensor({3}, 1.0f));
    Var x = tape.leaf(Tensor({3}, 2.0f));
    tape.backward(ops::sum(ops::hadamard(c, x)));
    CHECK(c.grad() == nullptr);
    CHECK(x.grad() != nullptr);
  }

  TEST_CASE("non-scalar loss is rejected") {
    Tape tape;
    Var x = tape.leaf(Tensor({3}, 2.0f));
    CHECK_THROWS_AS(tape.backward(x), TapeError);
  }

  TEST_CASE("a consumed tape rejects a second backward and new ops until reset") {
    Tape tape;
    Var x = tape.leaf(Tensor({3}, 2.0f));
    Var s = ops::sum(x);
    tape.backward(s);
    CHECK(tape.consumed());
    CHECK_THROWS_AS(tape.backward(s), TapeError);
    CHECK_THROWS_AS(tape.leaf(Tensor({1})), TapeError);
    tape.reset();
    CHECK_FALSE(tape.consumed());
    Var y = tape.leaf(Tensor({2}, 1.0f));
    tape.backward(ops::sum(y));
    CHECK(y.grad()->data()[0] == 1.0f);
  }

  TEST_CASE("handles from a different tape are rejected") {
    Tape a, b;
    Var x = a.leaf(Tensor({2}, 1.0f));
    CHECK_THROWS_AS(b.backward(x), TapeError);
  }

  TEST_CASE("backward visits nodes in reverse order of recording") {
    // Each node's rule records its id; inputs are always recorded earlier.
    Tape tape;
    std::vector<int> order;
    Var x = tape.leaf(Tensor({1}, 1.0f));
    Var prev = x;
    for (int k = 0; k < 5; ++k) {
      prev = tape.record("probe", prev.value(), {prev},
                         [k, prev, &order](Tape& t, const Tensor& g) {
                           order.push_back(k);
                           *t.grad_sink(prev) = g;
                         });
    }
    tape.backward(prev);
    CHECK(order == std::vector<int>{4, 3, 2, 1, 0});
    CHECK(x.grad()->data()[0] == 1.0f);
  }

  TEST_CASE("non-finite op output is surfaced with op name and step") {
    Tape tape(12);
    Var x = tape.leaf(Tensor({2}, {1.0f, 0.0f}));
    try {
      ops::scale(x, std::numeric_limits<float>::infinity());
      FAIL("expected NonFiniteError");
    } catch (const NonFiniteError& e) {
      CHECK(e.op() == "scale");
      CHECK(e.step() == 12);
    }
  }

  TEST_CASE("NaN inputs are rejected at the boundary") {
    Tape tape;
    CHECK_THROWS_AS(tape.constant(Tensor({1}, std::numeric_limits<float>::quiet_NaN())),
                    NonFiniteError);
  }

  TEST_CASE("parameters accumulate gradients across backward passes") {
    Parameter p{"w", Tensor({2}, 1.0f), {}};
    for (int k = 0; k < 2; ++k) {
      Tape tape;
      tape.backward(ops::sum(tape.parameter(p)));
    }
    CHECK(p.grad.data()[0] == 2.0f);
  }
}

TEST_SUITE("ops") {
  TEST_CASE("conv2d of ones with ones kernel sums to 9") {
    Tensor y = conv_eval(Tensor::ones({1, 1, 3, 3}), Tensor::ones({1, 1, 3, 3}), 1, 0);
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y[0] == 9.0f);
  }

  TEST_CASE("conv2d with centred identity kernel is the identity") {
    std::mt19937_64 rng(3);
    Tensor x = random_tensor({2, 1, 5, 4}, rng);
    Tensor k({1, 1, 3, 3}, 0.0f);
    k.at({0, 0, 1, 1}) = 1.0f;
    CHECK(bitwise_equal(conv_eval(x, k, 1, 1), x));
  }

  TEST_CASE("conv2d matches the naive oracle") {
    std::mt19937_64 rng(4);
    for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 0}, {1, 1}, {2, 1}, {2, 0}}) {
      Tensor x = random_tensor({1, 2, 5, 5}, rng);
      Tensor k = random_tensor({3, 2, 3, 3}, rng);
      Tensor got = conv_eval(x, k, stride, pad);
      oracle::Map4 want = oracle::conv2d(oracle::from_tensor(x), oracle::to_double(k), 3, 3,
                                         stride, pad);
      REQUIRE(got.size() == want.v.size());
      CHECK(got.shape() == Shape{1, 3, want.h, want.w});
      for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want.v[i]) < 1e-6);
    }
  }

  TEST_CASE("conv2d output extent") {
    CHECK(ops::conv_output_extent(32, 3, 1, 1) == 32);
    CHECK(ops::conv_output_extent(7, 3, 2, 0) == 3);
    CHECK_THROWS_AS(ops::conv_output_extent(2, 5, 1, 1), DimensionError);
    CHECK_THROWS_AS(ops::conv_output_extent(5, 3, 0, 0), DimensionError);
  }

  TEST_CASE("conv2d rejects mismatched channels") {
    Tape tape;
    CHECK_THROWS_AS(ops::conv2d(tape.constant(Tensor({1, 2, 4, 4})),
                                tape.constant(Tensor({1, 3, 3, 3})), 1, 0),
                    DimensionError);
  }

  TEST_CASE("conv2d is linear in the input") {
    std::mt19937_64 rng(5);
    Tensor x = random_tensor({2, 3, 6, 6}, rng);
    Tensor y = random_tensor({2, 3, 6, 6}, rng);
    Tensor k = random_tensor({4, 3, 3, 3}, rng);
    const float a = 0.7f, b = -1.3f;
    Tensor mix(x.shape());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
    Tensor lhs = conv_eval(mix, k, 1, 1);
    Tensor cx = conv_eval(x, k, 1, 1), cy = conv_eval(y, k, 1, 1);
    for (std::size_t i = 0; i < lhs.size(); ++i) CHECK(std::abs(lhs[i] - (a * cx[i] + b * cy[i])) < 1e-5);
  }

  TEST_CASE("elementwise examples") {
    Tape tape;
    CHECK(ops::sigmoid(tape.constant(Tensor({1}, 0.0f))).value()[0] == 0.5f);
    std::mt19937_64 rng(6);
    Tensor x = random_tensor({3, 4}, rng);
    CHECK(bitwise_equal(ops::hadamard(tape.constant(x), tape.constant(Tensor::ones({3, 4}))).value(), x));
    Tensor s = ops::scale_add(tape.constant(Tensor({2}, 1.0f)), tape.constant(Tensor({2}, 2.0f)), 0.5f).value();
    CHECK(s[0] == 2.0f);
  }

  TEST_CASE("sigmoid stays strictly inside (0, 1) for extreme inputs") {
    for (float v : {-1e4f, -100.0f, -20.0f, 0.0f, 20.0f, 100.0f, 1e4f}) {
      const float s = ops::stable_sigmoid(v);
      CHECK(s > 0.0f);
      CHECK(s < 1.0f);
    }
  }

  TEST_CASE("relu gradient at -1 and +1") {
    Tape tape;
    Var x = tape.leaf(Tensor({2}, {-1.0f, 1.0f}));
    Var y = ops::relu(x);
    CHECK(y.value()[0] == 0.0f);
    tape.backward(ops::sum(y));
    CHECK(x.grad()->data()[0] == 0.0f);
    CHECK(x.grad()->data()[1] == 1.0f);
  }

  TEST_CASE("hadamard broadcasts a single map across channels") {
    std::mt19937_64 rng(7);
    Tensor a = random_tensor({2, 3, 2, 2}, rng);
    Tensor m = random_tensor({2, 1, 2, 2}, rng);
    Tape tape;
    Tensor y = ops::hadamard(tape.constant(a), tape.constant(m)).value();
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t p = 0; p < 4; ++p)
          CHECK(y[(n * 3 + c) * 4 + p] == a[(n * 3 + c) * 4 + p] * m[n * 4 + p]);
    CHECK_THROWS_AS(ops::hadamard(tape.constant(a), tape.constant(Tensor({2, 2, 2, 2}))),
                    DimensionError);
  }

  TEST_CASE("reduction examples") {
    Tape tape;
    CHECK(ops::spatial_mean(tape.constant(Tensor({2, 2}, {1, 2, 3, 4}))).value()[0] == 2.5f);
    CHECK(ops::max_pool2d(tape.constant(Tensor({1, 1, 2, 2}, {1, 2, 3, 4})), 2, 2).value()[0] == 4.0f);
    Var ce = ops::softmax_cross_entropy(tape.constant(Tensor({1, 10}, 0.0f)), std::vector<int>{3});
    CHECK(ce.value()[0] == doctest::Approx(std::log(10.0)).epsilon(1e-6));
    CHECK_THROWS_AS(ops::spatial_mean(tape.constant(Tensor({2, 0, 3}))), DimensionError);
  }

  TEST_CASE("cross entropy rejects out-of-range labels") {
    Tape tape;
    Var z = tape.constant(Tensor({2, 3}, 0.0f));
    CHECK_THROWS(ops::softmax_cross_entropy(z, std::vector<int>{0, 3}));
    CHECK_THROWS(ops::softmax_cross_entropy(z, std::vector<int>{-1, 0}));
    CHECK_THROWS(ops::softmax_cross_entropy(z, std::vector<int>{0}));
  }

  TEST_CASE("cross entropy gradient is softmax minus one-hot and sums to zero") {
    std::mt19937_64 rng(8);
    Tensor z = random_tensor({4, 10}, rng, -3.0f, 3.0f);
    std::vector<int> labels = {0, 9, 4, 4};
    Tape tape;
    Var zv = tape.leaf(z);
    Var ce = ops::softmax_cross_entropy(zv, labels);
    CHECK(ce.value()[0] >= 0.0f);
    tape.backward(ce);
    const Tensor& g = *zv.grad();
    for (std::size_t n = 0; n < 4; ++n) {
      double mx = -1e9, zs = 0.0, row = 0.0;
      for (std::size_t k = 0; k < 10; ++k) mx = std::max(mx, double(z[n * 10 + k]));
      for (std::size_t k = 0; k < 10; ++k) zs += std::exp(z[n * 10 + k] - mx);
      for (std::size_t k = 0; k < 10; ++k) {
        const double p = std::exp(z[n * 10 + k] - mx) / zs;
        const double want = (p - (static_cast<int>(k) == labels[n] ? 1.0 : 0.0)) / 4.0;
        CHECK(std::abs(g[n * 10 + k] - want) < 1e-6);
        row += g[n * 10 + k];
      }
      CHECK(std::abs(row) < 1e-6);
    }
  }

  TEST_CASE("group ops match direct loops") {
    std::mt19937_64 rng(9);
    Tensor x = random_tensor({2, 5, 2, 3}, rng);
    std::vector<ops::GroupIds> ids = {{0, 1, 0, 2, 1}, {2, 2, 1, 0, 0}};
    Tensor w = random_tensor({2, 5}, rng);
    Tape tape;
    Var xv = tape.constant(x);
    Tensor s = ops::group_sum(xv, ids, 3).value();
    Tensor m = ops::group_weighted_mean(xv, w, ids, 3).value();
    Tensor g = ops::gather_groups(tape.constant(s), ids, 5).value();
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t l = 0; l < 3; ++l)
        for (std::size_t p = 0; p < 6; ++p) {
          float sum = 0.0f;
          double wsum = 0.0;
          int count = 0;
          for (std::size_t c = 0; c < 5; ++c) {
            if (ids[n][c] != l) continue;
            sum += x[(n * 5 + c) * 6 + p];
            wsum += double(w[n * 5 + c]) * x[(n * 5 + c) * 6 + p];
            ++count;
          }
          CHECK(s[(n * 3 + l) * 6 + p] == doctest::Approx(sum).epsilon(1e-6));
          CHECK(m[(n * 3 + l) * 6 + p] == doctest::Approx(wsum / count).epsilon(1e-5));
        }
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t c = 0; c < 5; ++c)
        for (std::size_t p = 0; p < 6; ++p)
          CHECK(g[(n * 5 + c) * 6 + p] == s[(n * 3 + ids[n][c]) * 6 + p]);
  }

  TEST_CASE("group_product flushes tiny products") {
    Tape tape;
    Tensor x({1, 2, 1, 2}, {1e-20f, 1.0f, 1e-20f, 1.0f});
    Tensor y = ops::group_product(tape.constant(x)).value();
    CHECK(y[0] == 0.0f);
    CHECK(y[1] == 1.0f);
  }
}

TEST_SUITE("gradients") {
  using testing::away_from_zero;

  TEST_CASE("conv2d gradient w.r.t. input and kernel") {
    std::mt19937_64 rng(10);
    for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 1}, {2, 0}}) {
      auto err = gradient_check(
          [=](Tape&, const std::vector<Var>& v) { return ops::conv2d(v[0], v[1], stride, pad); },
          {random_tensor({2, 2, 5, 5}, rng), random_tensor({3, 2, 3, 3}, rng)});
      CHECK(err[0] < 1e-3);
      CHECK(err[1] < 1e-3);
    }
  }

  TEST_CASE("bias, relu, sigmoid, scale, add, scale_add, hadamard") {
    std::mt19937_64 rng(11);
    auto e1 = gradient_check([](Tape&, const std::vector<Var>& v) { return ops::add_channel_bias(v[0], v[1]); },
                             {random_tensor({2, 3, 2, 2}, rng), random_tensor({3}, rng)});
    CHECK(e1[0] < 1e-3);
    CHECK(e1[1] < 1e-3);
    auto e2 = gradient_check([](Tape&, const std::vector<Var>& v) { return ops::relu(v[0]); },
                             {away_from_zero({3, 4}, rng, 0.01f)});
    CHECK(e2[0] < 1e-3);
    auto e3 = gradient_check([](Tape&, const std::vector<Var>& v) { return ops::sigmoid(v[0]); },
                             {random_tensor({3, 4}, rng, -3.0f, 3.0f)});
    CHECK(e3[0] < 1e-3);
    auto e4 = gradient_check([](Tape&, const std::vector<Var>& v) { return ops::scale(v[0], -1.7f); },
                             {random_tensor({5}, rng)});
    CHECK(e4[0] < 1e-3);
    auto e5 = gradient_check([](Tape&, const std::vector<Var>& v) { return ops::scale_add(v[0], v[1], 0.3f); },
                             {random_tensor({5}, rng), random_tensor({5}, rng)});
    CHECK(e5[0] < 1e-3);
    CHECK(e5[1] < 1e-3);
    auto e6 = gradient_check([](Tape&, const std::vector<Var>& v) { return ops::add(v[0], v[1]); },
                             {random_tensor({5}, rng), random_tensor({5}, rng)});
    CHECK(e6[1] < 1e-3);
    auto e7 = gradient_check([](Tape&, const std::vector<Var>& v) { return ops::hadamard(v[0], v[1]); },
                             {random_tensor({2, 3, 2, 2}, rng), random_tensor({2, 1, 2, 2}, rng)});
    CHECK(e7[0] < 1e-3);
    CHECK(e7[1] < 1e-3);
  }

  TEST_CASE("pooling and reductions") {
    std::mt19937_64 rng(12);
    // Distinct, well separated values keep the pooling winner fixed.
    Tensor x({1, 2, 4, 4});
    std::vector<float> vals(32);
    for (std::size_t i = 0; i < 32; ++i) vals[i] = 0.05f * static_cast<float>(i);
    std::shuffle(vals.begin(), vals.end(), rng);
    std::copy(vals.begin(), vals.end(), x.data().begin());
    auto e1 = gradient_check([](Tape&, const std::vector<Var>& v) { return ops::max_pool2d(v[0], 2, 2); }, {x});
    CHECK(e1[0] < 1e-3);
    auto e2 = gradient_check([](Tape&, const std::vector<Var>& v) { return ops::spatial_mean(v[0]); },
                             {random_tensor({2, 3, 3, 2}, rng)});
    CHECK(e2[0] < 1e-3);
    auto e3 = gradient_check([](Tape&, const std::vector<Var>& v) { return ops::global_avg_pool(v[0]); },
                             {random_tensor({2, 3, 3, 2}, rng)});
    CHECK(e3[0] < 1e-3);
    auto e4 = gradient_check([](Tape&, const std::vector<Var>& v) { return ops::dense(v[0], v[1], v[2]); },
                             {random_tensor({3, 4}, rng), random_tensor({2, 4}, rng), random_tensor({2}, rng)});
    for (double e : e4) CHECK(e < 1e-3);
    auto e5 = gradient_check([](Tape&, const std::vector<Var>& v) { return ops::mean(v[0]); },
                             {random_tensor({7}, rng)});
    CHECK(e5[0] < 1e-3);
  }

  TEST_CASE("cross entropy and column selection") {
    std::mt19937_64 rng(13);
    const std::vector<int> labels = {1, 0, 2};
    auto e1 = gradient_check(
        [&](Tape&, const std::vector<Var>& v) { return ops::softmax_cross_entropy(v[0], labels); },
        {random_tensor({3, 3}, rng, -2.0f, 2.0f)});
    CHECK(e1[0] < 1e-3);
    auto e2 = gradient_check(
        [&](Tape&, const std::vector<Var>& v) { return ops::softmax_cross_entropy_per_sample(v[0], labels); },
        {random_tensor({3, 3}, rng, -2.0f, 2.0f)});
    CHECK(e2[0] < 1e-3);
    const std::vector<std::size_t> cols = {2, 0, 1};
    auto e3 = gradient_check([&](Tape&, const std::vector<Var>& v) { return ops::select_columns(v[0], cols); },
                             {random_tensor({3, 3}, rng)});
    CHECK(e3[0] < 1e-3);
  }

  TEST_CASE("group ops") {
    std::mt19937_64 rng(14);
    std::vector<ops::GroupIds> ids = {{0, 1, 0, 2, 1}, {2, 2, 1, 0, 0}};
    Tensor w = random_tensor({2, 5}, rng);
    auto e1 = gradient_check([&](Tape&, const std::vector<Var>& v) { return ops::group_sum(v[0], ids, 3); },
                             {random_tensor({2, 5, 2, 2}, rng)});
    CHECK(e1[0] < 1e-3);
    auto e2 = gradient_check(
        [&](Tape&, const std::vector<Var>& v) { return ops::group_weighted_mean(v[0], w, ids, 3); },
        {random_tensor({2, 5, 2, 2}, rng)});
    CHECK(e2[0] < 1e-3);
    auto e3 = gradient_check([&](Tape&, const std::vector<Var>& v) { return ops::gather_groups(v[0], ids, 5); },
                             {random_tensor({2, 3, 2, 2}, rng)});
    CHECK(e3[0] < 1e-3);
    auto e4 = gradient_check([](Tape&, const std::vector<Var>& v) { return ops::group_product(v[0]); },
                             {random_tensor({2, 3, 2, 2}, rng, 0.5f, 1.5f)});
    CHECK(e4[0] < 1e-3);
  }
}

TEST_SUITE("sgd") {
  TEST_CASE("plain step") {
    std::vector<Parameter> p = {{"p", Tensor({1}, 1.0f), Tensor({1}, 1.0f)}};
    SgdState state;
    sgd_update(p, {0.1f, 0.0f, 0.0f, 0.0f}, state);
    CHECK(p[0].value[0] == doctest::Approx(0.9f));
  }

  TEST_CASE("zero gradient without decay leaves parameters unchanged") {
    std::mt19937_64 rng(15);
    Tensor v = random_tensor({4, 4}, rng);
    std::vector<Parameter> p = {{"p", v, Tensor::zeros({4, 4})}};
    SgdState state;
    for (int k = 0; k < 3; ++k) sgd_update(p, {0.1f, 0.9f, 0.0f, 0.0f}, state);
    CHECK(bitwise_equal(p[0].value, v));
  }

  TEST_CASE("momentum and weight decay follow the update rule") {
    std::vector<Parameter> p = {{"p", Tensor({1}, 2.0f), Tensor({1}, 0.5f)}};
    SgdState state;
    const SgdConfig cfg{0.1f, 0.9f, 0.01f, 0.0f};
    sgd_update(p, cfg, state);
    // g = 0.5 + 0.02 = 0.52, v = 0.52, p = 2 - 0.052
    CHECK(p[0].value[0] == doctest::Approx(1.948f).epsilon(1e-6));
    sgd_update(p, cfg, state);
    const double g = 0.5 + 0.01 * 1.948, v = 0.9 * 0.52 + g;
    CHECK(p[0].value[0] == doctest::Approx(1.948 - 0.1 * v).epsilon(1e-6));
  }

  TEST_CASE("gradient norm clipping caps the global norm") {
    std::vector<Parameter> p = {{"a", Tensor({1}, 0.0f), Tensor({1}, 3.0f)},
                                {"b", Tensor({1}, 0.0f), Tensor({1}, 4.0f)}};
    SgdState state;
    sgd_update(p, {1.0f, 0.0f, 0.0f, 1.0f}, state);
    CHECK(p[0].value[0] == doctest::Approx(-0.6f));
    CHECK(p[1].value[0] == doctest::Approx(-0.8f));
  }

  TEST_CASE("NaN gradient aborts naming the parameter") {
    std::vector<Parameter> p = {{"conv0.weight", Tensor({1}, 1.0f),
                                 Tensor({1}, std::numeric_limits<float>::quiet_NaN())}};
    SgdState state;
    try {
      sgd_update(p, {}, state);
      FAIL("expected NonFiniteError");
    } catch (const NonFiniteError& e) {
      CHECK(e.op().find("conv0.weight") != std::string::npos);
    }
    CHECK(p[0].value[0] == 1.0f);
  }

  TEST_CASE("non-positive learning rate is rejected") {
    std::vector<Parameter> p = {{"p", Tensor({1}, 1.0f), Tensor({1}, 1.0f)}};
    SgdState state;
    CHECK_THROWS(sgd_update(p, {0.0f, 0.0f, 0.0f, 0.0f}, state));
  }
}
