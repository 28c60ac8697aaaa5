#include <cmath>
#include <cstring>

#include "doctest.h"
#include "stlstm/rng.hpp"
#include "stlstm/tensor.hpp"
#include "support/oracles.hpp"

using namespace stlstm;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = false, double lo = -2.0,
                     double hi = 2.0) {
  std::size_t total = 1;
  for (auto d : shape) total *= d;
  std::vector<double> v(total);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(shape), std::move(v), requires_grad);
}

oracle::Mat to_mat(const Tensor& t) {
  oracle::Mat m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t.at(i, j);
  return m;
}

}  // namespace

TEST_CASE("matmul identity and hand products") {
  Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor m = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor r = matmul(eye, m);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) CHECK(r.at(i, j) == m.at(i, j));

  Tensor a = Tensor::from_data({1, 2}, {1, 2});
  Tensor b = Tensor::from_data({2, 1}, {3, 4});
  CHECK(matmul(a, b).at(0, 0) == 11.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
  Rng rng(101);
  for (int trial = 0; trial < 25; ++trial) {
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 5}, rng);
    Tensor c = matmul(a, b);
    auto expect = oracle::matmul(to_mat(a), to_mat(b));
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 5; ++j)
        CHECK(c.at(i, j) == doctest::Approx(expect[i][j]).epsilon(1e-12));
  }
}

TEST_CASE("matmul rejects mismatched shapes and names both") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x2]") != std::string::npos);
  }
}

TEST_CASE("conv1d_causal identity and shift kernels") {
  Tensor x = Tensor::from_data({1, 3}, {5, 6, 7});
  Tensor k1 = Tensor::from_data({1, 1, 1}, {1});
  Tensor b0 = Tensor::zeros({1});
  Tensor y = conv1d_causal(x, k1, b0);
  CHECK(y.at(0, 0) == 5.0);
  CHECK(y.at(0, 1) == 6.0);
  CHECK(y.at(0, 2) == 7.0);

  Tensor x2 = Tensor::from_data({1, 3}, {1, 2, 3});
  Tensor current = Tensor::from_data({1, 1, 2}, {0, 1});
  Tensor y2 = conv1d_causal(x2, current, b0);
  CHECK(y2.at(0, 0) == 1.0);
  CHECK(y2.at(0, 1) == 2.0);
  CHECK(y2.at(0, 2) == 3.0);

  Tensor lagged = Tensor::from_data({1, 1, 2}, {1, 0});
  Tensor y3 = conv1d_causal(x2, lagged, b0);
  CHECK(y3.at(0, 0) == 0.0);
  CHECK(y3.at(0, 1) == 1.0);
  CHECK(y3.at(0, 2) == 2.0);
}

TEST_CASE("conv1d_causal matches nested-loop oracle") {
  Rng rng(77);
  for (int trial = 0; trial < 25; ++trial) {
    Tensor x = random_tensor({2, 8}, rng);
    Tensor k = random_tensor({3, 2, 3}, rng);
    Tensor b = random_tensor({3}, rng);
    Tensor y = conv1d_causal(x, k, b);
    std::vector<oracle::Mat> ko(3, oracle::Mat(2, std::vector<double>(3)));
    for (std::size_t co = 0; co < 3; ++co)
      for (std::size_t ci = 0; ci < 2; ++ci)
        for (std::size_t kk = 0; kk < 3; ++kk) ko[co][ci][kk] = k.at(co, ci, kk);
    std::vector<double> bo(b.data().begin(), b.data().end());
    auto expect = oracle::conv1d_causal(to_mat(x), ko, bo);
    for (std::size_t co = 0; co < 3; ++co)
      for (std::size_t t = 0; t < 8; ++t)
        CHECK(y.at(co, t) == doctest::Approx(expect[co][t]).epsilon(1e-12));
  }
}

TEST_CASE("conv1d_causal allows kernels longer than the input") {
  Tensor x = Tensor::from_data({1, 2}, {1, 1});
  Tensor k = Tensor::from_data({1, 1, 5}, {1, 1, 1, 1, 1});
  Tensor y = conv1d_causal(x, k, Tensor::zeros({1}));
  CHECK(y.at(0, 0) == 1.0);
  CHECK(y.at(0, 1) == 2.0);
}

TEST_CASE("conv1d_causal channel mismatch") {
  Tensor x = Tensor::zeros({2, 4});
  Tensor k = Tensor::zeros({1, 3, 2});
  CHECK_THROWS_AS(conv1d_causal(x, k, Tensor::zeros({1})), DimensionError);
}

TEST_CASE("conv1d_causal output is causal bit-for-bit") {
  Rng rng(5);
  Tensor k = random_tensor({2, 2, 3}, rng);
  Tensor b = random_tensor({2}, rng);
  std::vector<double> base(2 * 8);
  for (auto& v : base) v = rng.uniform(-1, 1);
  Tensor x1 = Tensor::from_data({2, 8}, base);
  auto perturbed = base;
  perturbed[7] += 3.5;   // channel 0, final step
  perturbed[15] -= 2.0;  // channel 1, final step
  Tensor x2 = Tensor::from_data({2, 8}, std::move(perturbed));
  Tensor y1 = conv1d_causal(x1, k, b);
  Tensor y2 = conv1d_causal(x2, k, b);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t t = 0; t < 7; ++t) {
      const double a = y1.at(c, t), bb = y2.at(c, t);
      CHECK(std::memcmp(&a, &bb, sizeof(double)) == 0);
    }
}

TEST_CASE("activations") {
  Tensor x = Tensor::from_data({3}, {-1, 0, 2});
  Tensor r = relu(x);
  CHECK(r.at(0) == 0.0);
  CHECK(r.at(1) == 0.0);
  CHECK(r.at(2) == 2.0);

  CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);

  Tensor p = prelu(Tensor::from_data({2}, {-2, 3}), Tensor::scalar(0.25));
  CHECK(p.at(0) == -0.5);
  CHECK(p.at(1) == 3.0);

  CHECK(activate(x, Activation::kLinear).at(2) == 2.0);
}

TEST_CASE("layer_norm normalizes to zero mean unit variance") {
  Tensor x = Tensor::from_data({3}, {1, 2, 3});
  Tensor y = layer_norm(x, Tensor::full({3}, 1.0), Tensor::zeros({3}), 0);
  double mean, var;
  std::vector<double> v(y.data().begin(), y.data().end());
  oracle::mean_var(v, mean, var);
  CHECK(std::abs(mean) < 1e-9);
  CHECK(std::abs(var - 1.0) < 1e-9);
}

TEST_CASE("layer_norm maps constant input to zero") {
  Tensor x = Tensor::from_data({3}, {5, 5, 5});
  Tensor y = layer_norm(x, Tensor::full({3}, 1.0), Tensor::zeros({3}), 0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(y.at(i) == 0.0);
}

TEST_CASE("layer_norm matches direct mean/variance oracle") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({6}, rng);
    Tensor gain = random_tensor({6}, rng);
    Tensor bias = random_tensor({6}, rng);
    Tensor y = layer_norm(x, gain, bias, 0);
    double mean, var;
    std::vector<double> v(x.data().begin(), x.data().end());
    oracle::mean_var(v, mean, var);
    for (std::size_t i = 0; i < 6; ++i) {
      const double xh = (x.at(i) - mean) / std::sqrt(var);
      CHECK(y.at(i) == doctest::Approx(gain.at(i) * xh + bias.at(i)).epsilon(1e-12));
    }
  }
}

TEST_CASE("layer_norm per-column on matrices") {
  Rng rng(13);
  Tensor x = random_tensor({4, 3}, rng);
  Tensor y = layer_norm(x, Tensor::full({4}, 1.0), Tensor::zeros({4}), 0);
  for (std::size_t j = 0; j < 3; ++j) {
    std::vector<double> col(4);
    for (std::size_t i = 0; i < 4; ++i) col[i] = y.at(i, j);
    double mean, var;
    oracle::mean_var(col, mean, var);
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(var - 1.0) < 1e-9);
  }
}

TEST_CASE("backward differentiates x squared") {
  Tensor x = Tensor::scalar(3.0, true);
  x.zero_grad();
  Tape tape;
  Tensor loss = mul(x, x);
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("backward accumulates across fan-out") {
  Tensor x = Tensor::scalar(2.0, true);
  x.zero_grad();
  Tape tape;
  Tensor loss = add(mul(x, x), scale(x, 3.0));  // x^2 + 3x, d/dx = 2x + 3
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(7.0).epsilon(1e-12));
}

TEST_CASE("backward of sum(A.B) matches finite differences") {
  Rng rng(31);
  Tensor a = random_tensor({3, 4}, rng, true);
  Tensor b = random_tensor({4, 2}, rng, true);
  auto f = [&] { return sum(matmul(a, b)); };
  auto r = grad_check(f, {{"a", a}, {"b", b}});
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("backward requires a scalar loss on the live tape") {
  Tensor x = Tensor::from_data({2}, {1, 2}, true);
  Tape tape;
  Tensor y = scale(x, 2.0);
  CHECK_THROWS_AS(tape.backward(y), ContractError);

  Tensor c = Tensor::scalar(1.0);  // constant, never recorded
  CHECK_THROWS_AS(tape.backward(c), ContractError);
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(77);
  Tensor w = random_tensor({3, 3}, rng, true);
  Tensor x = random_tensor({3, 3}, rng);
  const double a = 3.75;
  std::vector<double> g1, g2;
  {
    w.zero_grad();
    Tape tape;
    tape.backward(sum(matmul(x, w)));
    g1.assign(w.grad().begin(), w.grad().end());
  }
  {
    w.zero_grad();
    Tape tape;
    tape.backward(scale(sum(matmul(x, w)), a));
    g2.assign(w.grad().begin(), w.grad().end());
  }
  for (std::size_t i = 0; i < g1.size(); ++i)
    CHECK(g2[i] == doctest::Approx(a * g1[i]).epsilon(1e-12));
}

TEST_CASE("grad_check on elementary functions") {
  Tensor x = Tensor::scalar(3.0, true);
  auto fx = [&] { return mul(x, x); };
  CHECK(grad_check(fx, {{"x", x}}).max_rel_error < 1e-8);

  Rng rng(9);
  Tensor w = random_tensor({4}, rng, true);
  Tensor v = random_tensor({4}, rng);
  auto chain = [&] { return sum(sigmoid(mul(w, v))); };
  CHECK(grad_check(chain, {{"w", w}}).max_rel_error < 1e-6);
}

TEST_CASE("identical graphs give bit-identical values and gradients") {
  Rng rng(55);
  Tensor w = random_tensor({4, 4}, rng, true);
  Tensor x = random_tensor({4, 4}, rng);
  auto run = [&](std::vector<double>& grads) {
    w.zero_grad();
    Tape tape;
    Tensor loss = sum(tanh(matmul(x, w)));
    tape.backward(loss);
    grads.assign(w.grad().begin(), w.grad().end());
    return loss.item();
  };
  std::vector<double> ga, gb;
  const double la = run(ga), lb = run(gb);
  CHECK(std::memcmp(&la, &lb, sizeof(double)) == 0);
  CHECK(std::memcmp(ga.data(), gb.data(), ga.size() * sizeof(double)) == 0);
}

TEST_CASE("check_finite flags NaN and Inf") {
  Tensor ok = Tensor::from_data({2}, {1.0, 2.0});
  CHECK_NOTHROW(ok.check_finite("ok"));
  CHECK(ok.all_finite());
  Tensor bad = Tensor::from_data({2}, {1.0, std::nan("")});
  CHECK_FALSE(bad.all_finite());
  CHECK_THROWS_AS(bad.check_finite("bad"), NumericalError);
}

TEST_CASE("structural ops route gradients to the right slots") {
  Rng rng(21);
  Tensor a = random_tensor({2, 3}, rng, true);
  Tensor b = random_tensor({2, 3}, rng, true);
  auto f = [&] {
    Tensor cat = concat(a, b, 1);               // [2 x 6]
    Tensor s = slice_cols(cat, 2, 3);           // straddles the seam
    Tensor r = row(cat, 1);
    return add(sum(mul(s, s)), dot(r, r));
  };
  CHECK(grad_check(f, {{"a", a}, {"b", b}}).max_rel_error < 1e-6);

  Tensor m1 = random_tensor({2, 4}, rng, true);
  Tensor m2 = random_tensor({2, 4}, rng, true);
  auto g = [&] {
    Tensor t0 = gather_timestep({m1, m2}, 1);   // [2 x 2]
    Tensor ns = node_series({t0, t0, t0}, 1);   // [2 x 3]
    Tensor st = stack_steps({t0, t0});          // [2 x 2 x 2]
    return add(sum(mul(ns, ns)), sum(mul(st, st)));
  };
  CHECK(grad_check(g, {{"m1", m1}, {"m2", m2}}).max_rel_error < 1e-6);
}
