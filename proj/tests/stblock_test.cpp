#include <cmath>
#include <cstring>

#include "doctest.h"
#include "stlstm/graph.hpp"
#include "stlstm/stblock.hpp"
#include "support/oracles.hpp"

using namespace stlstm;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = false) {
  std::size_t total = 1;
  for (auto d : shape) total *= d;
  std::vector<double> v(total);
  for (auto& x : v) x = rng.uniform(-1.5, 1.5);
  return Tensor::from_data(std::move(shape), std::move(v), requires_grad);
}

oracle::Mat to_mat(const Tensor& t) {
  oracle::Mat m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t.at(i, j);
  return m;
}

STBlockParams zero_block(std::size_t c_in, std::size_t c_h, std::size_t c_g0,
                         std::size_t c_g1, std::size_t c_out, std::size_t k) {
  STBlockParams p;
  p.tcn_in = {Tensor::zeros({c_h, c_in, k}, true), Tensor::zeros({c_h}, true),
              Tensor::zeros({c_h, c_in, k}, true), Tensor::zeros({c_h}, true)};
  p.gcn_w0 = Tensor::zeros({c_h, c_g0}, true);
  p.gcn_w1 = Tensor::zeros({c_g0, c_g1}, true);
  p.tcn_out = {Tensor::zeros({c_out, c_g1, k}, true), Tensor::zeros({c_out}, true),
               Tensor::zeros({c_out, c_g1, k}, true), Tensor::zeros({c_out}, true)};
  p.norm_gain = Tensor::zeros({c_g1 + c_out}, true);
  p.norm_bias = Tensor::zeros({c_g1 + c_out}, true);
  p.prelu_slope = Tensor::scalar(0.0, true);
  return p;
}

std::vector<Tensor> fully_connected_norms(std::size_t n, std::size_t t_len) {
  std::vector<double> a(n * n, 1.0);
  for (std::size_t i = 0; i < n; ++i) a[i * n + i] = 0.0;
  Tensor an = normalize_adjacency(Tensor::from_data({n, n}, std::move(a)));
  return std::vector<Tensor>(t_len, an);
}

}  // namespace

TEST_CASE("gconv hand cases") {
  Tensor a1 = Tensor::from_data({1, 1}, {1.0});
  Tensor z = Tensor::from_data({1, 2}, {2.0, -3.0});
  Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor out = gconv(z, a1, eye, Activation::kRelu);
  CHECK(out.at(0, 0) == 2.0);
  CHECK(out.at(0, 1) == 0.0);

  Tensor a2 = Tensor::from_data({2, 2}, {0.5, 0.5, 0.5, 0.5});
  Tensor z2 = Tensor::from_data({2, 2}, {1, 0, 3, 0});
  Tensor out2 = gconv(z2, a2, eye, Activation::kLinear);
  CHECK(out2.at(0, 0) == 2.0);
  CHECK(out2.at(1, 0) == 2.0);
  CHECK(out2.at(0, 1) == 0.0);
}

TEST_CASE("gconv and spatial_embed match the dense oracle") {
  Rng rng(7);
  Tensor path = Tensor::from_data({3, 3}, {0, 1, 0, 1, 0, 1, 0, 1, 0});
  Tensor an = normalize_adjacency(path);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor z = random_tensor({3, 4}, rng);
    Tensor w0 = random_tensor({4, 5}, rng);
    Tensor w1 = random_tensor({5, 2}, rng);

    auto first = oracle::matmul(oracle::matmul(to_mat(an), to_mat(z)), to_mat(w0));
    for (auto& row : first)
      for (auto& v : row) v = v > 0 ? v : 0;  // ReLU
    auto second = oracle::matmul(oracle::matmul(to_mat(an), first), to_mat(w1));

    Tensor g = gconv(z, an, w0, Activation::kRelu);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 5; ++j)
        CHECK(g.at(i, j) == doctest::Approx(first[i][j]).epsilon(1e-12));

    Tensor h = spatial_embed(z, an, w0, w1);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 2; ++j)
        CHECK(h.at(i, j) == doctest::Approx(second[i][j]).epsilon(1e-12));
  }
}

TEST_CASE("spatial_embed with zero weights is zero, identity case passes through") {
  Tensor a1 = Tensor::from_data({1, 1}, {1.0});
  Tensor x = Tensor::from_data({1, 2}, {1.0, 2.0});
  Tensor zero = Tensor::zeros({2, 2});
  Tensor h0 = spatial_embed(x, a1, zero, zero);
  CHECK(h0.at(0, 0) == 0.0);
  CHECK(h0.at(0, 1) == 0.0);

  Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor h = spatial_embed(x, a1, eye, eye);
  CHECK(h.at(0, 0) == 1.0);
  CHECK(h.at(0, 1) == 2.0);
}

TEST_CASE("gated unit: zero parameters give zero, saturated gate passes the value") {
  GatedConvParams zero{Tensor::zeros({2, 1, 3}, true), Tensor::zeros({2}, true),
                       Tensor::zeros({2, 1, 3}, true), Tensor::zeros({2}, true)};
  Tensor x = Tensor::from_data({1, 5}, {1, -2, 3, 0.5, 2});
  Tensor y = temporal_conv(x, zero);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t t = 0; t < 5; ++t) CHECK(y.at(c, t) == 0.0);

  GatedConvParams sat{Tensor::from_data({1, 1, 3}, {0, 0, 1}), Tensor::zeros({1}),
                      Tensor::zeros({1, 1, 3}), Tensor::full({1}, 20.0)};
  Tensor ys = temporal_conv(x, sat);
  for (std::size_t t = 0; t < 5; ++t)
    CHECK(std::abs(ys.at(0, t) - x.at(0, t)) < 1e-8);
}

TEST_CASE("gated unit is causal") {
  Rng rng(3);
  GatedConvParams g = GatedConvParams::init(2, 3, 3, rng);
  std::vector<double> base(2 * 6);
  for (auto& v : base) v = rng.uniform(-1, 1);
  Tensor x1 = Tensor::from_data({2, 6}, base);
  auto pert = base;
  pert[5] += 1.0;
  pert[11] -= 1.0;
  Tensor x2 = Tensor::from_data({2, 6}, std::move(pert));
  Tensor y1 = temporal_conv(x1, g), y2 = temporal_conv(x2, g);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t t = 0; t < 5; ++t) {
      const double a = y1.at(c, t), b = y2.at(c, t);
      CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
    }
}

TEST_CASE("st_block with zero parameters emits all-zero features") {
  auto p = zero_block(2, 3, 4, 3, 4, 3);
  std::vector<Tensor> inputs = {Tensor::full({2, 8}, 1.5)};  // stationary pedestrian
  auto feats = st_block(inputs, fully_connected_norms(1, 8), {1}, p);
  for (double v : feats.node_features[0].data()) CHECK(v == 0.0);
  CHECK(feats.channels() == 3 + 4);
}

TEST_CASE("st_block shape contract") {
  Rng rng(11);
  const std::size_t c_g1 = 12, c_out = 16, t_len = 8, n = 4;
  STBlockParams p = STBlockParams::init(2, 8, 8, c_g1, c_out, 3, 0.25, rng);
  std::vector<std::vector<Tensor>> inputs(2);
  std::vector<std::vector<Tensor>> norms(2);
  std::vector<std::vector<std::uint8_t>> masks(2);
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t i = 0; i < n; ++i) inputs[b].push_back(random_tensor({2, t_len}, rng));
    norms[b] = fully_connected_norms(n, t_len);
    masks[b].assign(n, 1);
  }
  auto out = st_block_batch(inputs, norms, masks, p);
  REQUIRE(out.size() == 2);
  for (const auto& f : out) {
    CHECK(f.nodes() == n);
    CHECK(f.time_steps() == t_len);
    CHECK(f.channels() == c_out + c_g1);
    CHECK(f.spatial_embeddings.size() == t_len);
    CHECK(f.spatial_embeddings[0].shape() == Shape{n, c_g1});
  }
}

TEST_CASE("st_block rejects snapshot count mismatches") {
  Rng rng(2);
  STBlockParams p = STBlockParams::init(2, 3, 3, 3, 3, 3, 0.25, rng);
  std::vector<Tensor> inputs = {random_tensor({2, 8}, rng)};
  CHECK_THROWS_AS(st_block(inputs, fully_connected_norms(1, 7), {1}, p), ContractError);
}

TEST_CASE("st_block is permutation equivariant") {
  Rng rng(19);
  STBlockParams p = STBlockParams::init(2, 4, 4, 3, 4, 3, 0.25, rng);
  const std::size_t n = 3, t_len = 6;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Tensor> inputs;
    for (std::size_t i = 0; i < n; ++i) inputs.push_back(random_tensor({2, t_len}, rng));
    auto norms = fully_connected_norms(n, t_len);
    std::vector<std::uint8_t> mask(n, 1);
    auto base = st_block(inputs, norms, mask, p);

    std::vector<std::size_t> perm = {2, 0, 1};
    std::vector<Tensor> pin;
    for (auto i : perm) pin.push_back(inputs[i]);
    auto permuted = st_block(pin, norms, mask, p);  // fully connected: a_norm permutes to itself

    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < base.channels(); ++c)
        for (std::size_t t = 0; t < t_len; ++t)
          CHECK(permuted.node_features[i].at(c, t) ==
                doctest::Approx(base.node_features[perm[i]].at(c, t)).epsilon(1e-12));
  }
}

TEST_CASE("masked nodes are zeroed and isolated from the rest") {
  Rng rng(29);
  STBlockParams p = STBlockParams::init(2, 4, 4, 3, 4, 3, 0.25, rng);
  const std::size_t t_len = 6;

  std::vector<Tensor> inputs3;
  for (std::size_t i = 0; i < 3; ++i) inputs3.push_back(random_tensor({2, t_len}, rng));

  // Edges only between nodes 0 and 1; node 2 is masked out and edge-free.
  std::vector<double> a3 = {0, 1, 0, 1, 0, 0, 0, 0, 0};
  Tensor an3 = normalize_adjacency(Tensor::from_data({3, 3}, std::move(a3)));
  auto full = st_block(inputs3, std::vector<Tensor>(t_len, an3), {1, 1, 0}, p);

  for (double v : full.node_features[2].data()) CHECK(v == 0.0);
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t c = 0; c < 3; ++c) CHECK(full.spatial_embeddings[t].at(2, c) == 0.0);

  std::vector<Tensor> inputs2 = {inputs3[0], inputs3[1]};
  Tensor an2 = normalize_adjacency(Tensor::from_data({2, 2}, {0, 1, 1, 0}));
  auto small = st_block(inputs2, std::vector<Tensor>(t_len, an2), {1, 1}, p);

  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t c = 0; c < full.channels(); ++c)
      for (std::size_t t = 0; t < t_len; ++t)
        CHECK(full.node_features[i].at(c, t) ==
              doctest::Approx(small.node_features[i].at(c, t)).epsilon(1e-12));
}

TEST_CASE("perturbing the final frame leaves earlier block outputs untouched") {
  Rng rng(37);
  STBlockParams p = STBlockParams::init(2, 4, 4, 3, 4, 3, 0.25, rng);
  const std::size_t n = 2, t_len = 8;
  std::vector<Tensor> inputs;
  for (std::size_t i = 0; i < n; ++i) inputs.push_back(random_tensor({2, t_len}, rng));
  auto norms = fully_connected_norms(n, t_len);
  auto base = st_block(inputs, norms, {1, 1}, p);

  std::vector<Tensor> moved;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(inputs[i].data().begin(), inputs[i].data().end());
    v[t_len - 1] += 2.0;      // x at final frame
    v[2 * t_len - 1] -= 1.0;  // y at final frame
    moved.push_back(Tensor::from_data({2, t_len}, std::move(v)));
  }
  auto shifted = st_block(moved, norms, {1, 1}, p);

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < base.channels(); ++c)
      for (std::size_t t = 0; t + 1 < t_len; ++t) {
        const double a = base.node_features[i].at(c, t);
        const double b = shifted.node_features[i].at(c, t);
        CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
      }
}

TEST_CASE("gradients through the whole block check out") {
  Rng rng(12);
  STBlockParams p = STBlockParams::init(2, 3, 3, 3, 3, 3, 0.25, rng);
  const std::size_t n = 2, t_len = 4;
  std::vector<Tensor> inputs;
  for (std::size_t i = 0; i < n; ++i) inputs.push_back(random_tensor({2, t_len}, rng));
  auto norms = fully_connected_norms(n, t_len);
  auto f = [&] {
    auto feats = st_block(inputs, norms, {1, 1}, p);
    Tensor acc = Tensor::zeros({});
    for (const auto& nf : feats.node_features) acc = add(acc, sum(mul(nf, nf)));
    return acc;
  };
  std::vector<std::pair<std::string, Tensor>> params = {
      {"tcn_in.p.kernel", p.tcn_in.p_kernel}, {"tcn_in.p.bias", p.tcn_in.p_bias},
      {"tcn_in.q.kernel", p.tcn_in.q_kernel}, {"tcn_in.q.bias", p.tcn_in.q_bias},
      {"gcn.w0", p.gcn_w0},                   {"gcn.w1", p.gcn_w1},
      {"tcn_out.p.kernel", p.tcn_out.p_kernel}, {"tcn_out.p.bias", p.tcn_out.p_bias},
      {"tcn_out.q.kernel", p.tcn_out.q_kernel}, {"tcn_out.q.bias", p.tcn_out.q_bias},
      {"norm.gain", p.norm_gain},             {"norm.bias", p.norm_bias},
      {"prelu.slope", p.prelu_slope}};
  CHECK(grad_check(f, params).max_rel_error < 1e-4);
}
