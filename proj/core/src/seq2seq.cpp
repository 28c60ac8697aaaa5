#include "stlstm/seq2seq.hpp"

#include <cmath>

namespace stlstm {

namespace {

Tensor xavier(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::size_t total = 1;
  for (auto d : shape) total *= d;
  std::vector<double> v(total);
  for (auto& x : v) x = rng.uniform(-limit, limit);
  return Tensor::from_data(std::move(shape), std::move(v), /*requires_grad=*/true);
}

}  // namespace

LstmWeights LstmWeights::init(std::size_t input_dim, std::size_t hidden, Rng& rng) {
  LstmWeights w;
  w.w_ih = xavier({4 * hidden, input_dim}, input_dim, hidden, rng);
  w.w_hh = xavier({4 * hidden, hidden}, hidden, hidden, rng);
  std::vector<double> b(4 * hidden, 0.0);
  for (std::size_t i = hidden; i < 2 * hidden; ++i) b[i] = 1.0;  // forget gate
  w.bias = Tensor::from_data({4 * hidden}, std::move(b), true);
  return w;
}

std::pair<Tensor, Tensor> lstm_cell_batch(const Tensor& h_prev, const Tensor& c_prev,
                                          const Tensor& x, const LstmWeights& w) {
  const std::size_t hidden = w.hidden();
  if (x.rank() != 2 || x.dim(1) != w.input_dim())
    throw DimensionError("lstm_cell: input " + shape_str(x.shape()) + " vs weights " +
                         shape_str(w.w_ih.shape()));
  if (h_prev.shape() != Shape{x.dim(0), hidden} || c_prev.shape() != h_prev.shape())
    throw DimensionError("lstm_cell: state " + shape_str(h_prev.shape()) +
                         " does not match hidden size " + std::to_string(hidden));
  Tensor z = add_rows(add(matmul(x, transpose(w.w_ih)), matmul(h_prev, transpose(w.w_hh))),
                      w.bias);
  Tensor i = sigmoid(slice_cols(z, 0, hidden));
  Tensor f = sigmoid(slice_cols(z, hidden, hidden));
  Tensor g = tanh(slice_cols(z, 2 * hidden, hidden));
  Tensor o = sigmoid(slice_cols(z, 3 * hidden, hidden));
  Tensor c = add(mul(f, c_prev), mul(i, g));
  Tensor h = mul(o, tanh(c));
  return {h, c};
}

std::pair<Tensor, Tensor> lstm_cell(const Tensor& h_prev, const Tensor& c_prev,
                                    const Tensor& x, const LstmWeights& w) {
  if (h_prev.rank() != 1 || c_prev.rank() != 1 || x.rank() != 1)
    throw DimensionError("lstm_cell: expected vectors, got h " + shape_str(h_prev.shape()) +
                         ", c " + shape_str(c_prev.shape()) + ", x " + shape_str(x.shape()));
  auto [h, c] = lstm_cell_batch(reshape(h_prev, {1, h_prev.size()}),
                                reshape(c_prev, {1, c_prev.size()}),
                                reshape(x, {1, x.size()}), w);
  return {reshape(h, {h.size()}), reshape(c, {c.size()})};
}

Tensor output_proj(const Tensor& h, const Tensor& w_hy, const Tensor& b_y) {
  if (h.rank() == 1) {
    Tensor y = matmul(reshape(h, {1, h.size()}), transpose(w_hy));
    return add(reshape(y, {y.size()}), b_y);
  }
  return add_rows(matmul(h, transpose(w_hy)), b_y);
}

EncoderState encode(const STFeatures& features, const LstmWeights& w) {
  const std::size_t n = features.nodes();
  const std::size_t t_len = features.time_steps();
  if (n == 0 || t_len == 0) throw ContractError("encode: empty feature block");
  const std::size_t hidden = w.hidden();
  Tensor h = Tensor::zeros({n, hidden});
  Tensor c = Tensor::zeros({n, hidden});
  for (std::size_t t = 0; t < t_len; ++t) {
    Tensor x = gather_timestep(features.node_features, t);
    std::tie(h, c) = lstm_cell_batch(h, c, x, w);
  }
  return {h, c};
}

StateBridge StateBridge::init(std::size_t enc_hidden, std::size_t dec_hidden, Rng& rng) {
  StateBridge b;
  b.w_h = xavier({dec_hidden, enc_hidden}, enc_hidden, dec_hidden, rng);
  b.b_h = Tensor::zeros({dec_hidden}, true);
  b.w_c = xavier({dec_hidden, enc_hidden}, enc_hidden, dec_hidden, rng);
  b.b_c = Tensor::zeros({dec_hidden}, true);
  return b;
}

DecoderHead DecoderHead::init(std::size_t dec_hidden, std::size_t head_hidden,
                              std::size_t pos_embed_dim, Rng& rng) {
  DecoderHead d;
  d.embed_w = xavier({pos_embed_dim, 2}, 2, pos_embed_dim, rng);
  d.embed_b = Tensor::zeros({pos_embed_dim}, true);
  d.w1 = xavier({head_hidden, dec_hidden}, dec_hidden, head_hidden, rng);
  d.b1 = Tensor::zeros({head_hidden}, true);
  d.w2 = xavier({2, head_hidden}, head_hidden, 2, rng);
  d.b2 = Tensor::zeros({2}, true);
  return d;
}

DecodeResult decode(const EncoderState& enc, const StateBridge& bridge,
                    const Tensor& last_obs_pos, const Tensor& b_st_last,
                    std::size_t t_pred, const LstmWeights& w_dec, const DecoderHead& head,
                    DecodeMode mode, const Tensor* ground_truth) {
  if (t_pred < 1) throw ContractError("decode: t_pred must be >= 1");
  if (mode == DecodeMode::kTeacherForcing && !ground_truth)
    throw ContractError("decode: teacher forcing requires ground truth");
  const std::size_t n = last_obs_pos.dim(0);

  Tensor h = add_rows(matmul(enc.h, transpose(bridge.w_h)), bridge.b_h);
  Tensor c = add_rows(matmul(enc.c, transpose(bridge.w_c)), bridge.b_c);

  DecodeResult out;
  out.steps.reserve(t_pred);
  Tensor prev = last_obs_pos;
  for (std::size_t t = 0; t < t_pred; ++t) {
    if (t > 0) {
      if (mode == DecodeMode::kTeacherForcing) {
        std::vector<double> g(n * 2);
        for (std::size_t i = 0; i < n; ++i) {
          g[i * 2 + 0] = ground_truth->at(i, t - 1, 0);
          g[i * 2 + 1] = ground_truth->at(i, t - 1, 1);
        }
        prev = Tensor::from_data({n, 2}, std::move(g));
      } else {
        prev = out.steps.back();
      }
    }
    Tensor emb = relu(add_rows(matmul(prev, transpose(head.embed_w)), head.embed_b));
    Tensor x = concat(emb, b_st_last, 1);
    std::tie(h, c) = lstm_cell_batch(h, c, x, w_dec);
    Tensor hid = relu(add_rows(matmul(h, transpose(head.w1)), head.b1));
    Tensor y = add_rows(matmul(hid, transpose(head.w2)), head.b2);
    out.steps.push_back(y);
  }
  out.positions = stack_steps(out.steps);
  return out;
}

Tensor link_prob(const Tensor& z_i, const Tensor& z_j) {
  return sigmoid(dot(z_i, z_j));
}

Tensor reconstruction_loss(const Tensor& embeddings, const Tensor& adjacency) {
  if (adjacency.rank() != 2 || adjacency.dim(0) != adjacency.dim(1))
    throw DimensionError("reconstruction_loss: adjacency must be square, got " +
                         shape_str(adjacency.shape()));
  const std::size_t n = adjacency.dim(0);
  if (embeddings.rank() != 2 || embeddings.dim(0) != n)
    throw DimensionError("reconstruction_loss: embeddings " + shape_str(embeddings.shape()) +
                         " vs adjacency " + shape_str(adjacency.shape()));
  // Target is the adjacency with self-loops.
  std::vector<double> t(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      t[i * n + j] = (i == j) ? 1.0 : adjacency.at(i, j);
  Tensor targets = Tensor::from_data({n, n}, std::move(t));
  Tensor scores = matmul(embeddings, transpose(embeddings));
  return scale(bce_logits_sum(scores, targets), 1.0 / static_cast<double>(n * n));
}

}  // namespace stlstm
