#pragma once

#include <utility>
#include <vector>

#include "stlstm/rng.hpp"
#include "stlstm/stblock.hpp"
#include "stlstm/tensor.hpp"

namespace stlstm {

// Standard LSTM cell weights with gate order input, forget, cell, output.
// The forget-gate bias block is initialized to 1.
struct LstmWeights {
  Tensor w_ih;  // [4H x D_in]
  Tensor w_hh;  // [4H x H]
  Tensor bias;  // [4H]

  std::size_t hidden() const { return w_hh.dim(1); }
  std::size_t input_dim() const { return w_ih.dim(1); }

  static LstmWeights init(std::size_t input_dim, std::size_t hidden, Rng& rng);
};

// One LSTM step on vectors: i,f,o = sigmoid gates, g = tanh candidate,
// c = f*c_prev + i*g, h = o*tanh(c).
std::pair<Tensor, Tensor> lstm_cell(const Tensor& h_prev, const Tensor& c_prev,
                                    const Tensor& x, const LstmWeights& w);
// Same step applied to every row of [n x *] matrices at once.
std::pair<Tensor, Tensor> lstm_cell_batch(const Tensor& h_prev, const Tensor& c_prev,
                                          const Tensor& x, const LstmWeights& w);

// y = W_hy . h + b_y; h may be a vector [H] or a row batch [n x H].
Tensor output_proj(const Tensor& h, const Tensor& w_hy, const Tensor& b_y);

struct EncoderState {
  Tensor h;  // [n x H]
  Tensor c;
};

// Runs one weight-shared LSTM over the observed feature steps independently
// per node, starting from zero state.
EncoderState encode(const STFeatures& features, const LstmWeights& w);

// Learned linear maps taking the encoder's final (h, c) into the wider
// decoder state space.
struct StateBridge {
  Tensor w_h, b_h;  // [H_dec x H_enc], [H_dec]
  Tensor w_c, b_c;

  static StateBridge init(std::size_t enc_hidden, std::size_t dec_hidden, Rng& rng);
};

// Position embedding plus the two-layer output MLP (ReLU hidden layer,
// 2-dimensional coordinate output), shared across nodes.
struct DecoderHead {
  Tensor embed_w, embed_b;  // [D_emb x 2], [D_emb]
  Tensor w1, b1;            // [H_head x H_dec], [H_head]
  Tensor w2, b2;            // [2 x H_head], [2]

  static DecoderHead init(std::size_t dec_hidden, std::size_t head_hidden,
                          std::size_t pos_embed_dim, Rng& rng);
};

enum class DecodeMode { kFreeRunning, kTeacherForcing };

struct DecodeResult {
  Tensor positions;           // [n x t_pred x 2]
  std::vector<Tensor> steps;  // per step [n x 2]
};

// Autoregressive decoding: each step embeds the previous position (the last
// observed position at step one, then ground truth under teacher forcing or
// the model's own output when free running), concatenates the ST features of
// the final observed step, advances the LSTM and projects coordinates.
DecodeResult decode(const EncoderState& enc, const StateBridge& bridge,
                    const Tensor& last_obs_pos,  // [n x 2]
                    const Tensor& b_st_last,     // [n x C_feat]
                    std::size_t t_pred, const LstmWeights& w_dec, const DecoderHead& head,
                    DecodeMode mode, const Tensor* ground_truth = nullptr);

// sigmoid(z_i . z_j): probability that nodes i and j interact.
Tensor link_prob(const Tensor& z_i, const Tensor& z_j);

// Negative Bernoulli log-likelihood of the self-looped adjacency under
// pairwise link probabilities from the embeddings, over all ordered pairs
// including the diagonal, divided by n^2.
Tensor reconstruction_loss(const Tensor& embeddings, const Tensor& adjacency);

}  // namespace stlstm
