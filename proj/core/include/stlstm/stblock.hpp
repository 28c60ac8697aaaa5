#pragma once

#include <cstdint>
#include <vector>

#include "stlstm/rng.hpp"
#include "stlstm/tensor.hpp"

namespace stlstm {

// One gated temporal unit: two parallel causal convolutions, the value
// stream P and the gate stream Q, combined as P * sigmoid(Q).
struct GatedConvParams {
  Tensor p_kernel;  // [C_out x C_in x K]
  Tensor p_bias;    // [C_out]
  Tensor q_kernel;
  Tensor q_bias;

  static GatedConvParams init(std::size_t c_in, std::size_t c_out, std::size_t kernel, Rng& rng);
};

// Parameters of one spatio-temporal block: gated causal TCN into a two-layer
// graph convolution into a second gated TCN, with layer normalization and a
// learnable-slope activation on the concatenated output.
struct STBlockParams {
  GatedConvParams tcn_in;   // C_in  -> C_h
  Tensor gcn_w0;            // [C_h  x C_g0]
  Tensor gcn_w1;            // [C_g0 x C_g1]
  GatedConvParams tcn_out;  // C_g1 -> C_out
  Tensor norm_gain;         // [C_g1 + C_out]
  Tensor norm_bias;
  Tensor prelu_slope;       // scalar

  static STBlockParams init(std::size_t c_in, std::size_t c_h, std::size_t c_g0,
                            std::size_t c_g1, std::size_t c_out, std::size_t kernel,
                            double prelu_init, Rng& rng);

  std::size_t out_channels() const { return norm_gain.dim(0); }
  std::size_t spatial_channels() const { return gcn_w1.dim(1); }
};

// Block output: per node the spatial stream stacked over the temporal stream
// ([C_g1 + C_out] x T, spatial channels first), plus the per-timestep spatial
// embeddings consumed by the adjacency-reconstruction loss. Masked-out node
// rows are exactly zero at every stage boundary.
struct STFeatures {
  std::vector<Tensor> node_features;       // n entries, each [C x T]
  std::vector<Tensor> spatial_embeddings;  // T entries, each [n x C_g1]
  std::vector<std::uint8_t> node_mask;

  std::size_t nodes() const { return node_features.size(); }
  std::size_t time_steps() const { return node_features.empty() ? 0 : node_features[0].dim(1); }
  std::size_t channels() const { return node_features.empty() ? 0 : node_features[0].dim(0); }
};

// One spectral graph convolution layer: act(a_norm . z . w).
Tensor gconv(const Tensor& z, const Tensor& a_norm, const Tensor& w, Activation act,
             const Tensor* slope = nullptr);

// Two-layer graph embedding: ReLU first layer, linear second. The result is
// also the embedding scored by the link-prediction decoder.
Tensor spatial_embed(const Tensor& x, const Tensor& a_norm, const Tensor& w0,
                     const Tensor& w1);

// Gated causal temporal convolution over [C x T]; length preserving.
Tensor temporal_conv(const Tensor& x, const GatedConvParams& params);

// Full block over one window: temporal conv, per-timestep spatial embedding
// with that timestep's a_norm, temporal conv, layer norm over channels and
// the learnable-slope activation. Masked nodes are zeroed after every stage.
STFeatures st_block(const std::vector<Tensor>& node_inputs,       // n x [C_in x T]
                    const std::vector<Tensor>& a_norm_per_step,   // T x [n x n]
                    const std::vector<std::uint8_t>& node_mask,   // n
                    const STBlockParams& params, double ln_eps = 1e-5);

// Convenience over a batch of independent windows.
std::vector<STFeatures> st_block_batch(const std::vector<std::vector<Tensor>>& inputs,
                                       const std::vector<std::vector<Tensor>>& a_norms,
                                       const std::vector<std::vector<std::uint8_t>>& masks,
                                       const STBlockParams& params, double ln_eps = 1e-5);

}  // namespace stlstm
