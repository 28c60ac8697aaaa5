#include "stlstm/stblock.hpp"

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

GatedConvParams GatedConvParams::init(std::size_t c_in, std::size_t c_out,
                                      std::size_t kernel, Rng& rng) {
  GatedConvParams p;
  p.p_kernel = xavier({c_out, c_in, kernel}, c_in * kernel, c_out * kernel, rng);
  p.p_bias = Tensor::zeros({c_out}, true);
  p.q_kernel = xavier({c_out, c_in, kernel}, c_in * kernel, c_out * kernel, rng);
  p.q_bias = Tensor::zeros({c_out}, true);
  return p;
}

STBlockParams STBlockParams::init(std::size_t c_in, std::size_t c_h, std::size_t c_g0,
                                  std::size_t c_g1, std::size_t c_out, std::size_t kernel,
                                  double prelu_init, Rng& rng) {
  STBlockParams p;
  p.tcn_in = GatedConvParams::init(c_in, c_h, kernel, rng);
  p.gcn_w0 = xavier({c_h, c_g0}, c_h, c_g0, rng);
  p.gcn_w1 = xavier({c_g0, c_g1}, c_g0, c_g1, rng);
  p.tcn_out = GatedConvParams::init(c_g1, c_out, kernel, rng);
  p.norm_gain = Tensor::full({c_g1 + c_out}, 1.0, true);
  p.norm_bias = Tensor::zeros({c_g1 + c_out}, true);
  p.prelu_slope = Tensor::scalar(prelu_init, true);
  return p;
}

Tensor gconv(const Tensor& z, const Tensor& a_norm, const Tensor& w, Activation act,
             const Tensor* slope) {
  return activate(matmul(matmul(a_norm, z), w), act, slope);
}

Tensor spatial_embed(const Tensor& x, const Tensor& a_norm, const Tensor& w0,
                     const Tensor& w1) {
  return gconv(gconv(x, a_norm, w0, Activation::kRelu), a_norm, w1, Activation::kLinear);
}

Tensor temporal_conv(const Tensor& x, const GatedConvParams& params) {
  Tensor p = conv1d_causal(x, params.p_kernel, params.p_bias);
  Tensor q = conv1d_causal(x, params.q_kernel, params.q_bias);
  return mul(p, sigmoid(q));
}

STFeatures st_block(const std::vector<Tensor>& node_inputs,
                    const std::vector<Tensor>& a_norm_per_step,
                    const std::vector<std::uint8_t>& node_mask,
                    const STBlockParams& params, double ln_eps) {
  const std::size_t n = node_inputs.size();
  if (n == 0) throw ContractError("st_block: no nodes");
  if (node_mask.size() != n)
    throw ContractError("st_block: mask has " + std::to_string(node_mask.size()) +
                        " entries for " + std::to_string(n) + " nodes");
  const std::size_t t_len = node_inputs[0].dim(1);
  if (a_norm_per_step.size() != t_len)
    throw ContractError("st_block: " + std::to_string(a_norm_per_step.size()) +
                        " graph snapshots for " + std::to_string(t_len) + " time steps");

  const std::size_t c_h = params.tcn_in.p_kernel.dim(0);
  const std::size_t c_g1 = params.spatial_channels();
  const std::size_t c_out = params.tcn_out.p_kernel.dim(0);

  bool any_masked = false;
  for (auto m : node_mask) any_masked = any_masked || !m;

  // Temporal stage one, per node.
  std::vector<Tensor> hidden;
  hidden.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    hidden.push_back(node_mask[i] ? temporal_conv(node_inputs[i], params.tcn_in)
                                  : Tensor::zeros({c_h, t_len}));

  // Row mask that zeroes masked nodes after the spatial stage.
  Tensor embed_mask;
  if (any_masked) {
    std::vector<double> m(n * c_g1, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      if (node_mask[i])
        for (std::size_t c = 0; c < c_g1; ++c) m[i * c_g1 + c] = 1.0;
    embed_mask = Tensor::from_data({n, c_g1}, std::move(m));
  }

  // Spatial stage: graph embedding per timestep with that frame's a_norm.
  std::vector<Tensor> embeds;
  embeds.reserve(t_len);
  for (std::size_t t = 0; t < t_len; ++t) {
    Tensor zt = gather_timestep(hidden, t);
    Tensor h = spatial_embed(zt, a_norm_per_step[t], params.gcn_w0, params.gcn_w1);
    if (any_masked) h = mul(h, embed_mask);
    embeds.push_back(h);
  }

  // Temporal stage two plus normalization, per node.
  STFeatures out;
  out.node_mask = node_mask;
  out.spatial_embeddings = embeds;
  out.node_features.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!node_mask[i]) {
      out.node_features.push_back(Tensor::zeros({c_g1 + c_out, t_len}));
      continue;
    }
    Tensor s = node_series(embeds, i);
    Tensor u = temporal_conv(s, params.tcn_out);
    Tensor f = concat(s, u, 0);
    f = layer_norm(f, params.norm_gain, params.norm_bias, 0, ln_eps);
    f = prelu(f, params.prelu_slope);
    out.node_features.push_back(f);
  }
  return out;
}

std::vector<STFeatures> st_block_batch(const std::vector<std::vector<Tensor>>& inputs,
                                       const std::vector<std::vector<Tensor>>& a_norms,
                                       const std::vector<std::vector<std::uint8_t>>& masks,
                                       const STBlockParams& params, double ln_eps) {
  if (inputs.size() != a_norms.size() || inputs.size() != masks.size())
    throw ContractError("st_block_batch: inconsistent batch sizes");
  std::vector<STFeatures> out;
  out.reserve(inputs.size());
  for (std::size_t b = 0; b < inputs.size(); ++b)
    out.push_back(st_block(inputs[b], a_norms[b], masks[b], params, ln_eps));
  return out;
}

}  // namespace stlstm
