#include "stlstm/model.hpp"

namespace stlstm {

nlohmann::json ModelConfig::to_json() const {
  nlohmann::json j;
  j["t_obs"] = t_obs;
  j["t_pred"] = t_pred;
  j["tcn_kernel"] = tcn_kernel;
  j["tcn_hidden"] = tcn_hidden;
  j["gcn_hidden"] = gcn_hidden;
  j["embed_dim"] = embed_dim;
  j["tcn_out"] = tcn_out;
  j["enc_hidden"] = enc_hidden;
  j["dec_hidden"] = dec_hidden;
  j["pos_embed_dim"] = pos_embed_dim;
  j["head_hidden"] = head_hidden;
  j["st_depth"] = st_depth;
  j["ln_eps"] = ln_eps;
  j["prelu_init"] = prelu_init;
  if (radius)
    j["radius"] = *radius;
  else
    j["radius"] = nullptr;
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.t_obs = j.at("t_obs").get<std::size_t>();
  c.t_pred = j.at("t_pred").get<std::size_t>();
  c.tcn_kernel = j.at("tcn_kernel").get<std::size_t>();
  c.tcn_hidden = j.at("tcn_hidden").get<std::size_t>();
  c.gcn_hidden = j.at("gcn_hidden").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.tcn_out = j.at("tcn_out").get<std::size_t>();
  c.enc_hidden = j.at("enc_hidden").get<std::size_t>();
  c.dec_hidden = j.at("dec_hidden").get<std::size_t>();
  c.pos_embed_dim = j.at("pos_embed_dim").get<std::size_t>();
  c.head_hidden = j.at("head_hidden").get<std::size_t>();
  c.st_depth = j.at("st_depth").get<std::size_t>();
  c.ln_eps = j.at("ln_eps").get<double>();
  c.prelu_init = j.at("prelu_init").get<double>();
  if (j.contains("radius") && !j.at("radius").is_null())
    c.radius = j.at("radius").get<double>();
  return c;
}

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  ModelParams p;
  p.config = config;
  std::size_t c_in = 2;
  for (std::size_t d = 0; d < config.st_depth; ++d) {
    p.blocks.push_back(STBlockParams::init(c_in, config.tcn_hidden, config.gcn_hidden,
                                           config.embed_dim, config.tcn_out,
                                           config.tcn_kernel, config.prelu_init, rng));
    c_in = config.feature_dim();
  }
  p.encoder = LstmWeights::init(config.feature_dim(), config.enc_hidden, rng);
  p.bridge = StateBridge::init(config.enc_hidden, config.dec_hidden, rng);
  p.decoder = LstmWeights::init(config.pos_embed_dim + config.feature_dim(),
                                config.dec_hidden, rng);
  p.head = DecoderHead::init(config.dec_hidden, config.head_hidden, config.pos_embed_dim, rng);
  return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t d = 0; d < blocks.size(); ++d) {
    const std::string b = "stblock" + std::to_string(d) + ".";
    const auto& blk = blocks[d];
    out.emplace_back(b + "tcn_in.p.kernel", blk.tcn_in.p_kernel);
    out.emplace_back(b + "tcn_in.p.bias", blk.tcn_in.p_bias);
    out.emplace_back(b + "tcn_in.q.kernel", blk.tcn_in.q_kernel);
    out.emplace_back(b + "tcn_in.q.bias", blk.tcn_in.q_bias);
    out.emplace_back(b + "gcn.w0", blk.gcn_w0);
    out.emplace_back(b + "gcn.w1", blk.gcn_w1);
    out.emplace_back(b + "tcn_out.p.kernel", blk.tcn_out.p_kernel);
    out.emplace_back(b + "tcn_out.p.bias", blk.tcn_out.p_bias);
    out.emplace_back(b + "tcn_out.q.kernel", blk.tcn_out.q_kernel);
    out.emplace_back(b + "tcn_out.q.bias", blk.tcn_out.q_bias);
    out.emplace_back(b + "norm.gain", blk.norm_gain);
    out.emplace_back(b + "norm.bias", blk.norm_bias);
    out.emplace_back(b + "prelu.slope", blk.prelu_slope);
  }
  out.emplace_back("encoder.w_ih", encoder.w_ih);
  out.emplace_back("encoder.w_hh", encoder.w_hh);
  out.emplace_back("encoder.bias", encoder.bias);
  out.emplace_back("bridge.w_h", bridge.w_h);
  out.emplace_back("bridge.b_h", bridge.b_h);
  out.emplace_back("bridge.w_c", bridge.w_c);
  out.emplace_back("bridge.b_c", bridge.b_c);
  out.emplace_back("decoder.w_ih", decoder.w_ih);
  out.emplace_back("decoder.w_hh", decoder.w_hh);
  out.emplace_back("decoder.bias", decoder.bias);
  out.emplace_back("head.embed_w", head.embed_w);
  out.emplace_back("head.embed_b", head.embed_b);
  out.emplace_back("head.w1", head.w1);
  out.emplace_back("head.b1", head.b1);
  out.emplace_back("head.w2", head.w2);
  out.emplace_back("head.b2", head.b2);
  return out;
}

void ModelParams::zero_grad() const {
  for (auto& [name, t] : named_params()) {
    (void)name;
    Tensor(t).zero_grad();
  }
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_params()) {
    (void)name;
    n += t.size();
  }
  return n;
}

WindowForward forward_window(const ModelParams& params, const SequenceBatch& batch,
                             std::size_t t_pred, DecodeMode mode,
                             const Tensor* ground_truth) {
  const std::size_t n = batch.nodes();
  const std::size_t t_obs = batch.positions_obs.dim(1);
  if (n == 0) throw ContractError("forward_window: empty window");

  WindowForward fw;
  std::vector<Tensor> a_norms;
  a_norms.reserve(t_obs);
  fw.adjacencies.reserve(t_obs);
  for (std::size_t t = 0; t < t_obs; ++t) {
    std::vector<double> pos(n * 2);
    for (std::size_t i = 0; i < n; ++i) {
      pos[i * 2 + 0] = batch.positions_obs.at(i, t, 0);
      pos[i * 2 + 1] = batch.positions_obs.at(i, t, 1);
    }
    GraphSnapshot snap = build_snapshot(Tensor::from_data({n, 2}, std::move(pos)),
                                        batch.ped_ids, params.config.radius);
    a_norms.push_back(snap.a_norm);
    fw.adjacencies.push_back(snap.adjacency);
  }

  // Per-node input streams [2 x T].
  std::vector<Tensor> inputs;
  inputs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(2 * t_obs);
    for (std::size_t t = 0; t < t_obs; ++t) {
      v[0 * t_obs + t] = batch.positions_obs.at(i, t, 0);
      v[1 * t_obs + t] = batch.positions_obs.at(i, t, 1);
    }
    inputs.push_back(Tensor::from_data({2, t_obs}, std::move(v)));
  }

  STFeatures feats;
  for (std::size_t d = 0; d < params.blocks.size(); ++d) {
    feats = st_block(d == 0 ? inputs : feats.node_features, a_norms, batch.node_mask,
                     params.blocks[d], params.config.ln_eps);
  }
  fw.enc = encode(feats, params.encoder);

  Tensor b_last = gather_timestep(feats.node_features, t_obs - 1);
  std::vector<double> last(n * 2);
  for (std::size_t i = 0; i < n; ++i) {
    last[i * 2 + 0] = batch.positions_obs.at(i, t_obs - 1, 0);
    last[i * 2 + 1] = batch.positions_obs.at(i, t_obs - 1, 1);
  }
  Tensor last_pos = Tensor::from_data({n, 2}, std::move(last));

  fw.out = decode(fw.enc, params.bridge, last_pos, b_last, t_pred, params.decoder,
                  params.head, mode, ground_truth);
  fw.features = std::move(feats);
  return fw;
}

Tensor predict_window(const ModelParams& params, const SequenceBatch& batch,
                      std::size_t t_pred) {
  SequenceBatch norm = normalize(batch);
  WindowForward fw = forward_window(params, norm, t_pred, DecodeMode::kFreeRunning);
  std::vector<double> v(fw.out.positions.data().begin(), fw.out.positions.data().end());
  for (std::size_t i = 0; i < v.size(); i += 2) {
    v[i] += norm.origin.x;
    v[i + 1] += norm.origin.y;
  }
  return Tensor::from_data(fw.out.positions.shape(), std::move(v));
}

}  // namespace stlstm
