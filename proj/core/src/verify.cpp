#include "stlstm/verify.hpp"

#include <cmath>

#include "stlstm/train.hpp"

namespace stlstm {

nlohmann::json ModelGradCheckReport::to_json() const {
  nlohmann::json j;
  j["max_rel_error"] = max_rel_error;
  j["worst_param"] = worst_param;
  j["worst_analytic"] = worst_analytic;
  j["worst_numeric"] = worst_numeric;
  j["tolerance"] = tolerance;
  j["parameters"] = parameters;
  j["pass"] = pass;
  return j;
}

ModelGradCheckReport run_model_gradcheck(std::uint64_t seed, double h, double tolerance,
                                         bool corrupt) {
  ModelConfig cfg;
  cfg.t_obs = 4;
  cfg.t_pred = 3;
  cfg.tcn_hidden = 6;
  cfg.gcn_hidden = 6;
  cfg.embed_dim = 5;
  cfg.tcn_out = 6;
  cfg.enc_hidden = 6;
  cfg.dec_hidden = 8;
  cfg.pos_embed_dim = 4;
  cfg.head_hidden = 6;
  ModelParams params = ModelParams::init(cfg, seed);
  auto named = params.named_params();

  // A two-pedestrian window with non-trivial motion and targets.
  Rng rng(seed ^ 0xd1b54a32d192ed03ull);
  SequenceBatch window;
  window.scene_name = "gradcheck";
  window.ped_ids = {1, 2};
  window.node_mask = {1, 1};
  std::vector<double> obs(2 * cfg.t_obs * 2), gt(2 * cfg.t_pred * 2);
  for (auto& v : obs) v = rng.uniform(-2.0, 2.0);
  for (auto& v : gt) v = rng.uniform(-2.0, 2.0);
  window.positions_obs = Tensor::from_data({2, cfg.t_obs, 2}, std::move(obs));
  window.positions_gt = Tensor::from_data({2, cfg.t_pred, 2}, std::move(gt));

  auto loss_fn = [&]() {
    WindowForward fw = forward_window(params, window, cfg.t_pred, DecodeMode::kFreeRunning);
    return total_loss(fw.out.positions, window.positions_gt, window.node_mask,
                      fw.features.spatial_embeddings, fw.adjacencies, 0.5);
  };

  // Analytic gradients.
  params.zero_grad();
  {
    Tape tape;
    Tensor loss = loss_fn();
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(named.size());
  for (const auto& [name, t] : named) {
    (void)name;
    analytic.emplace_back(t.grad().begin(), t.grad().end());
  }
  if (corrupt && !analytic.empty() && !analytic[0].empty()) analytic[0][0] += 0.05;

  ModelGradCheckReport report;
  report.tolerance = tolerance;
  for (std::size_t pi = 0; pi < named.size(); ++pi) {
    Tensor p = named[pi].second;
    auto vals = p.mutable_data();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      ++report.parameters;
      const double orig = vals[i];
      vals[i] = orig + h;
      const double f_plus = loss_fn().item();
      vals[i] = orig - h;
      const double f_minus = loss_fn().item();
      vals[i] = orig;
      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double a = analytic[pi][i];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = named[pi].first + "[" + std::to_string(i) + "]";
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.pass = report.max_rel_error < tolerance;
  return report;
}

}  // namespace stlstm
