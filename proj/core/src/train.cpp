#include "stlstm/train.hpp"

#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

namespace stlstm {

Tensor l2_loss(const Tensor& pred, const Tensor& gt, const std::vector<std::uint8_t>& mask) {
  if (pred.rank() != 3 || pred.dim(2) != 2)
    throw DimensionError("l2_loss: predictions must be [n x T x 2], got " +
                         shape_str(pred.shape()));
  if (pred.shape() != gt.shape())
    throw DimensionError("l2_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                         shape_str(gt.shape()));
  const std::size_t n = pred.dim(0), t_len = pred.dim(1);
  if (mask.size() != n)
    throw ContractError("l2_loss: mask has " + std::to_string(mask.size()) +
                        " entries for " + std::to_string(n) + " nodes");
  std::size_t n_masked = 0;
  for (auto m : mask) n_masked += m ? 1 : 0;
  if (n_masked == 0) throw ContractError("l2_loss: empty mask");

  std::vector<double> w(pred.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i)
    if (mask[i])
      for (std::size_t k = 0; k < t_len * 2; ++k) w[i * t_len * 2 + k] = 1.0;
  Tensor weights = Tensor::from_data(pred.shape(), std::move(w));
  Tensor d = sub(pred, gt);
  Tensor sq = mul(mul(d, d), weights);
  return scale(sum(sq), 1.0 / static_cast<double>(n_masked * t_len));
}

Tensor total_loss(const Tensor& pred, const Tensor& gt, const std::vector<std::uint8_t>& mask,
                  const std::vector<Tensor>& spatial_embeddings,
                  const std::vector<Tensor>& adjacencies, double lambda_recon) {
  if (lambda_recon < 0.0) throw ContractError("total_loss: lambda_recon must be >= 0");
  Tensor loss = l2_loss(pred, gt, mask);
  if (lambda_recon == 0.0 || spatial_embeddings.empty()) return loss;
  if (spatial_embeddings.size() != adjacencies.size())
    throw ContractError("total_loss: " + std::to_string(spatial_embeddings.size()) +
                        " embeddings vs " + std::to_string(adjacencies.size()) +
                        " adjacency snapshots");
  Tensor recon = reconstruction_loss(spatial_embeddings[0], adjacencies[0]);
  for (std::size_t t = 1; t < spatial_embeddings.size(); ++t)
    recon = add(recon, reconstruction_loss(spatial_embeddings[t], adjacencies[t]));
  return add(loss, scale(recon, lambda_recon / static_cast<double>(spatial_embeddings.size())));
}

void sgd_step(const std::vector<std::pair<std::string, Tensor>>& params, double lr,
              double clip_norm) {
  double sq = 0.0;
  for (const auto& [name, t] : params) {
    for (double g : t.grad()) {
      if (!std::isfinite(g))
        throw NumericalError("sgd_step: non-finite gradient in `" + name + "`");
      sq += g * g;
    }
  }
  const double norm = std::sqrt(sq);
  double factor = 1.0;
  if (clip_norm > 0.0 && norm > clip_norm) factor = clip_norm / norm;
  for (const auto& [name, t] : params) {
    (void)name;
    Tensor p = t;
    auto v = p.mutable_data();
    const auto g = p.grad();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * factor * g[i];
  }
}

namespace {

std::vector<SequenceBatch> collect_windows(const std::vector<Scene>& scenes,
                                           std::size_t t_obs, std::size_t t_pred,
                                           std::size_t stride) {
  std::vector<SequenceBatch> out;
  for (const auto& scene : scenes) {
    auto ws = make_sequences(scene, t_obs, t_pred, stride);
    for (auto& w : ws) out.push_back(normalize(w));
  }
  return out;
}

}  // namespace

TrainResult train(const ModelConfig& mcfg, const TrainConfig& tcfg,
                  const std::vector<Scene>& scenes) {
  auto windows = collect_windows(scenes, mcfg.t_obs, mcfg.t_pred, tcfg.stride);
  if (windows.empty()) throw UsageError("train: no training windows in the given scenes");

  TrainResult result{ModelParams::init(mcfg, tcfg.seed), {}};
  auto named = result.params.named_params();
  Rng shuffle_rng(tcfg.seed ^ 0x9e3779b97f4a7c15ull);

  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);

  double lr = tcfg.lr;
  const DecodeMode mode =
      tcfg.teacher_forcing ? DecodeMode::kTeacherForcing : DecodeMode::kFreeRunning;
  for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
    if (tcfg.lr_decay_every > 0 && epoch > 0 && epoch % tcfg.lr_decay_every == 0)
      lr *= tcfg.lr_decay;
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += tcfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + tcfg.batch_size);
      result.params.zero_grad();
      for (std::size_t k = begin; k < end; ++k) {
        const SequenceBatch& win = windows[order[k]];
        Tape tape;
        WindowForward fw = forward_window(result.params, win, mcfg.t_pred, mode,
                                          &win.positions_gt);
        Tensor loss = total_loss(fw.out.positions, win.positions_gt, win.node_mask,
                                 fw.features.spatial_embeddings, fw.adjacencies,
                                 tcfg.lambda_recon);
        if (!loss.all_finite())
          throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch + 1) +
                               ", window " + std::to_string(order[k]) + " (scene " +
                               win.scene_name + ")");
        epoch_loss += loss.item();
        tape.backward(scale(loss, 1.0 / static_cast<double>(end - begin)));
      }
      sgd_step(named, lr, tcfg.grad_clip_norm);
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(windows.size()));
  }
  return result;
}

namespace {

struct WindowScore {
  std::string scene;
  std::size_t n = 0;
  std::size_t t_pred = 0;
  double dist_sum = 0.0;        // over nodes and steps
  double final_dist_sum = 0.0;  // over nodes
  std::vector<std::vector<Vec2>> pred_frames;
};

WindowScore score_window(const SequenceBatch& window, const Tensor& pred_world) {
  WindowScore s;
  s.scene = window.scene_name;
  s.n = window.nodes();
  s.t_pred = window.positions_gt.dim(1);
  for (std::size_t i = 0; i < s.n; ++i)
    for (std::size_t t = 0; t < s.t_pred; ++t) {
      const double dx = pred_world.at(i, t, 0) - window.positions_gt.at(i, t, 0);
      const double dy = pred_world.at(i, t, 1) - window.positions_gt.at(i, t, 1);
      const double d = std::sqrt(dx * dx + dy * dy);
      s.dist_sum += d;
      if (t + 1 == s.t_pred) s.final_dist_sum += d;
    }
  s.pred_frames.resize(s.t_pred);
  for (std::size_t t = 0; t < s.t_pred; ++t) {
    s.pred_frames[t].reserve(s.n);
    for (std::size_t i = 0; i < s.n; ++i)
      s.pred_frames[t].push_back({pred_world.at(i, t, 0), pred_world.at(i, t, 1)});
  }
  return s;
}

EvalReport reduce_scores(const std::vector<Scene>& scenes,
                         const std::vector<WindowScore>& scores, const EvalOptions& opts) {
  EvalReport report;
  report.seed = opts.seed;
  for (const auto& scene : scenes) {
    SceneReport r;
    r.scene = scene.name;
    double dist = 0.0, fdist = 0.0;
    std::size_t steps = 0, nodes = 0;
    std::vector<std::vector<Vec2>> frames;
    for (const auto& s : scores) {
      if (s.scene != scene.name) continue;
      ++r.n_sequences;
      dist += s.dist_sum;
      fdist += s.final_dist_sum;
      steps += s.n * s.t_pred;
      nodes += s.n;
      frames.insert(frames.end(), s.pred_frames.begin(), s.pred_frames.end());
    }
    r.ade_m = steps ? dist / static_cast<double>(steps) : 0.0;
    r.fde_m = nodes ? fdist / static_cast<double>(nodes) : 0.0;
    if (opts.gt_collision) {
      r.collision_pct =
          opts.sample_agents > 0
              ? sampled_collision_rate(scene, opts.collision_threshold, opts.sample_agents,
                                       opts.seed)
              : scene_collision_rate(scene, opts.collision_threshold);
    } else {
      r.collision_pct = collision_rate(frames, opts.collision_threshold);
    }
    report.scenes.push_back(r);
  }
  SceneReport avg;
  avg.scene = "AVG";
  for (const auto& r : report.scenes) {
    avg.n_sequences += r.n_sequences;
    avg.ade_m += r.ade_m;
    avg.fde_m += r.fde_m;
    avg.collision_pct += r.collision_pct;
  }
  if (!report.scenes.empty()) {
    const double k = static_cast<double>(report.scenes.size());
    avg.ade_m /= k;
    avg.fde_m /= k;
    avg.collision_pct /= k;
  }
  report.aggregate = avg;
  return report;
}

// Fans window evaluation out to a pool and reduces in window order.
template <typename Fn>
std::vector<WindowScore> parallel_scores(const std::vector<SequenceBatch>& windows,
                                         std::size_t threads, Fn&& fn) {
  std::vector<WindowScore> scores(windows.size());
  std::size_t n_threads = threads ? threads : std::thread::hardware_concurrency();
  if (n_threads == 0) n_threads = 1;
  n_threads = std::min(n_threads, windows.empty() ? std::size_t{1} : windows.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= windows.size()) break;
      scores[i] = fn(windows[i]);
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return scores;
}

}  // namespace

EvalReport evaluate(const ModelParams& params, const std::vector<Scene>& scenes,
                    const EvalOptions& opts) {
  std::vector<SequenceBatch> windows;
  for (const auto& scene : scenes) {
    auto ws = make_sequences(scene, params.config.t_obs, params.config.t_pred, opts.stride);
    windows.insert(windows.end(), ws.begin(), ws.end());
  }
  auto scores = parallel_scores(windows, opts.threads, [&](const SequenceBatch& w) {
    Tensor pred = predict_window(params, w, params.config.t_pred);
    return score_window(w, pred);
  });
  EvalReport report = reduce_scores(scenes, scores, opts);
  report.config = params.config.to_json();
  return report;
}

EvalReport evaluate_linear_baseline(const std::vector<Scene>& scenes, std::size_t t_obs,
                                    std::size_t t_pred, const EvalOptions& opts) {
  std::vector<SequenceBatch> windows;
  for (const auto& scene : scenes) {
    auto ws = make_sequences(scene, t_obs, t_pred, opts.stride);
    windows.insert(windows.end(), ws.begin(), ws.end());
  }
  auto scores = parallel_scores(windows, opts.threads, [&](const SequenceBatch& w) {
    return score_window(w, linear_baseline(w.positions_obs, t_pred));
  });
  EvalReport report = reduce_scores(scenes, scores, opts);
  report.config = {{"baseline", "linear"}, {"t_obs", t_obs}, {"t_pred", t_pred}};
  return report;
}

std::vector<EvalReport> leave_one_out(const std::vector<std::vector<Scene>>& folds,
                                      const ModelConfig& mcfg, const TrainConfig& tcfg,
                                      const EvalOptions& opts) {
  if (folds.size() < 2) throw ContractError("leave_one_out: needs at least 2 folds");
  std::vector<EvalReport> reports;
  for (std::size_t held = 0; held < folds.size(); ++held) {
    std::vector<Scene> train_scenes;
    for (std::size_t i = 0; i < folds.size(); ++i)
      if (i != held) train_scenes.insert(train_scenes.end(), folds[i].begin(), folds[i].end());
    TrainResult tr = train(mcfg, tcfg, train_scenes);
    reports.push_back(evaluate(tr.params, folds[held], opts));
  }
  EvalReport avg;
  avg.seed = opts.seed;
  avg.config = mcfg.to_json();
  SceneReport agg;
  agg.scene = "AVG";
  for (const auto& r : reports) {
    agg.n_sequences += r.aggregate.n_sequences;
    agg.ade_m += r.aggregate.ade_m;
    agg.fde_m += r.aggregate.fde_m;
    agg.collision_pct += r.aggregate.collision_pct;
  }
  const double k = static_cast<double>(reports.size());
  agg.ade_m /= k;
  agg.fde_m /= k;
  agg.collision_pct /= k;
  avg.aggregate = agg;
  reports.push_back(avg);
  return reports;
}

}  // namespace stlstm
