#pragma once

#include <cstdint>
#include <vector>

#include "stlstm/checkpoint.hpp"
#include "stlstm/metrics.hpp"
#include "stlstm/model.hpp"

namespace stlstm {

struct TrainConfig {
  std::size_t epochs = 250;
  std::size_t batch_size = 128;
  double lr = 0.001;
  double lambda_recon = 0.1;    // weight of the adjacency-reconstruction loss
  double grad_clip_norm = 10.0; // global norm; <= 0 disables clipping
  std::uint64_t seed = 1;
  std::size_t stride = 1;
  bool teacher_forcing = true;
  double lr_decay = 1.0;          // multiplicative step decay factor
  std::size_t lr_decay_every = 0; // epochs between decays; 0 disables
};

// Mean over masked nodes and predicted steps of the squared Euclidean
// displacement. pred and gt are [n x T x 2]; throws ContractError when no
// node is masked in.
Tensor l2_loss(const Tensor& pred, const Tensor& gt, const std::vector<std::uint8_t>& mask);

// l2_loss plus lambda times the mean over observed steps of the
// adjacency-reconstruction loss.
Tensor total_loss(const Tensor& pred, const Tensor& gt, const std::vector<std::uint8_t>& mask,
                  const std::vector<Tensor>& spatial_embeddings,
                  const std::vector<Tensor>& adjacencies, double lambda_recon);

// Clips the concatenated gradient to `clip_norm` (global L2 norm), then
// applies p -= lr * g. Throws NumericalError on non-finite gradients.
void sgd_step(const std::vector<std::pair<std::string, Tensor>>& params, double lr,
              double clip_norm);

struct TrainResult {
  ModelParams params;
  std::vector<double> loss_curve;  // per-epoch mean window loss
};

// Deterministic given config.seed: fixed init, fixed shuffles. Throws
// UsageError when the scenes produce no training windows and NumericalError
// if a loss or gradient goes non-finite.
TrainResult train(const ModelConfig& mcfg, const TrainConfig& tcfg,
                  const std::vector<Scene>& scenes);

struct EvalOptions {
  double collision_threshold = 0.10;
  std::size_t sample_agents = 0;  // 0 = deterministic full population
  std::uint64_t seed = 1;
  std::size_t stride = 1;
  bool gt_collision = false;  // score ground-truth tracks instead of predictions
  std::size_t threads = 0;    // 0 = hardware concurrency
};

// Free-running prediction over every window of every scene; metrics in world
// meters. Windows fan out to a worker pool and are reduced in a fixed order,
// so the report does not depend on thread scheduling.
EvalReport evaluate(const ModelParams& params, const std::vector<Scene>& scenes,
                    const EvalOptions& opts);

// Evaluates the Linear least-squares extrapolation baseline with the same
// windowing and reporting as evaluate().
EvalReport evaluate_linear_baseline(const std::vector<Scene>& scenes, std::size_t t_obs,
                                    std::size_t t_pred, const EvalOptions& opts);

// Trains on the union of all other folds and evaluates on each fold in turn;
// the final entry is the unweighted AVG across folds.
std::vector<EvalReport> leave_one_out(const std::vector<std::vector<Scene>>& folds,
                                      const ModelConfig& mcfg, const TrainConfig& tcfg,
                                      const EvalOptions& opts);

}  // namespace stlstm
