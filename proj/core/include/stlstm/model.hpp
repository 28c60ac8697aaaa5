#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "stlstm/dataio.hpp"
#include "stlstm/graph.hpp"
#include "stlstm/seq2seq.hpp"
#include "stlstm/stblock.hpp"

namespace stlstm {

struct ModelConfig {
  std::size_t t_obs = 8;
  std::size_t t_pred = 12;
  std::size_t tcn_kernel = 3;
  std::size_t tcn_hidden = 32;    // first temporal stage output channels
  std::size_t gcn_hidden = 64;    // first graph layer width
  std::size_t embed_dim = 32;     // spatial embedding width (second graph layer)
  std::size_t tcn_out = 32;       // second temporal stage output channels
  std::size_t enc_hidden = 32;
  std::size_t dec_hidden = 64;
  std::size_t pos_embed_dim = 16;
  std::size_t head_hidden = 32;
  std::size_t st_depth = 1;       // stacked ST-Blocks
  double ln_eps = 1e-5;
  double prelu_init = 0.25;
  std::optional<double> radius;   // edge cutoff in meters; none = fully connected

  std::size_t feature_dim() const { return embed_dim + tcn_out; }

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

struct ModelParams {
  ModelConfig config;
  std::vector<STBlockParams> blocks;
  LstmWeights encoder;
  StateBridge bridge;
  LstmWeights decoder;
  DecoderHead head;

  static ModelParams init(const ModelConfig& config, std::uint64_t seed);

  // Stable name -> tensor view over every learnable parameter.
  std::vector<std::pair<std::string, Tensor>> named_params() const;
  void zero_grad() const;
  std::size_t parameter_count() const;
};

// Everything one window's forward pass produces, kept on the tape so a loss
// built from it can be differentiated.
struct WindowForward {
  STFeatures features;                 // final block output
  std::vector<Tensor> adjacencies;     // per observed step, [n x n]
  EncoderState enc;
  DecodeResult out;                    // out.positions is [n x t_pred x 2]
};

// Runs graph construction, the ST-Block stack, the encoder and t_pred decode
// steps on one (normalized) window. `ground_truth` is required for teacher
// forcing and must be [n x t_pred x 2] in the same normalized frame.
WindowForward forward_window(const ModelParams& params, const SequenceBatch& batch,
                             std::size_t t_pred, DecodeMode mode,
                             const Tensor* ground_truth = nullptr);

// Free-running prediction in world coordinates (denormalized).
Tensor predict_window(const ModelParams& params, const SequenceBatch& batch,
                      std::size_t t_pred);

}  // namespace stlstm
