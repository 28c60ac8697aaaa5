#pragma once

#include <optional>
#include <vector>

#include "stlstm/tensor.hpp"

namespace stlstm {

// Pedestrian graph for one frame. `adjacency` is binary and symmetric with a
// zero diagonal; `a_norm` is the symmetric normalization
// D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I.
struct GraphSnapshot {
  std::size_t n = 0;
  std::vector<long> node_ids;
  Tensor features;   // [n x 2] world coordinates
  Tensor adjacency;  // [n x n] in {0, 1}
  Tensor a_norm;     // [n x n]
};

// Symmetric normalization of a binary adjacency with self-loops added:
// entry (i, j) becomes (A + I)_ij / sqrt(deg_i * deg_j).
// Throws ContractError on asymmetric input or a nonzero diagonal.
Tensor normalize_adjacency(const Tensor& adjacency);

// Connects pedestrians within `radius` meters of each other; no radius means
// fully connected. Throws ContractError for an empty node set.
GraphSnapshot build_snapshot(const Tensor& positions, std::vector<long> ids,
                             std::optional<double> radius = std::nullopt);

}  // namespace stlstm
