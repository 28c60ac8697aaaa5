#include "stlstm/graph.hpp"

#include <cmath>

namespace stlstm {

Tensor normalize_adjacency(const Tensor& adjacency) {
  if (adjacency.rank() != 2 || adjacency.dim(0) != adjacency.dim(1))
    throw DimensionError("normalize_adjacency: need a square matrix, got " +
                         shape_str(adjacency.shape()));
  const std::size_t n = adjacency.dim(0);
  const auto a = adjacency.data();
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i * n + i] != 0.0)
      throw ContractError("normalize_adjacency: nonzero diagonal at node " + std::to_string(i));
    for (std::size_t j = i + 1; j < n; ++j)
      if (a[i * n + j] != a[j * n + i])
        throw ContractError("normalize_adjacency: asymmetric at (" + std::to_string(i) + ", " +
                            std::to_string(j) + ")");
  }
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 1.0;  // self-loop
    for (std::size_t j = 0; j < n; ++j) s += a[i * n + j];
    deg[i] = s;
  }
  std::vector<double> out(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double aij = (i == j) ? 1.0 : a[i * n + j];
      if (aij != 0.0) out[i * n + j] = aij / std::sqrt(deg[i] * deg[j]);
    }
  return Tensor::from_data({n, n}, std::move(out));
}

GraphSnapshot build_snapshot(const Tensor& positions, std::vector<long> ids,
                             std::optional<double> radius) {
  if (positions.rank() != 2 || positions.dim(1) != 2)
    throw DimensionError("build_snapshot: positions must be [n x 2], got " +
                         shape_str(positions.shape()));
  const std::size_t n = positions.dim(0);
  if (n == 0) throw ContractError("build_snapshot: empty graph");
  if (ids.size() != n)
    throw ContractError("build_snapshot: " + std::to_string(ids.size()) + " ids for " +
                        std::to_string(n) + " nodes");
  std::vector<double> adj(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      bool edge = true;
      if (radius) {
        const double dx = positions.at(i, 0) - positions.at(j, 0);
        const double dy = positions.at(i, 1) - positions.at(j, 1);
        edge = std::hypot(dx, dy) <= *radius;
      }
      if (edge) adj[i * n + j] = adj[j * n + i] = 1.0;
    }
  GraphSnapshot snap;
  snap.n = n;
  snap.node_ids = std::move(ids);
  snap.features = positions.detach();
  snap.adjacency = Tensor::from_data({n, n}, std::move(adj));
  snap.a_norm = normalize_adjacency(snap.adjacency);
  return snap;
}

}  // namespace stlstm
