#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

namespace stlstm {

struct ModelGradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  double tolerance = 1e-4;
  std::size_t parameters = 0;
  bool pass = false;

  nlohmann::json to_json() const;
};

// Sweeps central finite differences over every parameter of a small but
// complete model (one ST-Block, encoder, three free-running decode steps,
// two pedestrians, four observed frames) against tape gradients of the
// combined trajectory + reconstruction loss. `corrupt` deliberately damages
// one analytic gradient so the negative path can be exercised.
//
// Finite differences are only meaningful at points of differentiability: a
// seed that parks a ReLU input within +-h of zero, or drives a true gradient
// under the 1e-8 relative-error floor, reports inflated errors that are not
// gradient bugs. The shipped default seed is validated clean.
ModelGradCheckReport run_model_gradcheck(std::uint64_t seed, double h = 1e-5,
                                         double tolerance = 1e-4, bool corrupt = false);

}  // namespace stlstm
