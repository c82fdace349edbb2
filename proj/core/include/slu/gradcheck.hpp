#pragma once

#include <functional>
#include <string>
#include <vector>

#include "slu/tensor.hpp"

namespace slu {

struct NamedParam {
  std::string name;
  Tensor* tensor = nullptr;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  int worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  bool passed = false;
  std::string worst_param;

  std::string summary() const;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Absolute floor below which analytic/numeric differences count as zero
  // (central-difference roundoff noise).
  double atol = 1e-7;
  // 0 checks every coordinate; otherwise that many coordinates are sampled
  // per parameter (deterministically from `sample_seed`).
  int coords_per_param = 0;
  std::uint64_t sample_seed = 0;
};

// Compares analytic gradients of `build_loss` (which must construct a scalar
// loss on the given fresh graph from the current parameter values) against
// central finite differences. 64-bit builds only.
GradCheckReport gradient_check(
    const std::function<Var(Graph&)>& build_loss,
    const std::vector<NamedParam>& params, const GradCheckOptions& opt = {});

}  // namespace slu
