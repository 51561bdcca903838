#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mmgl/autodiff.hpp"

namespace mmgl {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor for the relative error, so entries whose true gradient
  /// is ~0 are judged on absolute error instead.
  double abs_floor = 1e-6;
  /// Parameters larger than this are checked on a random subsample of entries.
  std::size_t max_entries_per_param = 1000;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  GradCheckEntry worst;
  std::size_t entries_checked = 0;
  bool passed = false;
};

/// Builds the loss on a fresh tape. Must bind every parameter in the checked
/// set through Tape::parameter so that perturbations are observed.
using LossBuilder = std::function<Var(Tape&)>;

/// Compares reverse-mode gradients of `build` against central differences
/// (f(x+h) - f(x-h)) / 2h for every entry of `params`. Passes when the largest
/// relative error is strictly below the tolerance, so tolerance 0 never passes.
/// Throws ContractError when two evaluations at the same point differ.
GradCheckReport grad_check(const LossBuilder& build, std::span<Parameter* const> params,
                           const GradCheckOptions& options = {});

}  // namespace mmgl
