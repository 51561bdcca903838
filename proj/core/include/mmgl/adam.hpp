#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "mmgl/autodiff.hpp"

namespace mmgl {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam moments keyed by parameter name. Each parameter carries its own step
/// count so that bias correction stays exact when some parameters are frozen
/// for part of training.
struct AdamState {
  struct Slot {
    Matrix first_moment;
    Matrix second_moment;
    std::uint64_t steps = 0;
  };

  AdamOptions options;
  std::uint64_t step = 0;
  std::map<std::string, Slot> slots;
};

/// One bias-corrected Adam update of `params`, then zeroes their gradients.
/// Throws NumericError naming the first parameter with a non-finite gradient;
/// nothing is updated in that case.
void adam_step(AdamState& state, std::span<Parameter* const> params);

}  // namespace mmgl
