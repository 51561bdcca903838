#include "mmgl/adam.hpp"

#include <cmath>

#include "mmgl/errors.hpp"

namespace mmgl {

void adam_step(AdamState& state, std::span<Parameter* const> params) {
  for (const Parameter* p : params) {
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols()) {
      throw DimensionError("adam_step: gradient of '" + p->name + "' has shape " +
                           p->grad.shape_string() + ", value " + p->value.shape_string());
    }
    if (!p->grad.all_finite()) {
      throw NumericError("adam_step: non-finite gradient in parameter '" + p->name + "'");
    }
  }
  ++state.step;
  const AdamOptions& o = state.options;
  for (Parameter* p : params) {
    auto& slot = state.slots[p->name];
    if (slot.first_moment.rows() != p->value.rows() || slot.first_moment.cols() != p->value.cols()) {
      slot.first_moment = Matrix(p->value.rows(), p->value.cols());
      slot.second_moment = Matrix(p->value.rows(), p->value.cols());
      slot.steps = 0;
    }
    ++slot.steps;
    const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(slot.steps));
    const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(slot.steps));
    auto m = slot.first_moment.data();
    auto v = slot.second_moment.data();
    auto g = p->grad.data();
    auto x = p->value.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      x[i] -= o.learning_rate * mhat / (std::sqrt(vhat) + o.epsilon);
    }
    p->grad.set_zero();
  }
}

}  // namespace mmgl
