#include "mmgl/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mmgl/errors.hpp"

namespace mmgl {
namespace {

double evaluate(const LossBuilder& build) {
  Tape tape;
  return build(tape).scalar();
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& build, std::span<Parameter* const> params,
                           const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw ParameterError("grad_check: step must be positive");

  const double f0 = evaluate(build);
  const double f1 = evaluate(build);
  if (f0 != f1 && !(std::isnan(f0) && std::isnan(f1))) {
    throw ContractError("grad_check: loss is not deterministic (" + std::to_string(f0) +
                        " vs " + std::to_string(f1) + ")");
  }

  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = build(tape);
    tape.backward(loss);
  }

  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  const double h = options.step;
  for (Parameter* p : params) {
    std::vector<std::size_t> entries(p->value.size());
    std::iota(entries.begin(), entries.end(), std::size_t{0});
    if (entries.size() > options.max_entries_per_param) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(options.max_entries_per_param);
      std::sort(entries.begin(), entries.end());
    }
    for (std::size_t idx : entries) {
      double& x = p->value.data()[idx];
      const double saved = x;
      x = saved + h;
      const double fp = evaluate(build);
      x = saved - h;
      const double fm = evaluate(build);
      x = saved;

      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = p->grad.data()[idx];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), options.abs_floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.entries_checked;
      if (report.entries_checked == 1 || rel > report.max_rel_error || std::isnan(rel)) {
        report.max_rel_error = rel;
        report.worst = GradCheckEntry{p->name, idx, analytic, numeric, rel};
      }
    }
  }
  report.passed = options.tolerance > 0.0 && report.max_rel_error < options.tolerance &&
                  std::isfinite(report.max_rel_error);
  return report;
}

}  // namespace mmgl
