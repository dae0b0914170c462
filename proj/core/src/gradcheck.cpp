#include <cmath>
#include <sstream>

#include "wcl/autodiff.hpp"

namespace wcl {

GradCheckReport grad_check(const std::function<Tensor(Tape&)>& f, std::span<Tensor> inputs,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  for (auto& in : inputs) in.zero_grad();

  Tape tape;
  Tensor out = f(tape);
  if (!std::isfinite(static_cast<double>(out.item()))) {
    report.finite = false;
    report.message = "non-finite forward value";
    return report;
  }
  tape.backward(out);
  const double floor = options.abs_floor * std::max(1.0, std::abs(static_cast<double>(out.item())));

  auto evaluate = [&f]() {
    Tape probe(false);
    return static_cast<double>(f(probe).item());
  };

  std::ostringstream worst;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto& in = inputs[k];
    auto analytic = in.grad();
    auto values = in.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const Real saved = values[i];
      values[i] = static_cast<Real>(saved + options.step);
      const double up = evaluate();
      values[i] = static_cast<Real>(saved - options.step);
      const double down = evaluate();
      values[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        report.finite = false;
        report.message = "non-finite value while perturbing input " + std::to_string(k);
        return report;
      }
      const double numeric = (up - down) / (2 * options.step);
      const double a = static_cast<double>(analytic[i]);
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), floor});
      ++report.checked;
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        worst.str("");
        worst << "input " << k << " element " << i << ": analytic " << a << ", numeric " << numeric;
      }
    }
  }
  report.passed = report.max_rel_error <= options.tolerance;
  report.message = worst.str();
  return report;
}

}  // namespace wcl
