#include "videograph/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace videograph {
namespace {

// Evaluates f on a fresh tape; returns NaN and fills `failure` when any
// recorded value is non-finite.
double evaluate(const std::function<Var(Tape&)>& f, std::string* failure) {
  Tape tape;
  Var out = f(tape);
  if (out.value().size() != 1) throw DimensionError("gradient_check: f must return a scalar");
  if (long bad = tape.first_nonfinite(); bad >= 0) {
    if (failure) *failure = std::string("non-finite value produced by op '") + tape.op_name(bad) + "'";
    return std::nan("");
  }
  return out.value()[0];
}

}  // namespace

GradCheckReport gradient_check(const std::function<Var(Tape&)>& f, const std::vector<Parameter*>& params,
                               double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw DomainError("gradient_check: eps must lie in [1e-7, 1e-3]");
  GradCheckReport report;

  std::vector<Tensor> analytic;
  double floor = kGradCheckFloor;
  {
    Tape tape;
    Var out = f(tape);
    if (long bad = tape.first_nonfinite(); bad >= 0) {
      report.failure = std::string("non-finite value produced by op '") + tape.op_name(bad) + "'";
      return report;
    }
    floor = kGradCheckFloor * std::max(1.0, std::abs(out.value()[0]));
    for (Parameter* p : params) p->zero_grad();
    tape.backward(out);
    tape.flush_param_grads();
    for (Parameter* p : params) analytic.push_back(p->grad);
  }

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + eps;
      const double plus = evaluate(f, &report.failure);
      p.value[i] = saved - eps;
      const double minus = evaluate(f, &report.failure);
      p.value[i] = saved;
      if (!report.failure.empty()) return report;

      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[pi][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = p.name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace videograph
