#include "diffcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>

#include "common/error.hpp"

namespace whdspot::diff {

namespace {
double evaluate(const ScalarFn& f) {
  Tape tape(Precision::f64, /*recording=*/false);
  const double v = f(tape).value().item();
  if (!std::isfinite(v)) fail(ErrorKind::Numeric, "grad_check: function returned a non-finite value");
  return v;
}
}  // namespace

double grad_check(const ScalarFn& f, std::vector<Variable> inputs, const GradCheckOptions& options) {
  require(options.step > 0, "grad_check: step must be positive");
  for (auto& v : inputs) {
    require(v.requires_grad(), "grad_check: every input must require a gradient");
    v.zero_grad();
  }
  {
    Tape tape;
    Variable root = f(tape);
    if (!std::isfinite(root.value().item())) fail(ErrorKind::Numeric, "grad_check: function returned a non-finite value");
    tape.backward(root);
  }
  std::vector<Tensor> analytic;
  for (auto& v : inputs) analytic.push_back(v.grad());

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    for (std::size_t j = 0; j < inputs[i].size(); ++j) coords.emplace_back(i, j);
  if (options.sample > 0 && options.sample < coords.size()) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.sample);
  }

  const double h = options.step;
  double worst = 0.0;
  for (auto [i, j] : coords) {
    double& x = inputs[i].mutable_value()[j];
    const double saved = x;
    x = saved + h;
    const double up = evaluate(f);
    x = saved - h;
    const double down = evaluate(f);
    x = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic[i][j];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace whdspot::diff
