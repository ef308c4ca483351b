#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "diffcore/tape.hpp"

namespace whdspot::diff {

using ScalarFn = std::function<Variable(Tape&)>;

struct GradCheckOptions {
  double step = 1e-6;
  // Check this many randomly chosen coordinates across all inputs; 0 checks every coordinate.
  std::size_t sample = 0;
  std::uint64_t seed = 0;
};

// Compares the tape gradient of f with central differences (f(x+h)-f(x-h))/2h
// at each checked coordinate and returns the largest relative error, using
// max(|analytic|, |numeric|, 1e-8) as the denominator. f must be
// deterministic and read its inputs through the given variables.
double grad_check(const ScalarFn& f, std::vector<Variable> inputs, const GradCheckOptions& options = {});

}  // namespace whdspot::diff
