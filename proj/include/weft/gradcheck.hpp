#pragma once

#include <functional>

#include "weft/tape.hpp"
#include "weft/tensor.hpp"

namespace weft {

struct GradCheckReport {
  double max_rel_err = 0.0;
  i64 worst_index = -1;
  bool pass = false;
};

// Central-difference check of d f / d x against the tape gradient.
// f must be pure: it maps the watched tensor to a scalar using ops.
// Evaluation runs at x.dtype(); pass eps=1e-4 and f64 inputs for tight
// tolerances, or compare an f32 tape gradient against the same scheme at a
// loose tolerance.
GradCheckReport finite_difference_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                        double eps = 1e-4, double tol = 1e-3);

// One registered gradcheck case: builds (f, x) pairs at a given dtype.
struct GradCheckCase {
  std::string family;  // op family label, e.g. "conv2d", "esto"
  std::string name;    // specific probe, e.g. "conv2d/weights"
  // Returns the probe input and the function to differentiate.
  std::function<std::pair<Tensor, std::function<Tensor(const Tensor&)>>(u64 seed, DType dt)> make;
};

// The registered list covering every trainable op family; defined across the
// module libraries and consumed by cmd_gradcheck and the acceptance suite.
const std::vector<GradCheckCase>& gradcheck_cases();

// Runs one case: the numeric gradient always comes from a 64-bit evaluation;
// the tape gradient is taken at `tape_dtype`. `inject` adds a deliberate
// offset to one analytic gradient element (negative-control fixture).
GradCheckReport run_gradcheck_case(const GradCheckCase& c, u64 seed, DType tape_dtype, double eps,
                                   double tol, double inject = 0.0);

}  // namespace weft
