#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace weft {

using i64 = std::int64_t;
using u64 = std::uint64_t;
using Shape = std::vector<i64>;

// Configuration / usage errors (bad shapes, bad files, bad flags).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf produced by an op, or a NaN loss. Carries the op name.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& op, const std::string& msg)
      : std::runtime_error("numeric failure in op '" + op + "': " + msg), op_name(op) {}
  std::string op_name;
};

[[noreturn]] void fail(const std::string& msg);

std::string shape_str(const Shape& s);
i64 shape_numel(const Shape& s);

// Thread cap for the parallel kernels. Initialized from WEFT_THREADS
// (default 1). Results are bitwise identical for any thread count: every
// parallel loop assigns each output element to exactly one thread and keeps
// a fixed serial accumulation order within it.
int max_threads();
void set_max_threads(int n);

// Per-op output scanning for NaN/Inf. On by default in debug builds; the
// trainer re-runs a failed step with this enabled to name the offending op.
bool debug_checks_enabled();
void set_debug_checks(bool on);

// Live/peak bytes held by tensor storage, for the bench memory column.
u64 storage_bytes_live();
u64 storage_bytes_peak();
void reset_storage_peak();

template <class F>
void parallel_for(i64 n, F&& f);

}  // namespace weft

// Implementation of parallel_for lives in the header so kernels can inline it.
#ifdef _OPENMP
#include <omp.h>
#endif

namespace weft {

template <class F>
void parallel_for(i64 n, F&& f) {
#ifdef _OPENMP
  if (max_threads() > 1 && n > 1) {
#pragma omp parallel for schedule(static) num_threads(max_threads())
    for (i64 i = 0; i < n; ++i) f(i);
    return;
  }
#endif
  for (i64 i = 0; i < n; ++i) f(i);
}

}  // namespace weft
