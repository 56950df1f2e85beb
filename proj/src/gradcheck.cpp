#include "weft/gradcheck.hpp"

#include <cmath>

namespace weft {

GradCheckReport finite_difference_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                        double eps, double tol) {
  GradCheckReport rep;

  // Analytic gradient from the tape.
  Tensor xt = x.clone();
  Tape tape;
  Tensor analytic;
  {
    TapeScope scope(tape);
    tape.watch(xt);
    Tensor loss = f(xt);
    if (!loss.is_scalar()) fail("finite_difference_check: f must return a scalar");
    tape.backward(loss);
    const Tensor* g = tape.grad(xt.node);
    analytic = g ? g->clone() : Tensor(x.shape(), x.dtype());
  }

  // Central differences, evaluated off-tape.
  NoGradScope ng;
  Tensor xp = x.clone();
  rep.pass = true;
  for (i64 i = 0; i < x.numel(); ++i) {
    double orig = xp.at(i);
    xp.set(i, orig + eps);
    double fp = f(xp).item();
    xp.set(i, orig - eps);
    double fm = f(xp).item();
    xp.set(i, orig);
    double numeric = (fp - fm) / (2.0 * eps);
    double a = analytic.at(i);
    double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-8});
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst_index = i;
    }
  }
  rep.pass = rep.max_rel_err <= tol;
  return rep;
}

GradCheckReport run_gradcheck_case(const GradCheckCase& c, u64 seed, DType tape_dtype, double eps,
                                   double tol, double inject) {
  auto [x64, f64fn] = c.make(seed, DType::F64);

  // Analytic gradient at the requested dtype.
  Tensor analytic;
  {
    auto [x, f] = tape_dtype == DType::F64 ? std::pair(x64, f64fn) : c.make(seed, DType::F32);
    Tensor xt = x.clone();
    Tape tape;
    TapeScope scope(tape);
    tape.watch(xt);
    Tensor loss = f(xt);
    if (!loss.is_scalar()) fail("gradcheck case '" + c.name + "': f must return a scalar");
    tape.backward(loss);
    const Tensor* g = tape.grad(xt.node);
    analytic = g ? g->astype(DType::F64) : Tensor(x.shape(), DType::F64);
  }
  if (inject != 0.0 && analytic.numel() > 0) analytic.set(0, analytic.at(0) + inject);

  // Numeric gradient, 64-bit evaluation.
  NoGradScope ng;
  GradCheckReport rep;
  Tensor xp = x64.clone();
  for (i64 i = 0; i < xp.numel(); ++i) {
    double orig = xp.at(i);
    xp.set(i, orig + eps);
    double fp = f64fn(xp).item();
    xp.set(i, orig - eps);
    double fm = f64fn(xp).item();
    xp.set(i, orig);
    double numeric = (fp - fm) / (2.0 * eps);
    double a = analytic.at(i);
    double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-8});
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst_index = i;
    }
  }
  rep.pass = rep.max_rel_err <= tol;
  return rep;
}

}  // namespace weft
