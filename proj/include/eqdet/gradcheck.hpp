#pragma once

#include <functional>
#include <string>

#include "eqdet/autodiff.hpp"

namespace eqdet {

struct GradCheckReport {
  bool pass = true;
  double worst_rel = 0.0;   // worst relative error among compared coordinates
  int64_t worst_coord = -1;
  int skipped = 0;          // coordinates excluded as non-smooth (kinks)
  int compared = 0;
};

// Compares the tape gradient of f against central finite differences,
// coordinate by coordinate. Coordinates where the one-sided differences
// disagree strongly (a kink at working resolution, e.g. relu at 0) are
// excluded and counted in `skipped`.
inline GradCheckReport grad_check(const std::function<Var(Tape&, Var)>& f,
                                  const Tensor& x, double step = 1e-5,
                                  double rtol = 1e-4, double atol = 1e-8) {
  check_arg(step > 0.0, "grad_check: step must be > 0");

  Tape tape;
  Var xv = tape.leaf(x);
  Var loss = f(tape, xv);
  check_arg(tape.value(loss).numel() == 1, "grad_check: f must return a scalar");
  const double f0 = tape.value(loss).v[0];
  tape.backward(loss);
  const Tensor ga = tape.grad(xv);

  auto eval = [&f](const Tensor& xt) {
    Tape t(false);
    Var v = t.leaf(xt);
    return t.value(f(t, v)).v[0];
  };

  GradCheckReport rep;
  Tensor xp = x;
  const double floor = atol / rtol;
  for (int64_t i = 0; i < x.numel(); ++i) {
    const size_t ii = static_cast<size_t>(i);
    const double orig = xp.v[ii];
    xp.v[ii] = orig + step;
    const double fp = eval(xp);
    xp.v[ii] = orig - step;
    const double fm = eval(xp);
    xp.v[ii] = orig;

    const double central = (fp - fm) / (2.0 * step);
    const double dfwd = (fp - f0) / step;
    const double dbwd = (f0 - fm) / step;
    const double side_scale = std::max({std::abs(dfwd), std::abs(dbwd), 1.0});
    if (std::abs(dfwd - dbwd) > 0.1 * side_scale) {
      ++rep.skipped;
      continue;
    }

    const double a = ga.v[ii];
    const double rel =
        std::abs(a - central) / std::max({std::abs(a), std::abs(central), floor});
    ++rep.compared;
    if (rel > rep.worst_rel) {
      rep.worst_rel = rel;
      rep.worst_coord = i;
    }
    if (rel > rtol) rep.pass = false;
  }
  return rep;
}

}  // namespace eqdet
