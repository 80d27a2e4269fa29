#pragma once
#include "ets/errors.hpp"

namespace ets::sde {

// Uniform grid t0 = tau_0 < ... < tau_steps = maturity.
struct TimeGrid {
  double t0 = 0.0;
  double maturity = 0.25;
  int steps = 30;

  void validate() const {
    if (!(maturity > t0))
      throw shape_error("TimeGrid: maturity must exceed t0");
    if (steps < 1) throw shape_error("TimeGrid: steps must be >= 1");
  }

  double dt() const { return (maturity - t0) / steps; }
  double time(int i) const { return t0 + dt() * i; }
  int dates() const { return steps + 1; }  // grid points incl. t0
  double span() const { return maturity - t0; }

  bool operator==(const TimeGrid& o) const {
    return t0 == o.t0 && maturity == o.maturity && steps == o.steps;
  }
};

}  // namespace ets::sde
