#pragma once
#include <cstdint>
#include <vector>

#include "ets/egen/generator.hpp"

namespace ets::cegen {

// Audit of the coefficient-proximity bounds implied by small conditional W2
// distances: on a regular mesh over the union of both generators' supports,
// per date and cell with enough members on both sides,
//
//   |b_A(t, z) - b_B(t, z)|     <= (eps + dx) / dt + 2 K dx
//   |sig_A(t, z) - sig_B(t, z)| <=  eps / sqrt(dt)  + 2 K dx
//
// at the cell center z, where eps is the measured conditional W2 between the
// next-state clouds, inflated by `se_inflation` bootstrap standard errors to
// cover sampling noise, and K is the caller-known Lipschitz constant of the
// coefficients.  Scalar generators only; volatilities compare in absolute
// value (the scheme cannot see their sign).
struct Prop1Config {
  double dx = 0.05;          // mesh width on the state axis
  int samples = 2000;        // paths generated per generator
  int min_cell = 5;          // below this a cell is skipped and counted
  double lipschitz = 1.0;    // K
  int bootstrap = 50;        // resamples for the eps standard error
  double se_inflation = 2.0; // eps slack in standard errors
  std::uint64_t seed = 0;

  void validate() const;
};

struct Prop1Cell {
  int date = 0;
  double lo = 0.0, hi = 0.0, center = 0.0;
  int n_a = 0, n_b = 0;
  double eps = 0.0;     // sqrt of the measured conditional W2^2
  double eps_se = 0.0;  // bootstrap standard error of eps
  double drift_gap = 0.0, drift_bound = 0.0;
  double vol_gap = 0.0, vol_bound = 0.0;
  bool drift_ok = false, vol_ok = false;
};

struct Prop1Report {
  std::vector<Prop1Cell> cells;
  int skipped = 0;  // too few members on one side
  bool all_hold = true;
};

Prop1Report prop1_bound_check(const egen::EulerGenerator& a,
                              const egen::EulerGenerator& b,
                              const Prop1Config& cfg);

}  // namespace ets::cegen
