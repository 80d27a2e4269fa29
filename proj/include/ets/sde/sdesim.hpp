#pragma once
#include <cstdint>
#include <vector>

#include "ets/sde/pathbatch.hpp"
#include "ets/sde/timegrid.hpp"

namespace ets::sde {

// Geometric Brownian motion dX = r X dt + sigma X dW, optionally
// multivariate with shared scalar coefficients and a correlation matrix for
// the driving Brownians (row-major dim x dim; empty means identity).
struct BsParams {
  double r = 0.8;
  double sigma = 0.3;
  double x0 = 0.2;
  int dim = 1;
  std::vector<double> corr;

  void validate() const;
};

// Ornstein-Uhlenbeck dX = theta (mu - X) dt + sigma dW, scalar.
struct OuParams {
  double theta = 7.0;
  double mu = 0.6;
  double sigma = 0.1;
  double x0 = 0.2;

  void validate() const;
};

// One explicit Euler update: out = x + drift*dt + vol*z with z already drawn
// from N(0, dt I); vol is a row-major d x d matrix.
void euler_step(const double* x, const double* drift, const double* vol,
                int d, double dt, const double* z, double* out);

// Sample s draws from stream (seed, s): per date, `dim` standard normals in
// dimension order, scaled by sqrt(dt).  Prefixes of a batch are therefore
// independent of the total sample count.
PathBatch simulate_bs(const BsParams& p, const TimeGrid& g, int samples,
                      std::uint64_t seed);
PathBatch simulate_ou(const OuParams& p, const TimeGrid& g, int samples,
                      std::uint64_t seed);

// Per-date first and second moments, both for the continuous-time process
// and for its explicit Euler discretization on the grid.
struct MomentCurve {
  std::vector<double> mean_disc, var_disc, mean_cont, var_cont;
};
MomentCurve closed_form_moments_bs(const BsParams& p, const TimeGrid& g);
MomentCurve closed_form_moments_ou(const OuParams& p, const TimeGrid& g);

// Lower-triangular Cholesky factor of a correlation matrix; throws
// data_error when the matrix is not symmetric positive definite with unit
// diagonal.
std::vector<double> cholesky_corr(const std::vector<double>& corr, int dim);

}  // namespace ets::sde
