#pragma once

#include <vector>

#include "ets/metrics/gaussian.hpp"
#include "ets/sde/pathbatch.hpp"

namespace ets::metrics {

// Distribution metrics between two path batches on the same grid and
// dimension (sample counts may differ).  Lower is better everywhere.
struct MetricReport {
  double fid = 0.0;       // per-date Gaussian W2^2 averaged over dates 1..N
  double qvar = 0.0;      // MSE between mean cumulative squared-increment curves
  double corr = 0.0;      // entrywise MSE between time-averaged correlations
  double envelope = 0.0;  // MSE across avg/q05/q95/min/max envelope curves
};

double fid_avg(const sde::PathBatch& real, const sde::PathBatch& gen);
double qvar_mse(const sde::PathBatch& real, const sde::PathBatch& gen);
double corr_mse(const sde::PathBatch& real, const sde::PathBatch& gen);
double envelope_mse(const sde::PathBatch& real, const sde::PathBatch& gen);

MetricReport evaluate_batches(const sde::PathBatch& real,
                              const sde::PathBatch& gen);

// Quantile by linear interpolation on the order statistics of a sorted
// sample: index p*(m-1) split into floor and fractional parts.
double quantile_sorted(const std::vector<double>& sorted, double p);

}  // namespace ets::metrics
