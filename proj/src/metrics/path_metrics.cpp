#include "ets/metrics/path_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ets::metrics {

using sde::PathBatch;

namespace {

void check_compatible(const PathBatch& a, const PathBatch& b,
                      const char* where) {
  if (a.dim != b.dim)
    throw shape_error(std::string(where) + ": dimension mismatch, " +
                      std::to_string(a.dim) + " vs " + std::to_string(b.dim));
  if (!(a.grid == b.grid))
    throw shape_error(std::string(where) + ": batches on different grids");
  if (a.samples < 2 || b.samples < 2)
    throw shape_error(std::string(where) + ": need at least two samples");
}

// Copies the date-t cross section into a row-major m x d buffer.
std::vector<double> date_slice(const PathBatch& b, int t) {
  std::vector<double> out(static_cast<std::size_t>(b.samples) * b.dim);
  for (int s = 0; s < b.samples; ++s)
    for (int k = 0; k < b.dim; ++k)
      out[static_cast<std::size_t>(s) * b.dim + k] = b.at(s, t, k);
  return out;
}

// Correlation matrix of the date-t cross section.  Columns with vanishing
// variance contribute identity rows so degenerate marginals stay comparable.
Eigen::MatrixXd date_corr(const PathBatch& b, int t) {
  const int d = b.dim, m = b.samples;
  auto flat = date_slice(b, t);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>
      x(flat.data(), m, d);
  Eigen::RowVectorXd mu = x.colwise().mean();
  Eigen::MatrixXd c = x.rowwise() - mu;
  Eigen::MatrixXd cov = (c.adjoint() * c) / static_cast<double>(m);
  Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      if (i == j) continue;
      const double denom = cov(i, i) * cov(j, j);
      corr(i, j) = denom > 1e-18 ? cov(i, j) / std::sqrt(denom) : 0.0;
    }
  return corr;
}

}  // namespace

double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw shape_error("quantile_sorted: empty sample");
  if (p <= 0.0) return sorted.front();
  if (p >= 1.0) return sorted.back();
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(h);
  const double frac = h - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

double fid_avg(const PathBatch& real, const PathBatch& gen) {
  check_compatible(real, gen, "fid_avg");
  const int n = real.grid.steps;
  double acc = 0;
  for (int t = 1; t <= n; ++t) {
    auto rs = date_slice(real, t);
    auto gs = date_slice(gen, t);
    auto sr = empirical_summary(rs.data(), real.samples, real.dim);
    auto sg = empirical_summary(gs.data(), gen.samples, gen.dim);
    acc += gaussian_w2_sq(sr, sg);
  }
  return acc / n;
}

double qvar_mse(const PathBatch& real, const PathBatch& gen) {
  check_compatible(real, gen, "qvar_mse");
  const int n = real.grid.steps;
  auto curve = [n](const PathBatch& b) {
    std::vector<double> qv(static_cast<std::size_t>(n), 0.0);
    double running = 0;
    for (int t = 1; t <= n; ++t) {
      double step = 0;
      for (int s = 0; s < b.samples; ++s)
        for (int k = 0; k < b.dim; ++k) {
          const double dx = b.at(s, t, k) - b.at(s, t - 1, k);
          step += dx * dx;
        }
      running += step / b.samples;
      qv[static_cast<std::size_t>(t) - 1] = running;
    }
    return qv;
  };
  auto cr = curve(real);
  auto cg = curve(gen);
  double acc = 0;
  for (int t = 0; t < n; ++t) {
    const double d = cr[static_cast<std::size_t>(t)] - cg[static_cast<std::size_t>(t)];
    acc += d * d;
  }
  return acc / n;
}

double corr_mse(const PathBatch& real, const PathBatch& gen) {
  check_compatible(real, gen, "corr_mse");
  const int n = real.grid.steps, d = real.dim;
  Eigen::MatrixXd ar = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd ag = Eigen::MatrixXd::Zero(d, d);
  for (int t = 1; t <= n; ++t) {
    ar += date_corr(real, t);
    ag += date_corr(gen, t);
  }
  ar /= n;
  ag /= n;
  return (ar - ag).squaredNorm() / (d * d);
}

double envelope_mse(const PathBatch& real, const PathBatch& gen) {
  check_compatible(real, gen, "envelope_mse");
  const int n = real.grid.steps, d = real.dim;
  // five envelope curves per dimension: mean, q05, q95, min, max
  auto curves = [&](const PathBatch& b, int t, int k, double out[5]) {
    std::vector<double> xs(static_cast<std::size_t>(b.samples));
    double s1 = 0;
    for (int s = 0; s < b.samples; ++s) {
      xs[static_cast<std::size_t>(s)] = b.at(s, t, k);
      s1 += xs[static_cast<std::size_t>(s)];
    }
    std::sort(xs.begin(), xs.end());
    out[0] = s1 / b.samples;
    out[1] = quantile_sorted(xs, 0.05);
    out[2] = quantile_sorted(xs, 0.95);
    out[3] = xs.front();
    out[4] = xs.back();
  };
  double acc = 0;
  for (int t = 0; t <= n; ++t)
    for (int k = 0; k < d; ++k) {
      double er[5], eg[5];
      curves(real, t, k, er);
      curves(gen, t, k, eg);
      for (int c = 0; c < 5; ++c) {
        const double diff = er[c] - eg[c];
        acc += diff * diff;
      }
    }
  return acc / (5.0 * (n + 1) * d);
}

MetricReport evaluate_batches(const PathBatch& real, const PathBatch& gen) {
  MetricReport r;
  r.fid = fid_avg(real, gen);
  r.qvar = qvar_mse(real, gen);
  r.corr = corr_mse(real, gen);
  r.envelope = envelope_mse(real, gen);
  return r;
}

}  // namespace ets::metrics
