#include "ets/sde/sdesim.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>

#include "ets/rng.hpp"

namespace ets::sde {

void BsParams::validate() const {
  if (sigma < 0) throw data_error("BsParams: sigma must be non-negative");
  if (dim < 1) throw data_error("BsParams: dim must be positive");
  if (!std::isfinite(r) || !std::isfinite(sigma) || !std::isfinite(x0))
    throw data_error("BsParams: non-finite parameter");
  if (!corr.empty() &&
      corr.size() != static_cast<std::size_t>(dim) * dim)
    throw data_error("BsParams: corr must be dim x dim");
}

void OuParams::validate() const {
  if (sigma < 0) throw data_error("OuParams: sigma must be non-negative");
  if (!std::isfinite(theta) || !std::isfinite(mu) || !std::isfinite(sigma) ||
      !std::isfinite(x0))
    throw data_error("OuParams: non-finite parameter");
}

void euler_step(const double* x, const double* drift, const double* vol,
                int d, double dt, const double* z, double* out) {
  for (int a = 0; a < d; ++a) {
    double diff = 0.0;
    for (int b = 0; b < d; ++b) diff += vol[a * d + b] * z[b];
    out[a] = x[a] + drift[a] * dt + diff;
  }
}

std::vector<double> cholesky_corr(const std::vector<double>& corr, int dim) {
  if (corr.size() != static_cast<std::size_t>(dim) * dim)
    throw data_error("correlation matrix: expected dim x dim values");
  Eigen::MatrixXd C(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j)
      C(i, j) = corr[static_cast<std::size_t>(i) * dim + j];
  for (int i = 0; i < dim; ++i) {
    if (std::fabs(C(i, i) - 1.0) > 1e-12)
      throw data_error("correlation matrix: diagonal must be 1");
    for (int j = 0; j < i; ++j)
      if (std::fabs(C(i, j) - C(j, i)) > 1e-12)
        throw data_error("correlation matrix: not symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(C);
  if (llt.info() != Eigen::Success)
    throw data_error("correlation matrix: not positive definite");
  Eigen::MatrixXd L = llt.matrixL();
  std::vector<double> out(static_cast<std::size_t>(dim) * dim, 0.0);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j <= i; ++j)
      out[static_cast<std::size_t>(i) * dim + j] = L(i, j);
  return out;
}

namespace {

// Shared driver: `update` advances one sample state in place given the
// correlated, sqrt(dt)-scaled noise for one date.
template <typename Update>
PathBatch run_sim(const TimeGrid& g, int samples, int dim, double x0,
                  std::uint64_t seed, const std::vector<double>& chol,
                  Update update) {
  g.validate();
  if (samples < 1) throw shape_error("simulate: samples must be positive");
  PathBatch out = PathBatch::zeros(g, samples, dim);
  const double dt = g.dt();
  const double sdt = std::sqrt(dt);
  std::vector<double> z(dim), w(dim);
  for (int s = 0; s < samples; ++s) {
    CounterRng rng(seed, streams::kSample + static_cast<std::uint64_t>(s));
    double* prev = out.state(s, 0);
    for (int k = 0; k < dim; ++k) prev[k] = x0;
    for (int i = 0; i < g.steps; ++i) {
      for (int k = 0; k < dim; ++k) z[k] = rng.next_gauss();
      if (chol.empty()) {
        for (int k = 0; k < dim; ++k) w[k] = sdt * z[k];
      } else {
        for (int a = 0; a < dim; ++a) {
          double acc = 0.0;
          for (int b = 0; b <= a; ++b)
            acc += chol[static_cast<std::size_t>(a) * dim + b] * z[b];
          w[a] = sdt * acc;
        }
      }
      double* next = out.state(s, i + 1);
      update(g.time(i), prev, w.data(), next);
      prev = next;
    }
  }
  return out;
}

}  // namespace

PathBatch simulate_bs(const BsParams& p, const TimeGrid& g, int samples,
                      std::uint64_t seed) {
  p.validate();
  std::vector<double> chol;
  if (!p.corr.empty()) chol = cholesky_corr(p.corr, p.dim);
  return run_sim(g, samples, p.dim, p.x0, seed, chol,
                 [&](double, const double* x, const double* w, double* nx) {
                   for (int k = 0; k < p.dim; ++k)
                     nx[k] = x[k] + (p.r * x[k]) * g.dt() +
                             (p.sigma * x[k]) * w[k];
                 });
}

PathBatch simulate_ou(const OuParams& p, const TimeGrid& g, int samples,
                      std::uint64_t seed) {
  p.validate();
  return run_sim(g, samples, 1, p.x0, seed, {},
                 [&](double, const double* x, const double* w, double* nx) {
                   nx[0] = x[0] + (p.theta * (p.mu - x[0])) * g.dt() +
                           p.sigma * w[0];
                 });
}

MomentCurve closed_form_moments_bs(const BsParams& p, const TimeGrid& g) {
  p.validate();
  g.validate();
  if (p.dim != 1)
    throw shape_error("closed_form_moments_bs: scalar process only");
  MomentCurve c;
  const double dt = g.dt();
  const double a = 1.0 + p.r * dt;
  const double b = a * a + p.sigma * p.sigma * dt;
  for (int i = 0; i <= g.steps; ++i) {
    const double t = g.time(i) - g.t0;
    const double md = p.x0 * std::pow(a, i);
    const double m2 = p.x0 * p.x0 * std::pow(b, i);
    c.mean_disc.push_back(md);
    c.var_disc.push_back(m2 - md * md);
    const double mc = p.x0 * std::exp(p.r * t);
    c.mean_cont.push_back(mc);
    c.var_cont.push_back(mc * mc * (std::exp(p.sigma * p.sigma * t) - 1.0));
  }
  return c;
}

MomentCurve closed_form_moments_ou(const OuParams& p, const TimeGrid& g) {
  p.validate();
  g.validate();
  MomentCurve c;
  const double dt = g.dt();
  const double a = 1.0 - p.theta * dt;
  for (int i = 0; i <= g.steps; ++i) {
    const double t = g.time(i) - g.t0;
    c.mean_disc.push_back(p.mu + (p.x0 - p.mu) * std::pow(a, i));
    // Var_{n+1} = a^2 Var_n + sigma^2 dt
    double vd;
    if (std::fabs(1.0 - a * a) < 1e-14)
      vd = p.sigma * p.sigma * dt * i;
    else
      vd = p.sigma * p.sigma * dt * (1.0 - std::pow(a * a, i)) /
           (1.0 - a * a);
    c.var_disc.push_back(vd);
    c.mean_cont.push_back(p.mu + (p.x0 - p.mu) * std::exp(-p.theta * t));
    double vc;
    if (std::fabs(p.theta) < 1e-14)
      vc = p.sigma * p.sigma * t;
    else
      vc = p.sigma * p.sigma * (1.0 - std::exp(-2.0 * p.theta * t)) /
           (2.0 * p.theta);
    c.var_cont.push_back(vc);
  }
  return c;
}

}  // namespace ets::sde
