#include "ets/metrics/gaussian.hpp"

#include <cmath>
#include <string>

namespace ets::metrics {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using RowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>;

GaussianSummary empirical_summary(const double* data, int m, int d,
                                  double ridge) {
  if (m < 2 || d < 1)
    throw shape_error("empirical_summary: need m >= 2, d >= 1, got m=" +
                      std::to_string(m) + " d=" + std::to_string(d));
  RowMajorMap x(data, m, d);
  GaussianSummary s;
  s.samples = m;
  s.mean = x.colwise().mean();
  MatrixXd centered = x.rowwise() - s.mean.transpose();
  s.cov = (centered.adjoint() * centered) / static_cast<double>(m);
  s.cov = ((s.cov + s.cov.transpose()) * 0.5).eval();
  s.cov.diagonal().array() += ridge;
  return s;
}

SqrtResult newton_schulz_sqrt(const MatrixXd& a, int iterations) {
  const auto n = a.rows();
  if (n != a.cols())
    throw shape_error("newton_schulz_sqrt: matrix must be square");
  SqrtResult r;
  if (n == 1) {
    const double v = a(0, 0);
    if (v < 0) throw data_error("newton_schulz_sqrt: negative scalar input");
    const double s = std::sqrt(v);
    r.sqrt = MatrixXd::Constant(1, 1, s);
    r.invsqrt = MatrixXd::Constant(1, 1, v > 0 ? 1.0 / s : 0.0);
    r.converged = true;
    return r;
  }
  const double c = a.norm();
  if (c < 1e-300) {
    r.sqrt = MatrixXd::Zero(n, n);
    r.invsqrt = MatrixXd::Zero(n, n);
    r.converged = true;
    return r;
  }
  const MatrixXd eye = MatrixXd::Identity(n, n);
  MatrixXd y = a / c;
  MatrixXd z = eye;
  for (int k = 0; k < iterations; ++k) {
    MatrixXd t = 0.5 * (3.0 * eye - z * y);
    MatrixXd yn = y * t;
    z = (t * z).eval();
    const double step = (yn - y).norm();
    y = std::move(yn);
    ++r.iterations;
    if (step < 1e-14 * y.norm()) break;
  }
  const double sc = std::sqrt(c);
  r.sqrt = y * sc;
  r.invsqrt = z / sc;
  r.residual = (r.sqrt * r.sqrt - a).norm() / std::max(1.0, a.norm());
  r.converged = r.residual <= 1e-6;
  return r;
}

MatrixXd eigen_sqrt(const MatrixXd& a) {
  MatrixXd sym = (a + a.transpose()) * 0.5;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
  if (es.info() != Eigen::Success)
    throw data_error("eigen_sqrt: eigendecomposition failed");
  VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

MatrixXd eigen_invsqrt(const MatrixXd& a, double floor) {
  MatrixXd sym = (a + a.transpose()) * 0.5;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
  if (es.info() != Eigen::Success)
    throw data_error("eigen_invsqrt: eigendecomposition failed");
  VectorXd lam = es.eigenvalues().cwiseMax(floor).cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

namespace {

// Square root of a, preferring Newton-Schulz, falling back to the
// eigendecomposition when the iteration stalls.
MatrixXd robust_sqrt(const MatrixXd& a, int iters, bool* fb) {
  auto r = newton_schulz_sqrt(a, iters);
  if (r.residual > 1e-5) {
    if (fb) *fb = true;
    return eigen_sqrt(a);
  }
  return std::move(r.sqrt);
}

}  // namespace

double bures_sq(const MatrixXd& a, const MatrixXd& b, bool* used_fallback,
                int ns_iterations) {
  if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows())
    throw shape_error("bures_sq: need square matrices of equal size");
  if (used_fallback) *used_fallback = false;
  if (a.rows() == 1) {
    const double d = std::sqrt(std::max(0.0, a(0, 0))) -
                     std::sqrt(std::max(0.0, b(0, 0)));
    return d * d;
  }
  MatrixXd sa = robust_sqrt(a, ns_iterations, used_fallback);
  MatrixXd m = sa * b * sa;
  m = ((m + m.transpose()) * 0.5).eval();
  MatrixXd sm = robust_sqrt(m, ns_iterations, used_fallback);
  return a.trace() + b.trace() - 2.0 * sm.trace();
}

double gaussian_w2_sq(const GaussianSummary& a, const GaussianSummary& b,
                      bool* used_fallback, int ns_iterations) {
  if (a.mean.size() != b.mean.size())
    throw shape_error("gaussian_w2_sq: dimension mismatch");
  return (a.mean - b.mean).squaredNorm() +
         bures_sq(a.cov, b.cov, used_fallback, ns_iterations);
}

double hellinger_trace_one(const MatrixXd& a, const MatrixXd& b) {
  if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows())
    throw shape_error("hellinger_trace_one: need square matrices of equal size");
  if (std::fabs(a.trace() - 1.0) > 1e-8 || std::fabs(b.trace() - 1.0) > 1e-8)
    throw data_error("hellinger_trace_one: inputs must have unit trace");
  return (eigen_sqrt(a) - eigen_sqrt(b)).norm();
}

// ---- differentiable counterparts ------------------------------------------

std::pair<ad::Tensor, ad::Tensor> taped_mean_cov(ad::Tape& tape,
                                                 const ad::Tensor& y,
                                                 double ridge) {
  const int m = y.rows(), d = y.cols();
  if (m < 2) throw shape_error("taped_mean_cov: need at least two rows");
  ad::Tensor mean = ad::colmean(tape, y);
  ad::Tensor centered = ad::sub(tape, y, mean);
  ad::Tensor cov = ad::smul(
      tape, ad::matmul(tape, ad::transpose(tape, centered), centered),
      1.0 / m);
  std::vector<double> ridge_eye(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i) ridge_eye[static_cast<std::size_t>(i) * d + i] = ridge;
  cov = ad::add(tape, cov, ad::Tensor::constant(d, d, std::move(ridge_eye)));
  return {mean, cov};
}

ad::Tensor ns_sqrt_taped(ad::Tape& tape, const ad::Tensor& a, int iterations) {
  const int n = a.rows();
  if (n != a.cols()) throw shape_error("ns_sqrt_taped: matrix must be square");
  double c = 0;
  for (double v : a.values()) c += v * v;
  c = std::sqrt(c);
  if (c < 1e-300)
    throw data_error("ns_sqrt_taped: zero matrix");
  std::vector<double> three(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) three[static_cast<std::size_t>(i) * n + i] = 3.0;
  ad::Tensor eye3 = ad::Tensor::constant(n, n, std::move(three));
  ad::Tensor y = ad::smul(tape, a, 1.0 / c);
  ad::Tensor z = ad::Tensor::identity(n);
  for (int k = 0; k < iterations; ++k) {
    ad::Tensor t =
        ad::smul(tape, ad::sub(tape, eye3, ad::matmul(tape, z, y)), 0.5);
    y = ad::matmul(tape, y, t);
    z = ad::matmul(tape, t, z);
  }
  return ad::smul(tape, y, std::sqrt(c));
}

ad::Tensor bures_sq_taped(ad::Tape& tape, const ad::Tensor& a,
                          const ad::Tensor& b, int iterations) {
  if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows())
    throw shape_error("bures_sq_taped: need square matrices of equal size");
  ad::Tensor sa = ns_sqrt_taped(tape, a, iterations);
  ad::Tensor m = ad::matmul(tape, ad::matmul(tape, sa, b), sa);
  m = ad::smul(tape, ad::add(tape, m, ad::transpose(tape, m)), 0.5);
  ad::Tensor sm = ns_sqrt_taped(tape, m, iterations);
  ad::Tensor cross = ad::smul(tape, ad::trace(tape, sm), -2.0);
  return ad::add(tape, ad::add(tape, ad::trace(tape, a), ad::trace(tape, b)),
                 cross);
}

ad::Tensor bures_vs_const(ad::Tape& tape, const ad::Tensor& cov,
                          const Eigen::MatrixXd& ref, int ns_iterations) {
  const int n = cov.rows();
  if (n != cov.cols() || ref.rows() != n || ref.cols() != n)
    throw shape_error("bures_vs_const: need square matrices of equal size, got " +
                      cov.shape_str());

  RowMajorMap cmap(cov.values().data(), n, n);
  MatrixXd a = (cmap + cmap.transpose()) * 0.5;

  double value = 0;
  MatrixXd grad(n, n);
  if (n == 1) {
    const double av = a(0, 0), bv = ref(0, 0);
    if (av <= 0 || bv < 0)
      throw data_error("bures_vs_const: inputs must be positive");
    const double sa = std::sqrt(av), sb = std::sqrt(bv);
    value = (sa - sb) * (sa - sb);
    grad(0, 0) = 1.0 - sb / sa;
  } else {
    bool fb = false;
    auto nsr = newton_schulz_sqrt(a, ns_iterations);
    MatrixXd sa, isa;
    if (nsr.residual > 1e-5) {
      fb = true;
      sa = eigen_sqrt(a);
      isa = eigen_invsqrt(a);
    } else {
      sa = std::move(nsr.sqrt);
      isa = std::move(nsr.invsqrt);
    }
    MatrixXd m = sa * ref * sa;
    m = ((m + m.transpose()) * 0.5).eval();
    MatrixXd sm = robust_sqrt(m, ns_iterations, &fb);
    value = a.trace() + ref.trace() - 2.0 * sm.trace();
    grad = MatrixXd::Identity(n, n) - isa * sm * isa;
    grad = ((grad + grad.transpose()) * 0.5).eval();
  }

  ad::Tensor out = tape.make_output(1, 1, {value}, cov.data()->requires_grad);
  if (!out.data()->requires_grad) return out;
  auto cd = cov.shared();
  auto od = out.shared();
  std::vector<double> gflat(grad.data(), grad.data() + n * n);
  // grad is symmetric so row/col-major transcription is immaterial
  tape.push_node(
      [cd, od, gflat]() {
        const double g = od->g[0];
        std::vector<double> delta(gflat.size());
        for (std::size_t i = 0; i < gflat.size(); ++i) delta[i] = g * gflat[i];
        ad::accumulate_grad(cd.get(), delta);
      },
      out);
  return out;
}

ad::Tensor gaussian_w2_sq_vs_const(ad::Tape& tape, const ad::Tensor& cloud,
                                   const GaussianSummary& ref, double ridge) {
  const int d = cloud.cols();
  if (ref.mean.size() != d)
    throw shape_error("gaussian_w2_sq_vs_const: dimension mismatch");
  auto [mean, cov] = taped_mean_cov(tape, cloud, ridge);
  std::vector<double> mu(ref.mean.data(), ref.mean.data() + d);
  ad::Tensor diff =
      ad::sub(tape, mean, ad::Tensor::constant(1, d, std::move(mu)));
  ad::Tensor msq = ad::sum(tape, ad::square(tape, diff));
  return ad::add(tape, msq, bures_vs_const(tape, cov, ref.cov));
}

}  // namespace ets::metrics
