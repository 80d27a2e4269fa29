#pragma once

#include <Eigen/Dense>
#include <utility>

#include "ets/ad/tensor.hpp"
#include "ets/errors.hpp"

namespace ets::metrics {

// First two moments of a sample cloud.  `cov` carries the ridge term added by
// empirical_summary, so two summaries built with the same ridge are directly
// comparable.
struct GaussianSummary {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  int samples = 0;
};

// data is row-major m x d.  Covariance normalised by 1/m and regularised with
// ridge * I.  Requires m >= 2.
GaussianSummary empirical_summary(const double* data, int m, int d,
                                  double ridge = 1e-6);

struct SqrtResult {
  Eigen::MatrixXd sqrt;
  Eigen::MatrixXd invsqrt;
  double residual = 0.0;  // ||sqrt*sqrt - a||_F / max(1, ||a||_F)
  bool converged = false;
  int iterations = 0;
};

// Coupled Newton-Schulz iteration for the principal square root of an SPD
// matrix.  Scaled by the Frobenius norm, so convergence degrades with the
// condition number; the default budget is comfortable up to cond ~1e4.
SqrtResult newton_schulz_sqrt(const Eigen::MatrixXd& a, int iterations = 20);

// Square root through an eigendecomposition, clamping negative eigenvalues to
// zero.  Slow path used as a fallback and in non-differentiable code.
Eigen::MatrixXd eigen_sqrt(const Eigen::MatrixXd& a);
Eigen::MatrixXd eigen_invsqrt(const Eigen::MatrixXd& a, double floor = 1e-12);

// Squared Bures distance tr(a) + tr(b) - 2 tr((a^1/2 b a^1/2)^1/2).
// Falls back to the eigendecomposition when Newton-Schulz stalls and reports
// that through used_fallback when provided.
double bures_sq(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                bool* used_fallback = nullptr, int ns_iterations = 20);

// Squared Gaussian 2-Wasserstein distance ||mu_a - mu_b||^2 + bures_sq.
double gaussian_w2_sq(const GaussianSummary& a, const GaussianSummary& b,
                      bool* used_fallback = nullptr, int ns_iterations = 20);

// Frobenius distance between matrix square roots of two trace-one SPD
// matrices.  Rejects inputs whose trace strays from 1 by more than 1e-8.
double hellinger_trace_one(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// ---- differentiable counterparts ------------------------------------------

// Mean (1 x d) and ridge-regularised covariance (d x d) of a cloud tensor
// (m x d), built from recorded ops.
std::pair<ad::Tensor, ad::Tensor> taped_mean_cov(ad::Tape& tape,
                                                 const ad::Tensor& y,
                                                 double ridge = 1e-6);

// Newton-Schulz square root unrolled onto the tape.  The Frobenius scaling
// factor is captured as a constant; at convergence the value and gradient do
// not depend on it.
ad::Tensor ns_sqrt_taped(ad::Tape& tape, const ad::Tensor& a,
                         int iterations = 20);

// Squared Bures distance with both arguments on the tape.
ad::Tensor bures_sq_taped(ad::Tape& tape, const ad::Tensor& a,
                          const ad::Tensor& b, int iterations = 20);

// Fused node for the common case of a fixed reference: forward runs the raw
// Newton-Schulz (eigen fallback), backward applies the closed-form gradient
//   d/dA bures_sq(A, B) = I - A^{-1/2} (A^{1/2} B A^{1/2})^{1/2} A^{-1/2}.
// One node instead of an unrolled iteration; cov must be SPD (ridge it).
ad::Tensor bures_vs_const(ad::Tape& tape, const ad::Tensor& cov,
                          const Eigen::MatrixXd& ref, int ns_iterations = 20);

// Squared Gaussian W2 between a generated cloud (m x d tensor) and a frozen
// summary; combines taped_mean_cov with bures_vs_const.
ad::Tensor gaussian_w2_sq_vs_const(ad::Tape& tape, const ad::Tensor& cloud,
                                   const GaussianSummary& ref,
                                   double ridge = 1e-6);

}  // namespace ets::metrics
