#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "ets/metrics/gaussian.hpp"
#include "ets/metrics/path_metrics.hpp"
#include "ets/rng.hpp"
#include "ets/sde/sdesim.hpp"
#include "testutil.hpp"

using namespace ets;
using namespace ets::metrics;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd mat2(double a, double b, double c, double d) {
  MatrixXd m(2, 2);
  m << a, b, c, d;
  return m;
}

// random SPD matrix with prescribed eigenvalues
MatrixXd random_spd(const VectorXd& eigs, CounterRng& rng) {
  const auto n = eigs.size();
  MatrixXd w(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) w(i, j) = rng.next_gauss();
  Eigen::HouseholderQR<MatrixXd> qr(w);
  MatrixXd q = qr.householderQ();
  return q * eigs.asDiagonal() * q.transpose();
}

const MatrixXd kA = mat2(2.0, 0.5, 0.5, 1.0);
const MatrixXd kB = mat2(1.0, -0.3, -0.3, 1.5);

}  // namespace

TEST_CASE("matrix square root matches the eigendecomposition oracle") {
  // sqrt([[2,.5],[.5,1]]) precomputed by eigendecomposition
  MatrixXd want = mat2(1.3984702048606807, 0.21043071571642333,
                       0.2104307157164234, 0.9776087734278339);
  auto ns = newton_schulz_sqrt(kA);
  CHECK(ns.converged);
  CHECK((ns.sqrt - want).norm() < 1e-10);
  CHECK((eigen_sqrt(kA) - want).norm() < 1e-12);
  CHECK((ns.invsqrt * want - MatrixXd::Identity(2, 2)).norm() < 1e-8);
}

TEST_CASE("newton-schulz stays accurate up to condition number 1e4") {
  CounterRng rng(77, 0);
  for (double cond : {10.0, 1e2, 1e3, 1e4}) {
    VectorXd eigs(6);
    for (int i = 0; i < 6; ++i)
      eigs[i] = std::pow(cond, -i / 5.0);  // geometric from 1 down to 1/cond
    MatrixXd a = random_spd(eigs, rng);
    auto r = newton_schulz_sqrt(a);
    CHECK(r.converged);
    CHECK(r.residual <= 1e-6);
    CHECK((r.invsqrt * r.sqrt - MatrixXd::Identity(6, 6)).norm() < 1e-5);
  }
}

TEST_CASE("squared bures distance matches the frozen oracle") {
  bool fb = false;
  CHECK(bures_sq(kA, kB, &fb) ==
        doctest::Approx(0.4634711896064747).epsilon(1e-9));
  CHECK_FALSE(fb);
  CHECK(bures_sq(kA, kA) == doctest::Approx(0.0).scale(1).epsilon(1e-10));

  // commuting diagonal case: bures^2 = sum (sqrt(a_i) - sqrt(b_i))^2
  MatrixXd da = mat2(4.0, 0.0, 0.0, 9.0);
  MatrixXd db = mat2(1.0, 0.0, 0.0, 16.0);
  CHECK(bures_sq(da, db) == doctest::Approx(2.0).epsilon(1e-8));
}

TEST_CASE("gaussian W2 matches frozen values and the 1-d closed form") {
  GaussianSummary a{VectorXd(2), kA, 0};
  a.mean << 0.1, -0.2;
  GaussianSummary b{VectorXd(2), kB, 0};
  b.mean << 0.3, 0.4;
  CHECK(gaussian_w2_sq(a, b) ==
        doctest::Approx(0.8634711896064748).epsilon(1e-9));

  // W2^2(N(0,1), N(1,4)) = 1 + (1-2)^2 = 2
  GaussianSummary u{VectorXd::Zero(1), MatrixXd::Constant(1, 1, 1.0), 0};
  GaussianSummary v{VectorXd::Ones(1), MatrixXd::Constant(1, 1, 4.0), 0};
  CHECK(gaussian_w2_sq(u, v) == doctest::Approx(2.0).epsilon(1e-8));
}

TEST_CASE("hellinger oracle and comparison against bures") {
  MatrixXd a1 = kA / kA.trace();
  MatrixXd b1 = kB / kB.trace();
  CHECK(hellinger_trace_one(a1, b1) ==
        doctest::Approx(0.40116440171537154).epsilon(1e-9));
  const double b2 = bures_sq(a1, b1);
  CHECK(std::sqrt(2.0 * b2) ==
        doctest::Approx(0.5673089211623681).epsilon(1e-9));

  CHECK_THROWS_AS(hellinger_trace_one(kA, kB), data_error);

  // hellinger <= sqrt(2) * bures on random trace-one SPD pairs
  CounterRng rng(5, 1);
  for (int rep = 0; rep < 100; ++rep) {
    VectorXd e1(3), e2(3);
    for (int i = 0; i < 3; ++i) {
      e1[i] = 0.05 + rng.next_unit();
      e2[i] = 0.05 + rng.next_unit();
    }
    MatrixXd x = random_spd(e1, rng);
    MatrixXd y = random_spd(e2, rng);
    x /= x.trace();
    y /= y.trace();
    const double h = hellinger_trace_one(x, y);
    CHECK(h <= std::sqrt(2.0 * bures_sq(x, y)) + 1e-9);
  }
}

TEST_CASE("gaussian W2 satisfies the triangle inequality") {
  CounterRng rng(6, 2);
  for (int rep = 0; rep < 100; ++rep) {
    GaussianSummary s[3];
    for (auto& g : s) {
      VectorXd e(3);
      for (int i = 0; i < 3; ++i) e[i] = 0.1 + rng.next_unit();
      g.cov = random_spd(e, rng);
      g.mean = VectorXd(3);
      for (int i = 0; i < 3; ++i) g.mean[i] = rng.next_gauss();
    }
    const double ab = std::sqrt(std::max(0.0, gaussian_w2_sq(s[0], s[1])));
    const double bc = std::sqrt(std::max(0.0, gaussian_w2_sq(s[1], s[2])));
    const double ac = std::sqrt(std::max(0.0, gaussian_w2_sq(s[0], s[2])));
    CHECK(ac <= ab + bc + 1e-9);
  }
}

TEST_CASE("empirical summary is permutation invariant and ridge aware") {
  CounterRng rng(9, 3);
  const int m = 40, d = 3;
  std::vector<double> data(m * d);
  for (auto& x : data) x = rng.next_gauss();
  auto s1 = empirical_summary(data.data(), m, d);
  // reverse the row order
  std::vector<double> rev(m * d);
  for (int s = 0; s < m; ++s)
    for (int k = 0; k < d; ++k)
      rev[static_cast<std::size_t>(s) * d + k] =
          data[static_cast<std::size_t>(m - 1 - s) * d + k];
  auto s2 = empirical_summary(rev.data(), m, d);
  CHECK((s1.mean - s2.mean).norm() < 1e-14);
  CHECK((s1.cov - s2.cov).norm() < 1e-13);
  // ridge shows up on the diagonal
  auto s3 = empirical_summary(data.data(), m, d, 0.5);
  CHECK((s3.cov - s1.cov).trace() == doctest::Approx(3 * (0.5 - 1e-6)));
  CHECK_THROWS_AS(empirical_summary(data.data(), 1, d), shape_error);
}

TEST_CASE("taped mean/cov agrees with the raw summary") {
  CounterRng rng(10, 4);
  const int m = 12, d = 3;
  std::vector<double> data(m * d);
  for (auto& x : data) x = rng.next_gauss();
  auto raw = empirical_summary(data.data(), m, d);

  ad::Tape tape;
  ad::Tensor y = ad::Tensor::param(m, d, data);
  auto [mean, cov] = taped_mean_cov(tape, y);
  for (int k = 0; k < d; ++k)
    CHECK(mean.values()[static_cast<std::size_t>(k)] ==
          doctest::Approx(raw.mean[k]).epsilon(1e-13));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      CHECK(cov.values()[static_cast<std::size_t>(i) * d + j] ==
            doctest::Approx(raw.cov(i, j)).epsilon(1e-12));
}

TEST_CASE("taped newton-schulz reproduces the raw square root") {
  ad::Tape tape;
  ad::Tensor a = ad::Tensor::param(2, 2, {2.0, 0.5, 0.5, 1.0});
  ad::Tensor s = ns_sqrt_taped(tape, a);
  MatrixXd want = mat2(1.3984702048606807, 0.21043071571642333,
                       0.2104307157164234, 0.9776087734278339);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      CHECK(s.values()[static_cast<std::size_t>(i) * 2 + j] ==
            doctest::Approx(want(i, j)).epsilon(1e-10));
}

TEST_CASE("taped and fused bures agree with the oracle value") {
  std::vector<double> av = {2.0, 0.5, 0.5, 1.0};
  std::vector<double> bv = {1.0, -0.3, -0.3, 1.5};
  ad::Tape tape;
  ad::Tensor a = ad::Tensor::param(2, 2, av);
  ad::Tensor b = ad::Tensor::constant(2, 2, bv);
  ad::Tensor unrolled = bures_sq_taped(tape, a, b);
  CHECK(unrolled.values()[0] ==
        doctest::Approx(0.4634711896064747).epsilon(1e-9));
  ad::Tensor fused = bures_vs_const(tape, a, kB);
  CHECK(fused.values()[0] == doctest::Approx(0.4634711896064747).epsilon(1e-9));
}

TEST_CASE("fused bures gradient matches finite differences") {
  // f(C) = bures_vs_const((C + C^T)/2, B) checked entrywise
  CounterRng rng(11, 5);
  VectorXd eigs(3);
  eigs << 1.5, 0.7, 0.2;
  MatrixXd a0 = random_spd(eigs, rng);
  MatrixXd b0 = random_spd(eigs, rng);
  std::vector<double> av(a0.data(), a0.data() + 9);  // symmetric, order moot

  auto rep = testutil::fd_check(
      {{3, 3}}, {av},
      [&](ad::Tape& tape, const std::vector<ad::Tensor>& in) {
        return bures_vs_const(tape, in[0], b0);
      });
  CHECK_MESSAGE(rep.ok, rep.detail);

  // and the unrolled tape version computes the same gradient
  ad::Tape t1;
  ad::Tensor a1 = ad::Tensor::param(3, 3, av);
  t1.backward(bures_vs_const(t1, a1, b0));
  ad::Tape t2;
  ad::Tensor a2 = ad::Tensor::param(3, 3, av);
  std::vector<double> b0v(b0.data(), b0.data() + 9);
  t2.backward(bures_sq_taped(t2, a2, ad::Tensor::constant(3, 3, b0v)));
  for (int i = 0; i < 9; ++i)
    CHECK(a1.grad_vector()[static_cast<std::size_t>(i)] ==
          doctest::Approx(a2.grad_vector()[static_cast<std::size_t>(i)])
              .epsilon(1e-6));
}

TEST_CASE("cloud-level W2 loss gradient matches finite differences") {
  CounterRng rng(12, 6);
  const int m = 6, d = 2;
  std::vector<double> cloud(m * d);
  for (auto& x : cloud) x = 0.3 + 0.2 * rng.next_gauss();
  std::vector<double> refdata(20 * d);
  for (auto& x : refdata) x = 0.1 + 0.4 * rng.next_gauss();
  auto ref = empirical_summary(refdata.data(), 20, d);

  auto rep = testutil::fd_check(
      {{m, d}}, {cloud},
      [&](ad::Tape& tape, const std::vector<ad::Tensor>& in) {
        return gaussian_w2_sq_vs_const(tape, in[0], ref);
      });
  CHECK_MESSAGE(rep.ok, rep.detail);
}

TEST_CASE("quantile interpolation on order statistics") {
  std::vector<double> v = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  CHECK(quantile_sorted(v, 0.05) == doctest::Approx(1.45).epsilon(1e-12));
  CHECK(quantile_sorted(v, 0.95) == doctest::Approx(9.55).epsilon(1e-12));
  CHECK(quantile_sorted(v, 0.0) == 1.0);
  CHECK(quantile_sorted(v, 1.0) == 10.0);
  std::vector<double> w = {1, 1, 3, 4, 5};  // sorted [3,1,4,1,5]
  CHECK(quantile_sorted(w, 0.05) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(quantile_sorted(w, 0.5) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("path metrics vanish on identical batches") {
  sde::BsParams p;
  auto b = simulate_bs(p, {0.0, 0.25, 30}, 64, 21);
  auto r = evaluate_batches(b, b);
  CHECK(std::fabs(r.fid) < 1e-9);
  CHECK(r.qvar == 0.0);
  CHECK(r.corr == 0.0);
  CHECK(r.envelope == 0.0);
}

TEST_CASE("a constant shift moves fid and envelope but not qvar or corr") {
  sde::BsParams p;
  auto real = simulate_bs(p, {0.0, 0.25, 30}, 200, 22);
  auto gen = real;
  for (auto& v : gen.values) v += 0.1;
  CHECK(fid_avg(real, gen) == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(envelope_mse(real, gen) == doctest::Approx(0.01).epsilon(1e-9));
  CHECK(qvar_mse(real, gen) == doctest::Approx(0.0).scale(1).epsilon(1e-15));
  CHECK(corr_mse(real, gen) < 1e-12);
}

TEST_CASE("correlation metric separates independent from correlated paths") {
  sde::BsParams ind;
  ind.dim = 2;
  ind.corr = {1.0, 0.0, 0.0, 1.0};
  sde::BsParams dep = ind;
  dep.corr = {1.0, 0.8, 0.8, 1.0};
  const sde::TimeGrid g{0.0, 0.25, 30};
  auto a = simulate_bs(ind, g, 500, 31);
  auto b = simulate_bs(dep, g, 500, 32);
  auto a2 = simulate_bs(ind, g, 500, 33);
  CHECK(corr_mse(a, b) > 0.1);       // ~ 2 * 0.8^2 / 4 = 0.32
  CHECK(corr_mse(a, a2) < 0.01);     // same law, sampling noise only
}

TEST_CASE("metric input validation") {
  sde::BsParams p;
  auto a = simulate_bs(p, {0.0, 0.25, 30}, 16, 1);
  auto b = simulate_bs(p, {0.0, 0.25, 15}, 16, 1);
  CHECK_THROWS_AS(fid_avg(a, b), shape_error);
  sde::BsParams q = p;
  q.dim = 2;
  auto c = simulate_bs(q, {0.0, 0.25, 30}, 16, 1);
  CHECK_THROWS_AS(qvar_mse(a, c), shape_error);
}
