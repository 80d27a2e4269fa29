#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ets/metrics/scores.hpp"
#include "ets/sde/sdesim.hpp"

using namespace ets;
using namespace ets::metrics;

namespace {

// Elman cell with pinned weights; expected values precomputed with the same
// recurrence h' = tanh(x Wx + h Wh + bh), readout h Wo + bo.
ElmanParams frozen_net() {
  ElmanParams p;
  p.in = 1;
  p.hidden = 2;
  p.out = 1;
  p.wx = ad::Tensor::param(1, 2, {0.5, -0.25});
  p.wh = ad::Tensor::param(2, 2, {0.1, 0.2, -0.3, 0.4});
  p.bh = ad::Tensor::param(1, 2, {0.05, -0.05});
  p.wo = ad::Tensor::param(2, 1, {1.5, -2.0});
  p.bo = ad::Tensor::param(1, 1, {0.25});
  p.ws = ad::Tensor::param(1, 1, {0.0});  // zero skip keeps the pinned values
  return p;
}

const ScoreConfig kFast{1000, 64, 1e-3, 2, 0.8, 4};

}  // namespace

TEST_CASE("raw rollout reproduces the pinned forward oracle") {
  auto net = frozen_net();
  const double seq[3] = {0.2, 0.3, -0.1};
  double outs[3];
  net.forward_values(seq, 3, outs);
  CHECK(outs[2] == doctest::Approx(0.40768758659858984).epsilon(1e-14));
  const double sig = 1.0 / (1.0 + std::exp(-outs[2]));
  CHECK(sig == doctest::Approx(0.6005332760987304).epsilon(1e-14));
}

TEST_CASE("taped rollout matches the raw rollout") {
  auto net = frozen_net();
  const double seq[3] = {0.2, 0.3, -0.1};
  double outs[3];
  net.forward_values(seq, 3, outs);

  ad::Tape tape;
  std::vector<ad::Tensor> dates;
  for (double x : seq) dates.push_back(ad::Tensor::constant(1, 1, {x}));
  ad::Tensor last = net.rollout_last(tape, dates);
  CHECK(last.values()[0] == doctest::Approx(outs[2]).epsilon(1e-15));
  auto all = net.rollout_all(tape, dates);
  REQUIRE(all.size() == 3);
  for (int t = 0; t < 3; ++t)
    CHECK(all[static_cast<std::size_t>(t)].values()[0] ==
          doctest::Approx(outs[t]).epsilon(1e-15));
}

TEST_CASE("rollout gradients flow to every parameter") {
  auto net = frozen_net();
  ad::Tape tape;
  std::vector<ad::Tensor> dates;
  for (double x : {0.2, 0.3, -0.1})
    dates.push_back(ad::Tensor::constant(1, 1, {x}));
  ad::Tensor loss = ad::mean(tape, net.rollout_last(tape, dates));
  tape.backward(loss);
  for (const auto& p : net.all()) {
    double norm = 0;
    for (double g : p.grad_vector()) norm += std::fabs(g);
    CHECK(norm > 0.0);
  }
}

TEST_CASE("discriminative score separates different laws, not reruns") {
  const sde::TimeGrid g{0.0, 0.25, 30};
  sde::BsParams bs;
  sde::OuParams ou;
  auto real = simulate_bs(bs, g, 256, 101);
  auto rerun = simulate_bs(bs, g, 256, 202);
  auto other = simulate_ou(ou, g, 256, 303);

  // same law, fresh seed: close to indistinguishable
  CHECK(discriminative_score(real, rerun, 7, kFast) < 0.2);
  // BS drifts to ~0.24 while OU pulls to ~0.6: near-perfect separation
  CHECK(discriminative_score(real, other, 7, kFast) > 0.3);
}

TEST_CASE("predictive score prefers matched dynamics") {
  const sde::TimeGrid g{0.0, 0.25, 30};
  sde::OuParams ou;
  auto real = simulate_ou(ou, g, 256, 404);
  auto gen = simulate_ou(ou, g, 256, 505);
  const double matched = predictive_score(real, gen, 9, kFast);
  CHECK(matched > 0.0);
  CHECK(matched < 0.05);  // one-step OU moves are ~sigma*sqrt(dt) ~ 0.009

  // a predictor trained on a constant-path batch has to do worse
  auto flat = gen;
  for (auto& v : flat.values) v = 0.2;
  const double mismatched = predictive_score(real, flat, 9, kFast);
  CHECK(mismatched > matched);
}

TEST_CASE("score input validation") {
  const sde::TimeGrid g{0.0, 0.25, 30};
  sde::BsParams bs;
  auto a = simulate_bs(bs, g, 64, 1);
  auto b = simulate_bs(bs, {0.0, 0.25, 15}, 64, 1);
  CHECK_THROWS_AS(discriminative_score(a, b, 1, kFast), shape_error);
  sde::BsParams q = bs;
  q.dim = 2;
  auto c = simulate_bs(q, g, 64, 1);
  CHECK_THROWS_AS(predictive_score(a, c, 1, kFast), shape_error);
}
