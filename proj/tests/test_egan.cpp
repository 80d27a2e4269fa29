#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "ets/ad/adam.hpp"
#include "ets/gan/critic.hpp"
#include "ets/gan/train.hpp"
#include "ets/rng.hpp"
#include "ets/sde/sdesim.hpp"
#include "testutil.hpp"

using namespace ets;
using namespace ets::gan;

namespace {

ad::Mlp linear_critic(int inputs, std::vector<double> w, double b) {
  std::vector<ad::LayerSpec> spec{{inputs, 1, ad::Activation::kIdentity}};
  std::vector<ad::Tensor> params;
  params.push_back(ad::Tensor::param(inputs, 1, std::move(w)));
  params.push_back(ad::Tensor::param(1, 1, {b}));
  return ad::Mlp::from_params(std::move(spec), std::move(params));
}

bool same_values(const std::vector<ad::Tensor>& a,
                 const std::vector<ad::Tensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].values() != b[i].values()) return false;
  return true;
}

struct TempFile {
  std::string path;
  explicit TempFile(const char* name)
      : path((std::filesystem::temp_directory_path() / name).string()) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("gan config validation") {
  GanConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.n_critic = 0;
  CHECK_THROWS_AS(cfg.validate(), shape_error);
  cfg.n_critic = 5;
  cfg.gp_coef = -1.0;
  CHECK_THROWS_AS(cfg.validate(), shape_error);
  cfg.gp_coef = 10.0;
  cfg.batch = 1;
  CHECK_THROWS_AS(cfg.validate(), shape_error);
  cfg.batch = 300;
  cfg.lr_critic = -0.1;
  CHECK_THROWS_AS(cfg.validate(), shape_error);
  cfg.lr_critic = 0.0;  // zero is a legal freeze
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("critic factories size their nets to the flavour") {
  auto t = Critic::temporal(2, 5, 3, 0, 11);
  CHECK(t.net.input_dim() == 10);
  CHECK(t.net.output_dim() == 1);
  CHECK(t.net.layers().size() == 4);       // 3 hidden + readout
  CHECK(t.net.layers()[0].out == 40);      // 4 * steps * dim

  auto m = Critic::marginal(3, 3, 0, 11);
  CHECK(m.net.input_dim() == 4);           // (t/T, x)
  CHECK(m.net.layers()[0].out == 12);      // 4 * dim
  CHECK(m.net.output_dim() == 1);

  CHECK_THROWS_AS(Critic::temporal(0, 5, 3, 0, 1), shape_error);
  CHECK_THROWS_AS(Critic::marginal(1, 0, 0, 1), shape_error);

  SUBCASE("factories are deterministic in the seed") {
    auto again = Critic::temporal(2, 5, 3, 0, 11);
    CHECK(same_values(t.net.params(), again.net.params()));
  }
}

TEST_CASE("flattening keeps dates after the start, dimension innermost") {
  sde::TimeGrid g{0.0, 0.2, 2};
  auto b = sde::PathBatch::zeros(g, 2, 2);
  int v = 0;
  for (int s = 0; s < 2; ++s)
    for (int i = 0; i <= 2; ++i)
      for (int j = 0; j < 2; ++j) b.at(s, i, j) = v++;
  const auto flat = flatten_sequences(b);
  REQUIRE(flat.size() == 8);
  // sample 0: dates 1,2 of dims 0,1
  CHECK(flat == std::vector<double>{2, 3, 4, 5, 8, 9, 10, 11});
}

TEST_CASE("dual estimate is the mean critic gap") {
  SUBCASE("constant critic scores zero") {
    auto c = linear_critic(1, {0.0}, 3.7);
    CHECK(w1_dual_estimate(c, {0.4, 0.6}, {5.0, 9.0}, 2) == 0.0);
  }

  SUBCASE("identity critic reads off the mean difference") {
    auto c = linear_critic(1, {1.0}, 0.0);
    CHECK(w1_dual_estimate(c, {0.5, 1.5}, {-0.5, 0.5}, 2) == 1.0);

    ad::Tape tape;
    auto xr = ad::Tensor::constant(2, 1, {0.5, 1.5});
    auto xg = ad::Tensor::constant(2, 1, {-0.5, 0.5});
    CHECK(w1_dual_estimate(tape, c, xr, xg).value() == 1.0);
  }

  SUBCASE("shape mismatches are rejected") {
    auto c = linear_critic(2, {1.0, 1.0}, 0.0);
    CHECK_THROWS_AS(w1_dual_estimate(c, {0.5, 1.5, 0.7}, {0.0, 0.0}, 1),
                    shape_error);
    ad::Tape tape;
    auto a = ad::Tensor::constant(2, 2, {0, 0, 0, 0});
    auto b = ad::Tensor::constant(3, 2, {0, 0, 0, 0, 0, 0});
    CHECK_THROWS_AS(w1_dual_estimate(tape, c, a, b), shape_error);
  }
}

TEST_CASE("gradient penalty closed forms") {
  SUBCASE("unit-coefficient linear critic") {
    const int n = 6;
    auto c = linear_critic(n, std::vector<double>(n, 1.0), 0.5);
    ad::Tape tape;
    std::vector<double> xs(4 * n, 0.3), ys(4 * n, -1.2);
    auto pen = gradient_penalty(tape, c, ad::Tensor::constant(4, n, xs),
                                ad::Tensor::constant(4, n, ys), 5);
    const double want = (std::sqrt(6.0) - 1.0) * (std::sqrt(6.0) - 1.0);
    CHECK(pen.value() == doctest::Approx(want).epsilon(1e-12));
  }

  SUBCASE("zero critic sits at the unit mark") {
    auto c = linear_critic(3, {0.0, 0.0, 0.0}, 0.0);
    ad::Tape tape;
    std::vector<double> xs(6, 1.0), ys(6, 2.0);
    auto pen = gradient_penalty(tape, c, ad::Tensor::constant(2, 3, xs),
                                ad::Tensor::constant(2, 3, ys), 5);
    CHECK(pen.value() == doctest::Approx(1.0).epsilon(1e-5));
  }

  SUBCASE("penalty gradients match finite differences") {
    // 2 -> 3 tanh -> 1 net; probes fixed, parameters perturbed
    std::vector<std::pair<int, int>> shapes{{2, 3}, {1, 3}, {3, 1}, {1, 1}};
    std::vector<std::vector<double>> values{
        {0.4, -0.3, 0.2, 0.1, 0.5, -0.2}, {0.05, -0.1, 0.0},
        {0.7, -0.6, 0.3}, {0.2}};
    auto xr = ad::Tensor::constant(5, 2, {0.1, 0.9, -0.4, 0.3, 0.8, -0.2,
                                          0.5, 0.5, -0.7, 0.1});
    auto xg = ad::Tensor::constant(5, 2, {0.6, -0.1, 0.2, 0.2, -0.3, 0.9,
                                          0.0, -0.5, 0.4, 0.4});
    auto rep = testutil::fd_check(
        shapes, values,
        [&](ad::Tape& tape, const std::vector<ad::Tensor>& leaves) {
          std::vector<ad::LayerSpec> spec{{2, 3, ad::Activation::kTanh},
                                          {3, 1, ad::Activation::kIdentity}};
          auto net = ad::Mlp::from_params(spec, leaves);
          return gradient_penalty(tape, net, xr, xg, 33);
        });
    INFO(rep.detail);
    CHECK(rep.ok);
    CHECK(rep.checked == 13);
  }

  SUBCASE("the uniform draws follow the documented stream") {
    // one u per row from (seed, 0); rebuilding the interpolates by hand and
    // finite-differencing the input gradient must reproduce the penalty
    CounterRng probe(91, 0);
    auto c = Critic::temporal(1, 3, 2, 5, 7);  // 3 inputs, width 5
    const int m = 6, n = 3;
    CounterRng fill(4, 0);
    std::vector<double> xs(m * n), ys(m * n);
    for (auto& v : xs) v = fill.next_gauss();
    for (auto& v : ys) v = fill.next_gauss();

    ad::Tape tape;
    auto pen = gradient_penalty(tape, c.net, ad::Tensor::constant(m, n, xs),
                                ad::Tensor::constant(m, n, ys), 91);

    double want = 0.0;
    const double h = 1e-6;
    for (int s = 0; s < m; ++s) {
      const double u = probe.next_unit_open();
      std::vector<double> row(n);
      for (int j = 0; j < n; ++j)
        row[j] = u * xs[s * n + j] + (1.0 - u) * ys[s * n + j];
      double norm_sq = 0.0;
      for (int j = 0; j < n; ++j) {
        auto rp = row, rm = row;
        rp[j] += h;
        rm[j] -= h;
        const double d = (c.net.forward_values(rp)[0] -
                          c.net.forward_values(rm)[0]) /
                         (2 * h);
        norm_sq += d * d;
      }
      const double excess = std::sqrt(norm_sq) - 1.0;
      want += excess * excess;
    }
    want /= m;
    CHECK(pen.value() == doctest::Approx(want).epsilon(1e-4));
  }
}

TEST_CASE("a trained critic approaches the distance between shifted normals") {
  // W1(N(0,1), N(1,1)) = 1; the penalty holds the estimate near or below it
  auto critic = Critic::temporal(1, 1, 3, 0, 5);
  auto params = critic.net.params();
  ad::AdamState opt({.lr = 1e-3});
  CounterRng data(77, 0);
  const int m = 128;
  for (int step = 0; step < 2000; ++step) {
    std::vector<double> xs(m), ys(m);
    for (auto& v : xs) v = data.next_gauss();
    for (auto& v : ys) v = 1.0 + data.next_gauss();
    ad::Tape tape;
    auto dual = w1_dual_estimate(tape, critic.net,
                                 ad::Tensor::constant(m, 1, xs),
                                 ad::Tensor::constant(m, 1, ys));
    auto pen = gradient_penalty(tape, critic.net,
                                ad::Tensor::constant(m, 1, xs),
                                ad::Tensor::constant(m, 1, ys),
                                CounterRng::derive_key(9, step));
    auto loss = ad::add(tape, ad::smul(tape, dual, -1.0),
                        ad::smul(tape, pen, 10.0));
    tape.backward(loss);
    opt.step(params, step);
  }

  const int big = 4000;
  std::vector<double> xs(big), ys(big);
  CounterRng eval(78, 0);
  for (auto& v : xs) v = eval.next_gauss();
  for (auto& v : ys) v = 1.0 + eval.next_gauss();
  const double est = w1_dual_estimate(critic.net, xs, ys, big);
  CHECK(est > 0.85);
  CHECK(est < 1.08);
}

TEST_CASE("adversarial training keeps the two parameter sets apart") {
  sde::OuParams p;
  GanConfig cfg;
  cfg.gen.grid = {0.0, 0.2, 2};
  cfg.iterations = 1;
  cfg.batch = 16;
  cfg.n_critic = 1;
  cfg.seed = 13;
  const auto grid = cfg.gen.grid;
  auto source = [&](int m, std::uint64_t s) {
    return sde::simulate_ou(p, grid, m, s);
  };
  auto fresh_gen = egen::EulerGenerator::make(cfg.gen, cfg.seed);
  auto fresh_critic = Critic::temporal(1, 2, cfg.critic_hidden_layers,
                                       cfg.critic_width, cfg.seed);

  SUBCASE("frozen generator, live critic") {
    cfg.lr_gen = 0.0;
    auto res = train_ewgan(source, cfg);
    CHECK(same_values(res.gen.params(), fresh_gen.params()));
    CHECK_FALSE(same_values(res.temporal.net.params(),
                            fresh_critic.net.params()));
  }

  SUBCASE("frozen critic, live generator") {
    cfg.lr_critic = 0.0;
    auto res = train_ewgan(source, cfg);
    CHECK(same_values(res.temporal.net.params(), fresh_critic.net.params()));
    CHECK_FALSE(same_values(res.gen.params(), fresh_gen.params()));
  }

  SUBCASE("frozen marginal critic in the dual trainer") {
    cfg.lr_marginal = 0.0;
    auto res = train_edgan(source, cfg);
    auto fresh_marginal = Critic::marginal(1, cfg.critic_hidden_layers,
                                           cfg.critic_width, cfg.seed);
    CHECK(same_values(res.marginal.net.params(),
                      fresh_marginal.net.params()));
    CHECK_FALSE(same_values(res.temporal.net.params(),
                            fresh_critic.net.params()));
  }
}

TEST_CASE("zero iterations return the initialized players unchanged") {
  GanConfig cfg;
  cfg.gen.grid = {0.0, 0.2, 3};
  cfg.iterations = 0;
  cfg.seed = 21;
  int calls = 0;
  auto res = train_edgan(
      [&](int m, std::uint64_t s) {
        ++calls;
        return sde::simulate_ou(sde::OuParams{}, cfg.gen.grid, m, s);
      },
      cfg);
  CHECK(calls == 0);
  CHECK(res.critic_history.empty());
  CHECK(res.marginal_history.empty());
  CHECK(res.gen_history.empty());
  CHECK(res.marginal.defined());
  auto fresh = egen::EulerGenerator::make(cfg.gen, cfg.seed);
  CHECK(same_values(res.gen.params(), fresh.params()));
}

TEST_CASE("gan smoke runs stay finite and monitored") {
  sde::BsParams p;
  GanConfig cfg;
  cfg.gen.grid = {0.0, 0.2, 4};
  cfg.iterations = 12;
  cfg.batch = 32;
  cfg.n_critic = 2;
  cfg.seed = 3;
  cfg.monitor_every = 5;
  std::vector<int> seen;
  cfg.monitor = [&](int iter, double, double, const egen::EulerGenerator&) {
    seen.push_back(iter);
  };
  const auto grid = cfg.gen.grid;
  auto res = train_ewgan(
      [&](int m, std::uint64_t s) { return sde::simulate_bs(p, grid, m, s); },
      cfg);
  REQUIRE(res.critic_history.size() == 12);
  REQUIRE(res.gen_history.size() == 12);
  CHECK(res.marginal_history.empty());
  CHECK_FALSE(res.marginal.defined());
  for (double v : res.critic_history) CHECK(std::isfinite(v));
  for (double v : res.gen_history) CHECK(std::isfinite(v));
  CHECK(seen == std::vector<int>{0, 5, 10, 11});

  SUBCASE("dual-critic variant fills the marginal history") {
    cfg.iterations = 6;
    cfg.monitor = nullptr;
    auto dual = train_edgan(
        [&](int m, std::uint64_t s) {
          return sde::simulate_bs(p, grid, m, s);
        },
        cfg);
    REQUIRE(dual.marginal_history.size() == 6);
    for (double v : dual.marginal_history) CHECK(std::isfinite(v));
    CHECK(dual.marginal.defined());
  }

  SUBCASE("training is deterministic for a fixed seed") {
    cfg.iterations = 5;
    cfg.monitor = nullptr;
    auto source = [&](int m, std::uint64_t s) {
      return sde::simulate_bs(p, grid, m, s);
    };
    auto a = train_ewgan(source, cfg);
    auto b = train_ewgan(source, cfg);
    CHECK(a.critic_history == b.critic_history);
    CHECK(a.gen_history == b.gen_history);
    CHECK(same_values(a.gen.params(), b.gen.params()));
    CHECK(same_values(a.temporal.net.params(), b.temporal.net.params()));
  }
}

TEST_CASE("gan training aborts cleanly on bad input and divergence") {
  GanConfig cfg;
  cfg.gen.grid = {0.0, 0.2, 3};
  cfg.iterations = 2;
  cfg.batch = 16;
  cfg.n_critic = 2;
  cfg.seed = 1;

  SUBCASE("null source") {
    CHECK_THROWS_AS(train_ewgan(DataSource{}, cfg), shape_error);
  }

  SUBCASE("grid mismatch") {
    sde::TimeGrid other{0.0, 0.2, 5};
    CHECK_THROWS_WITH_AS(
        train_ewgan(
            [&](int m, std::uint64_t s) {
              return sde::simulate_ou(sde::OuParams{}, other, m, s);
            },
            cfg),
        doctest::Contains("does not match"), data_error);
  }

  SUBCASE("short batches from the source") {
    const auto grid = cfg.gen.grid;
    CHECK_THROWS_AS(train_edgan(
                        [&](int m, std::uint64_t s) {
                          return sde::simulate_ou(sde::OuParams{}, grid,
                                                  m / 2 + 1, s);
                        },
                        cfg),
                    data_error);
  }
}

TEST_CASE("gan checkpoints round-trip both players") {
  sde::OuParams p;
  GanConfig cfg;
  cfg.gen.grid = {0.0, 0.2, 3};
  cfg.iterations = 2;
  cfg.batch = 16;
  cfg.n_critic = 1;
  cfg.seed = 29;
  const auto grid = cfg.gen.grid;
  auto source = [&](int m, std::uint64_t s) {
    return sde::simulate_ou(p, grid, m, s);
  };
  auto res = train_edgan(source, cfg);
  egen::TrainMeta meta;
  meta.iterations = 2;
  meta.seed = cfg.seed;
  meta.loss_curve = res.gen_history;

  TempFile file("ets_gan_ckpt.bin");

  SUBCASE("dual-critic file") {
    save_gan_checkpoint(file.path, res.gen, meta, res.temporal,
                        &res.marginal);
    auto ck = load_gan_checkpoint(file.path);
    CHECK(ck.base.meta.iterations == 2);
    CHECK(ck.base.meta.loss_curve == res.gen_history);
    CHECK(ck.marginal.defined());
    CHECK(same_values(ck.temporal.net.params(), res.temporal.net.params()));
    CHECK(same_values(ck.marginal.net.params(), res.marginal.net.params()));
    auto ours = res.gen.generate(6, 101);
    auto theirs = ck.base.gen.generate(6, 101);
    CHECK(ours.values == theirs.values);
  }

  SUBCASE("single-critic file leaves the marginal undefined") {
    save_gan_checkpoint(file.path, res.gen, meta, res.temporal);
    auto ck = load_gan_checkpoint(file.path);
    CHECK(ck.temporal.defined());
    CHECK_FALSE(ck.marginal.defined());
  }

  SUBCASE("dimension expectations reach the embedded generator") {
    save_gan_checkpoint(file.path, res.gen, meta, res.temporal);
    CHECK_THROWS_WITH_AS(load_gan_checkpoint(file.path, 3),
                         doctest::Contains("dimension mismatch"), data_error);
  }

  SUBCASE("generator-only files are rejected by magic") {
    egen::save_checkpoint(file.path, res.gen, meta);
    CHECK_THROWS_WITH_AS(load_gan_checkpoint(file.path),
                         doctest::Contains("bad magic"), data_error);
    save_gan_checkpoint(file.path, res.gen, meta, res.temporal);
    CHECK_THROWS_WITH_AS(egen::load_checkpoint(file.path),
                         doctest::Contains("bad magic"), data_error);
  }

  SUBCASE("corruption and version bumps are distinct errors") {
    save_gan_checkpoint(file.path, res.gen, meta, res.temporal);
    const auto size = std::filesystem::file_size(file.path);
    std::filesystem::resize_file(file.path, size / 2);
    CHECK_THROWS_WITH_AS(load_gan_checkpoint(file.path),
                         doctest::Contains("corrupt or truncated"),
                         data_error);

    save_gan_checkpoint(file.path, res.gen, meta, res.temporal);
    {
      std::fstream f(file.path,
                     std::ios::binary | std::ios::in | std::ios::out);
      f.seekp(4);
      const std::uint32_t bad = 9;
      f.write(reinterpret_cast<const char*>(&bad), 4);
    }
    CHECK_THROWS_WITH_AS(load_gan_checkpoint(file.path),
                         doctest::Contains("unsupported format version"),
                         data_error);
  }
}
