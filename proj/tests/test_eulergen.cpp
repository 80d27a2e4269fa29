#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ets/egen/generator.hpp"
#include "ets/sde/sdesim.hpp"
#include "testutil.hpp"

using namespace ets;
using namespace ets::egen;

namespace {

// Single linear layer mapping (t, x_1..x_d) -> out via a weight matrix and a
// bias row, for wiring nets to known coefficient functions.
ad::Mlp linear_net(int d, int out, std::vector<double> w,
                   std::vector<double> b) {
  std::vector<ad::LayerSpec> spec{{1 + d, out, ad::Activation::kIdentity}};
  std::vector<ad::Tensor> params;
  params.push_back(ad::Tensor::param(1 + d, out, std::move(w)));
  params.push_back(ad::Tensor::param(1, out, std::move(b)));
  return ad::Mlp::from_params(std::move(spec), std::move(params));
}

// b(t, x) = r x, V(t, x) = s x, the scalar lognormal coefficients.
EulerGenerator lognormal_gen(double r, double s) {
  GeneratorConfig cfg;
  return EulerGenerator::from_nets(cfg, linear_net(1, 1, {0.0, r}, {0.0}),
                                   linear_net(1, 1, {0.0, s}, {0.0}));
}

// b(t, x) = theta (mu - x) written as theta*mu - theta*x, V constant sigma.
EulerGenerator mean_revert_gen(double theta, double mu, double sigma) {
  GeneratorConfig cfg;
  return EulerGenerator::from_nets(
      cfg, linear_net(1, 1, {0.0, -theta}, {theta * mu}),
      linear_net(1, 1, {0.0, 0.0}, {sigma}));
}

}  // namespace

TEST_CASE("config validation rejects bad shapes") {
  GeneratorConfig cfg;
  cfg.dim = 0;
  CHECK_THROWS_AS(cfg.validate(), shape_error);
  cfg.dim = 2;
  cfg.x0 = {0.1};
  CHECK_THROWS_AS(cfg.validate(), shape_error);
  cfg.x0 = {0.1, 0.2};
  CHECK_NOTHROW(cfg.validate());
  cfg.grid.t0 = -1.0;
  cfg.grid.maturity = -0.5;  // valid grid, but breaks t/T normalization
  CHECK_THROWS_AS(cfg.validate(), shape_error);

  SUBCASE("net shape mismatches are caught") {
    GeneratorConfig scalar;
    CHECK_THROWS_AS(EulerGenerator::from_nets(scalar,
                                              linear_net(2, 1, {0, 0, 0}, {0}),
                                              linear_net(1, 1, {0, 0}, {0})),
                    shape_error);
    CHECK_THROWS_AS(EulerGenerator::from_nets(scalar,
                                              linear_net(1, 1, {0, 0}, {0}),
                                              linear_net(1, 2, {0, 0, 0, 0},
                                                         {0, 0})),
                    shape_error);
  }
}

TEST_CASE("zero nets hold every path at the start value") {
  GeneratorConfig cfg;
  cfg.dim = 2;
  cfg.x0 = {0.2, 0.7};
  auto gen = EulerGenerator::from_nets(
      cfg, linear_net(2, 2, std::vector<double>(6, 0.0), {0.0, 0.0}),
      linear_net(2, 4, std::vector<double>(12, 0.0), {0.0, 0.0, 0.0, 0.0}));
  auto batch = gen.generate(5, 31);
  for (int s = 0; s < 5; ++s)
    for (int i = 0; i <= cfg.grid.steps; ++i) {
      CHECK(batch.at(s, i, 0) == 0.2);
      CHECK(batch.at(s, i, 1) == 0.7);
    }
}

TEST_CASE("constant drift integrates exactly") {
  const double c = 0.3;
  GeneratorConfig cfg;
  auto gen = EulerGenerator::from_nets(cfg, linear_net(1, 1, {0.0, 0.0}, {c}),
                                       linear_net(1, 1, {0.0, 0.0}, {0.0}));
  auto batch = gen.generate(3, 7);
  const double dt = cfg.grid.dt();
  double ref = 0.2;
  for (int i = 0; i <= cfg.grid.steps; ++i) {
    for (int s = 0; s < 3; ++s) CHECK(batch.at(s, i, 0) == ref);
    CHECK(batch.at(0, i, 0) ==
          doctest::Approx(0.2 + c * cfg.grid.time(i)).epsilon(1e-12));
    ref = ref + c * dt;
  }
}

TEST_CASE("time input is the date normalized by maturity") {
  // b(t, x) = t/T, no volatility: the recursion exposes the exact values the
  // net received as its time input.
  GeneratorConfig cfg;
  auto gen = EulerGenerator::from_nets(cfg, linear_net(1, 1, {1.0, 0.0}, {0.0}),
                                       linear_net(1, 1, {0.0, 0.0}, {0.0}));
  auto batch = gen.generate(1, 3);
  const double dt = cfg.grid.dt();
  double ref = 0.2;
  for (int i = 0; i < cfg.grid.steps; ++i) {
    CHECK(batch.at(0, i, 0) == ref);
    ref = ref + (cfg.grid.time(i) / cfg.grid.maturity) * dt + 0.0;
  }
  CHECK(batch.at(0, cfg.grid.steps, 0) == ref);
}

TEST_CASE("hardwired lognormal nets reproduce the closed-form simulator") {
  auto gen = lognormal_gen(0.8, 0.3);
  sde::BsParams p;  // defaults r=0.8 sigma=0.3 x0=0.2
  sde::TimeGrid g;

  for (std::uint64_t seed : {3ull, 202ull}) {
    auto ours = gen.generate(400, seed);
    auto ref = sde::simulate_bs(p, g, 400, seed);
    REQUIRE(ours.values.size() == ref.values.size());
    CHECK(ours.values == ref.values);  // bit-exact, same noise discipline
  }

  SUBCASE("batch prefixes are stable in the sample count") {
    auto small = gen.generate(4, 17);
    auto large = gen.generate(40, 17);
    for (int s = 0; s < 4; ++s)
      for (int i = 0; i <= g.steps; ++i)
        CHECK(small.at(s, i, 0) == large.at(s, i, 0));
  }
}

TEST_CASE("two-dimensional diagonal nets match the simulator") {
  const double r = 0.8, s = 0.3;
  GeneratorConfig cfg;
  cfg.dim = 2;
  // drift rows: t -> (0,0), x1 -> (r,0), x2 -> (0,r)
  auto drift = linear_net(2, 2, {0, 0, r, 0, 0, r}, {0, 0});
  // vol output is row-major 2x2; x1 drives entry (0,0), x2 entry (1,1)
  auto vol = linear_net(2, 4, {0, 0, 0, 0, s, 0, 0, 0, 0, 0, 0, s}, {0, 0, 0, 0});
  auto gen = EulerGenerator::from_nets(cfg, std::move(drift), std::move(vol));

  sde::BsParams p;
  p.dim = 2;
  auto ours = gen.generate(60, 5);
  auto ref = sde::simulate_bs(p, sde::TimeGrid{}, 60, 5);
  CHECK(ours.values == ref.values);
}

TEST_CASE("hardwired mean-reverting nets track the simulator closely") {
  // theta*(mu - x) and theta*mu - theta*x round differently, so equality is
  // only up to a few ulps per step here.
  auto gen = mean_revert_gen(7.0, 0.6, 0.1);
  sde::OuParams p;
  auto ours = gen.generate(50, 23);
  auto ref = sde::simulate_ou(p, sde::TimeGrid{}, 50, 23);
  double worst = 0.0;
  for (std::size_t j = 0; j < ref.values.size(); ++j)
    worst = std::max(worst, std::fabs(ours.values[j] - ref.values[j]));
  CHECK(worst < 1e-12);
}

TEST_CASE("lognormal parameter extraction is exact on hardwired nets") {
  auto fit = extract_bs_params(lognormal_gen(0.8, 0.3), 300, 11);
  CHECK(fit.r == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(fit.sigma == doctest::Approx(0.3).epsilon(1e-12));

  SUBCASE("volatility sign is invisible to the scheme") {
    auto neg = extract_bs_params(lognormal_gen(0.8, -0.3), 300, 11);
    CHECK(neg.sigma == doctest::Approx(0.3).epsilon(1e-12));
  }

  SUBCASE("estimation refused when the support hugs zero") {
    GeneratorConfig cfg;
    cfg.x0 = {0.0};
    auto stuck = EulerGenerator::from_nets(
        cfg, linear_net(1, 1, {0.0, 0.0}, {0.0}),
        linear_net(1, 1, {0.0, 0.0}, {0.0}));
    CHECK_THROWS_WITH_AS(extract_bs_params(stuck, 20, 1),
                         doctest::Contains("refused"), data_error);
  }

  SUBCASE("scalar only") {
    GeneratorConfig cfg;
    cfg.dim = 2;
    cfg.x0 = {0.2, 0.2};
    auto gen2 = EulerGenerator::make(cfg, 1);
    CHECK_THROWS_AS(extract_bs_params(gen2, 10, 1), shape_error);
  }
}

TEST_CASE("mean-reversion extraction recovers hardwired parameters") {
  auto fit = extract_ou_params(mean_revert_gen(7.0, 0.6, 0.1), 300, 11);
  CHECK(fit.mu_defined);
  CHECK(fit.theta == doctest::Approx(7.0).epsilon(1e-9));
  CHECK(fit.mu == doctest::Approx(0.6).epsilon(1e-9));
  CHECK(fit.sigma == doctest::Approx(0.1).epsilon(1e-12));

  SUBCASE("zero drift flags mu as undefined") {
    GeneratorConfig cfg;
    auto gen = EulerGenerator::from_nets(
        cfg, linear_net(1, 1, {0.0, 0.0}, {0.0}),
        linear_net(1, 1, {0.0, 0.0}, {0.05}));
    auto flat = extract_ou_params(gen, 100, 2);
    CHECK(flat.theta == 0.0);
    CHECK_FALSE(flat.mu_defined);
    CHECK(flat.sigma == doctest::Approx(0.05).epsilon(1e-12));
  }

  SUBCASE("constant paths have no regressable support") {
    GeneratorConfig cfg;
    auto gen = EulerGenerator::from_nets(
        cfg, linear_net(1, 1, {0.0, 0.0}, {0.0}),
        linear_net(1, 1, {0.0, 0.0}, {0.0}));
    CHECK_THROWS_AS(extract_ou_params(gen, 20, 2), data_error);
  }
}

TEST_CASE("taped rollout replays the untaped arithmetic bit-exactly") {
  auto gen = lognormal_gen(0.8, 0.3);
  const auto& g = gen.grid();
  const int m = 8, d = 1;

  ad::Tape tape;
  CounterRng rng(99, streams::kNoise);
  auto states = gen.rollout(tape, m, rng);
  REQUIRE(states.size() == static_cast<std::size_t>(g.steps) + 1);

  // untaped replay with the identical noise order
  CounterRng rng2(99, streams::kNoise);
  const double dt = g.dt(), sdt = std::sqrt(dt);
  std::vector<double> x(m, 0.2), in(m * 2), w(m), nx(m);
  for (int i = 0; i < g.steps; ++i) {
    for (int s = 0; s < m; ++s) {
      in[2 * s] = g.time(i) / g.maturity;
      in[2 * s + 1] = x[s];
    }
    auto b = gen.drift().forward_values_batch(in, m);
    auto v = gen.vol().forward_values_batch(in, m);
    for (int s = 0; s < m; ++s) w[s] = sdt * rng2.next_gauss();
    for (int s = 0; s < m; ++s)
      sde::euler_step(&x[s], &b[s], &v[s], d, dt, &w[s], &nx[s]);
    x = nx;
    CHECK(states[i + 1].values() == x);
  }

  SUBCASE("gradients reach both nets") {
    auto loss = ad::mean(tape, states.back());
    tape.backward(loss);
    const auto gw_drift = gen.drift().params()[0].grad_vector();
    const auto gw_vol = gen.vol().params()[0].grad_vector();
    CHECK(std::fabs(gw_drift[1]) > 0.0);
    CHECK(std::fabs(gw_vol[1]) > 0.0);
  }
}

TEST_CASE("finite differences validate gradients through a short rollout") {
  GeneratorConfig cfg;
  cfg.grid.steps = 3;
  cfg.hidden_layers = 1;
  cfg.hidden_width = 3;
  auto proto = EulerGenerator::make(cfg, 4);

  std::vector<std::pair<int, int>> shapes;
  std::vector<std::vector<double>> values;
  for (auto& p : proto.params()) {
    shapes.push_back({p.rows(), p.cols()});
    values.push_back(p.values());
  }
  auto spec_d = proto.drift().layers();
  auto spec_v = proto.vol().layers();

  auto rep = testutil::fd_check(
      shapes, values,
      [&](ad::Tape& tape, const std::vector<ad::Tensor>& leaves) {
        std::vector<ad::Tensor> pd(leaves.begin(), leaves.begin() + 4);
        std::vector<ad::Tensor> pv(leaves.begin() + 4, leaves.end());
        auto gen = EulerGenerator::from_nets(
            cfg, ad::Mlp::from_params(spec_d, pd),
            ad::Mlp::from_params(spec_v, pv));
        CounterRng rng(12, streams::kNoise);
        auto states = gen.rollout(tape, 4, rng);
        return ad::mean(tape, ad::square(tape, states.back()));
      });
  INFO(rep.detail);
  CHECK(rep.ok);
  CHECK(rep.checked == 26);  // both nets: (2x3 + 3) + (3x1 + 1) each
}

TEST_CASE("checkpoints round-trip generators and metadata") {
  namespace fs = std::filesystem;
  const auto path = (fs::temp_directory_path() / "ets_ckpt_test.bin").string();

  GeneratorConfig cfg;
  cfg.dim = 2;
  cfg.x0 = {0.2, 0.4};
  auto gen = EulerGenerator::make(cfg, 5);
  TrainMeta meta;
  meta.iterations = 123;
  meta.seed = 42;
  meta.config_hash = 0xabcdefull;
  meta.loss_curve = {1.5, 0.75, 0.5};
  save_checkpoint(path, gen, meta);

  auto ck = load_checkpoint(path);
  CHECK(ck.meta.iterations == 123);
  CHECK(ck.meta.seed == 42);
  CHECK(ck.meta.config_hash == 0xabcdefull);
  CHECK(ck.meta.loss_curve == meta.loss_curve);
  CHECK(ck.gen.dim() == 2);
  CHECK(ck.gen.grid() == cfg.grid);
  CHECK(ck.gen.config().x0 == cfg.x0);
  CHECK(ck.gen.config().activation == cfg.activation);

  auto a = gen.generate(6, 77);
  auto b = ck.gen.generate(6, 77);
  CHECK(a.values == b.values);  // lossless parameters, lossless generation

  SUBCASE("dimension expectations are enforced") {
    CHECK_NOTHROW(load_checkpoint(path, 2));
    CHECK_THROWS_WITH_AS(load_checkpoint(path, 10),
                         doctest::Contains("dimension mismatch"), data_error);
  }

  SUBCASE("version mismatch is a distinct error") {
    auto bytes = [&] {
      std::ifstream is(path, std::ios::binary);
      return std::string(std::istreambuf_iterator<char>(is), {});
    }();
    bytes[4] = 9;  // format version lives right after the magic
    std::ofstream(path, std::ios::binary).write(bytes.data(), bytes.size());
    CHECK_THROWS_WITH_AS(load_checkpoint(path),
                         doctest::Contains("unsupported format version"),
                         data_error);
  }

  SUBCASE("corruption is detected, no partial generator escapes") {
    auto size = fs::file_size(path);
    fs::resize_file(path, size / 2);
    CHECK_THROWS_WITH_AS(load_checkpoint(path),
                         doctest::Contains("corrupt or truncated"),
                         data_error);

    std::ofstream os(path, std::ios::binary);
    os.write("NOPE", 4);
    os.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(path),
                         doctest::Contains("corrupt or truncated"),
                         data_error);
  }
}
