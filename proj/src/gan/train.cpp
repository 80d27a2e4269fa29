#include "ets/gan/train.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>

#include "ets/ad/adam.hpp"
#include "ets/ad/params_io.hpp"
#include "ets/rng.hpp"

namespace ets::gan {

namespace {

void check_config(const GanConfig& cfg) {
  cfg.gen.validate();
  if (cfg.iterations < 0) throw shape_error("GanConfig: negative iterations");
  if (cfg.batch < 2) throw shape_error("GanConfig: batch must be >= 2");
  if (cfg.n_critic < 1) throw shape_error("GanConfig: n_critic must be >= 1");
  if (cfg.gp_coef < 0) throw shape_error("GanConfig: negative gp_coef");
  if (cfg.lr_gen < 0 || cfg.lr_critic < 0 || cfg.lr_marginal < 0)
    throw shape_error("GanConfig: negative learning rate");
  if (cfg.critic_hidden_layers < 1)
    throw shape_error("GanConfig: critic needs a hidden layer");
  if (cfg.monitor_every < 1) throw shape_error("GanConfig: monitor_every >= 1");
}

sde::PathBatch draw_real(const DataSource& source, const GanConfig& cfg,
                         std::uint64_t tick, const char* who) {
  auto real = source(cfg.batch,
                     CounterRng::derive_key(cfg.seed, streams::kData + 1 + tick));
  if (real.dim != cfg.gen.dim || !(real.grid == cfg.gen.grid))
    throw data_error(std::string(who) +
                     ": data source does not match the grid");
  if (real.samples != cfg.batch)
    throw data_error(std::string(who) + ": data source returned " +
                     std::to_string(real.samples) + " samples, expected " +
                     std::to_string(cfg.batch));
  return real;
}

ad::Tensor flat_const(const sde::PathBatch& b) {
  return ad::Tensor::constant(b.samples, b.grid.steps * b.dim,
                              flatten_sequences(b));
}

// (t/T, x) rows for one date of an untaped batch
ad::Tensor date_rows_const(const sde::PathBatch& b, int date) {
  const double tn = b.grid.time(date) / b.grid.maturity;
  std::vector<double> rows(static_cast<std::size_t>(b.samples) * (1 + b.dim));
  for (int s = 0; s < b.samples; ++s) {
    rows[static_cast<std::size_t>(s) * (1 + b.dim)] = tn;
    for (int j = 0; j < b.dim; ++j)
      rows[static_cast<std::size_t>(s) * (1 + b.dim) + 1 + j] =
          b.at(s, date, j);
  }
  return ad::Tensor::constant(b.samples, 1 + b.dim, std::move(rows));
}

// shared two-player loop; with_marginal switches in the dual-critic phase
GanResult run_gan(const DataSource& source, const GanConfig& cfg,
                  bool with_marginal, const char* who) {
  check_config(cfg);
  if (!source) throw shape_error(std::string(who) + ": null data source");
  const int d = cfg.gen.dim;
  const int steps = cfg.gen.grid.steps;

  GanResult res;
  res.gen = egen::EulerGenerator::make(cfg.gen, cfg.seed);
  res.temporal = Critic::temporal(d, steps, cfg.critic_hidden_layers,
                                  cfg.critic_width, cfg.seed);
  if (with_marginal)
    res.marginal = Critic::marginal(d, cfg.critic_hidden_layers,
                                    cfg.critic_width, cfg.seed);

  auto gparams = res.gen.params();
  auto cparams = res.temporal.net.params();
  ad::AdamState opt_gen({.lr = cfg.lr_gen});
  ad::AdamState opt_critic({.lr = cfg.lr_critic});
  ad::AdamState opt_marginal({.lr = cfg.lr_marginal});
  std::vector<ad::Tensor> mparams;
  if (with_marginal) mparams = res.marginal.net.params();

  int critic_steps = 0, marginal_steps = 0;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    double critic_last = 0.0, marginal_last = 0.0, gen_loss = 0.0;
    try {
      for (int j = 0; j < cfg.n_critic; ++j) {
        const auto tick = static_cast<std::uint64_t>(iter) *
                              (cfg.n_critic + 1) + j;
        const auto real = draw_real(source, cfg, tick, who);
        const auto fake = res.gen.generate(
            cfg.batch, CounterRng::derive_key(cfg.seed, streams::kNoise + tick));
        const auto pen_key =
            CounterRng::derive_key(cfg.seed, streams::kShuffle + tick);

        {
          ad::Tape tape;
          auto xr = flat_const(real);
          auto xg = flat_const(fake);
          auto dual = w1_dual_estimate(tape, res.temporal.net, xr, xg);
          auto pen = gradient_penalty(tape, res.temporal.net, xr, xg,
                                      CounterRng::derive_key(pen_key, 0));
          auto loss = ad::add(tape, ad::smul(tape, dual, -1.0),
                              ad::smul(tape, pen, cfg.gp_coef));
          critic_last = loss.value();
          if (!std::isfinite(critic_last))
            throw train_error("non-finite critic loss");
          tape.backward(loss);
          opt_critic.step(cparams, critic_steps++);
        }

        if (with_marginal) {
          marginal_last = 0.0;
          for (int i = 1; i <= steps; ++i) {
            ad::Tape tape;
            auto xr = date_rows_const(real, i);
            auto xg = date_rows_const(fake, i);
            auto dual = w1_dual_estimate(tape, res.marginal.net, xr, xg);
            auto pen =
                gradient_penalty(tape, res.marginal.net, xr, xg,
                                 CounterRng::derive_key(pen_key, i));
            auto loss = ad::add(tape, ad::smul(tape, dual, -1.0),
                                ad::smul(tape, pen, cfg.gp_coef));
            const double v = loss.value();
            if (!std::isfinite(v))
              throw train_error("non-finite marginal critic loss at date " +
                                std::to_string(i));
            marginal_last += v;
            tape.backward(loss);
            opt_marginal.step(mparams, marginal_steps++);
          }
        }
      }

      const auto tick = static_cast<std::uint64_t>(iter) *
                            (cfg.n_critic + 1) + cfg.n_critic;
      ad::Tape tape;
      CounterRng noise(cfg.seed, streams::kNoise + tick);
      auto states = res.gen.rollout(tape, cfg.batch, noise);
      std::vector<ad::Tensor> dates(states.begin() + 1, states.end());
      auto flat = ad::concat_cols(tape, dates);
      auto score = ad::mean(tape, res.temporal.net.forward(tape, flat));
      if (with_marginal) {
        for (int i = 1; i <= steps; ++i) {
          const double tn = cfg.gen.grid.time(i) / cfg.gen.grid.maturity;
          auto rows = ad::concat_cols(
              tape, {ad::Tensor::constant(
                         cfg.batch, 1,
                         std::vector<double>(cfg.batch, tn)),
                     states[i]});
          score = ad::add(
              tape, score,
              ad::mean(tape, res.marginal.net.forward(tape, rows)));
        }
      }
      auto loss = ad::smul(tape, score, -1.0);
      gen_loss = loss.value();
      if (!std::isfinite(gen_loss))
        throw train_error("non-finite generator loss");
      tape.backward(loss);
      opt_gen.step(gparams, iter);
    } catch (const train_error& e) {
      throw train_error(std::string(who) + ": iteration " +
                        std::to_string(iter) + ": " + e.what());
    }
    res.critic_history.push_back(critic_last);
    if (with_marginal) res.marginal_history.push_back(marginal_last);
    res.gen_history.push_back(gen_loss);
    if (cfg.monitor &&
        (iter % cfg.monitor_every == 0 || iter + 1 == cfg.iterations))
      cfg.monitor(iter, critic_last, gen_loss, res.gen);
  }
  return res;
}

constexpr char kMagic[4] = {'E', 'T', 'S', 'G'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const char* what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is)
    throw data_error(
        std::string("gan checkpoint: corrupt or truncated file (at ") + what +
        ")");
  return v;
}

void put_critic(std::ostream& os, const ad::Mlp& net) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& l : net.layers()) {
    put<std::int32_t>(os, l.in);
    put<std::int32_t>(os, l.out);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(l.act));
  }
  std::vector<ad::NamedTensor> tensors;
  const auto& ps = net.params();
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    tensors.push_back({"critic." + std::to_string(l) + ".w",
                       ps[2 * l].rows(), ps[2 * l].cols(),
                       ps[2 * l].values()});
    tensors.push_back({"critic." + std::to_string(l) + ".b",
                       ps[2 * l + 1].rows(), ps[2 * l + 1].cols(),
                       ps[2 * l + 1].values()});
  }
  ad::write_tensors(os, tensors);
}

ad::Mlp get_critic(std::istream& is) {
  const auto n = get<std::uint32_t>(is, "critic layer count");
  if (n == 0 || n > 64)
    throw data_error(
        "gan checkpoint: corrupt or truncated file (critic layer count)");
  std::vector<ad::LayerSpec> layers(n);
  for (auto& l : layers) {
    l.in = get<std::int32_t>(is, "critic layer in");
    l.out = get<std::int32_t>(is, "critic layer out");
    const auto act = get<std::uint32_t>(is, "critic layer act");
    if (act > static_cast<std::uint32_t>(ad::Activation::kIdentity) ||
        l.in < 1 || l.out < 1)
      throw data_error(
          "gan checkpoint: corrupt or truncated file (critic layer)");
    l.act = static_cast<ad::Activation>(act);
  }
  std::vector<ad::NamedTensor> tensors;
  try {
    tensors = ad::read_tensors(is);
  } catch (const data_error& e) {
    throw data_error(
        std::string("gan checkpoint: corrupt or truncated file (") + e.what() +
        ")");
  }
  if (tensors.size() != 2 * layers.size())
    throw data_error(
        "gan checkpoint: corrupt or truncated file (critic parameter count)");
  std::vector<ad::Tensor> ps;
  ps.reserve(tensors.size());
  for (auto& t : tensors)
    ps.push_back(ad::Tensor::param(t.rows, t.cols, std::move(t.values)));
  try {
    return ad::Mlp::from_params(std::move(layers), std::move(ps));
  } catch (const shape_error& e) {
    throw data_error(
        std::string("gan checkpoint: corrupt or truncated file (") + e.what() +
        ")");
  }
}

}  // namespace

void GanConfig::validate() const { check_config(*this); }

GanResult train_ewgan(const DataSource& source, const GanConfig& cfg) {
  return run_gan(source, cfg, false, "train_ewgan");
}

GanResult train_edgan(const DataSource& source, const GanConfig& cfg) {
  return run_gan(source, cfg, true, "train_edgan");
}

void save_gan_checkpoint(const std::string& path,
                         const egen::EulerGenerator& gen,
                         const egen::TrainMeta& meta, const Critic& temporal,
                         const Critic* marginal) {
  if (!temporal.defined())
    throw shape_error("save_gan_checkpoint: undefined temporal critic");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("save_gan_checkpoint: cannot open " + path);
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kGanCheckpointFormatVersion);
  egen::save_checkpoint(os, gen, meta);
  const bool two = marginal != nullptr && marginal->defined();
  put<std::uint32_t>(os, two ? 2u : 1u);
  put_critic(os, temporal.net);
  if (two) put_critic(os, marginal->net);
  if (!os) throw data_error("save_gan_checkpoint: write failed for " + path);
}

GanCheckpoint load_gan_checkpoint(const std::string& path, int expect_dim) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("load_gan_checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw data_error("gan checkpoint: corrupt or truncated file (bad magic)");
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kGanCheckpointFormatVersion)
    throw data_error("gan checkpoint: unsupported format version " +
                     std::to_string(version));
  GanCheckpoint ck;
  ck.base = egen::load_checkpoint(is, expect_dim);
  const auto count = get<std::uint32_t>(is, "critic count");
  if (count < 1 || count > 2)
    throw data_error(
        "gan checkpoint: corrupt or truncated file (critic count)");
  ck.temporal.net = get_critic(is);
  if (count == 2) ck.marginal.net = get_critic(is);
  return ck;
}

}  // namespace ets::gan
