#include "ets/egen/generator.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <utility>

#include "ets/ad/params_io.hpp"
#include "ets/sde/sdesim.hpp"

namespace ets::egen {

std::vector<double> GeneratorConfig::start() const {
  if (x0.empty()) return std::vector<double>(static_cast<std::size_t>(dim), 0.2);
  return x0;
}

void GeneratorConfig::validate() const {
  if (dim < 1) throw shape_error("GeneratorConfig: dim must be positive");
  grid.validate();
  if (!(grid.maturity > 0.0))
    throw shape_error(
        "GeneratorConfig: maturity must be positive (time inputs are "
        "normalized by it)");
  if (!x0.empty() && x0.size() != static_cast<std::size_t>(dim))
    throw shape_error("GeneratorConfig: x0 must hold dim entries");
  for (double v : x0)
    if (!std::isfinite(v)) throw shape_error("GeneratorConfig: non-finite x0");
  if (hidden_layers < 0 || hidden_width < 0)
    throw shape_error("GeneratorConfig: negative net shape");
}

EulerGenerator EulerGenerator::make(const GeneratorConfig& cfg,
                                    std::uint64_t seed) {
  cfg.validate();
  const int d = cfg.dim;
  std::vector<int> dims{1 + d};
  for (int l = 0; l < cfg.hidden_layers; ++l) dims.push_back(cfg.width());
  dims.push_back(d);
  CounterRng drift_rng(seed, streams::kInit);
  CounterRng vol_rng(seed, streams::kInit + 1);
  EulerGenerator gen;
  gen.cfg_ = cfg;
  gen.drift_ = ad::Mlp::make(dims, cfg.activation,
                             ad::Activation::kIdentity, drift_rng);
  dims.back() = d * d;
  gen.vol_ = ad::Mlp::make(dims, cfg.activation, ad::Activation::kIdentity,
                           vol_rng);
  return gen;
}

EulerGenerator EulerGenerator::from_nets(const GeneratorConfig& cfg,
                                         ad::Mlp drift, ad::Mlp vol) {
  cfg.validate();
  const int d = cfg.dim;
  if (drift.empty() || vol.empty())
    throw shape_error("EulerGenerator: empty net");
  if (drift.input_dim() != 1 + d || drift.output_dim() != d)
    throw shape_error("EulerGenerator: drift net must map 1+d -> d");
  if (vol.input_dim() != 1 + d || vol.output_dim() != d * d)
    throw shape_error("EulerGenerator: vol net must map 1+d -> d^2");
  EulerGenerator gen;
  gen.cfg_ = cfg;
  gen.drift_ = std::move(drift);
  gen.vol_ = std::move(vol);
  return gen;
}

std::vector<ad::Tensor> EulerGenerator::params() {
  std::vector<ad::Tensor> out(drift_.params());
  out.insert(out.end(), vol_.params().begin(), vol_.params().end());
  return out;
}

sde::PathBatch EulerGenerator::generate(int samples,
                                        std::uint64_t seed) const {
  if (samples < 1) throw shape_error("generate: samples must be positive");
  if (drift_.empty()) throw shape_error("generate: uninitialized generator");
  const auto& g = cfg_.grid;
  const int d = cfg_.dim;
  const double dt = g.dt();
  const double sdt = std::sqrt(dt);
  const auto x0 = cfg_.start();

  auto batch = sde::PathBatch::zeros(g, samples, d);
  std::vector<CounterRng> rngs;
  rngs.reserve(static_cast<std::size_t>(samples));
  for (int s = 0; s < samples; ++s) {
    rngs.emplace_back(seed, streams::kSample + static_cast<std::uint64_t>(s));
    double* p0 = batch.state(s, 0);
    for (int k = 0; k < d; ++k) p0[k] = x0[k];
  }

  // nets are evaluated batched per date on the value path
  std::vector<double> in(static_cast<std::size_t>(samples) * (1 + d));
  std::vector<double> w(static_cast<std::size_t>(d));
  for (int i = 0; i < g.steps; ++i) {
    const double tn = g.time(i) / g.maturity;
    for (int s = 0; s < samples; ++s) {
      double* row = in.data() + static_cast<std::size_t>(s) * (1 + d);
      row[0] = tn;
      const double* x = batch.state(s, i);
      for (int k = 0; k < d; ++k) row[1 + k] = x[k];
    }
    const auto b = drift_.forward_values_batch(in, samples);
    const auto v = vol_.forward_values_batch(in, samples);
    for (int s = 0; s < samples; ++s) {
      for (int k = 0; k < d; ++k) w[k] = sdt * rngs[s].next_gauss();
      double* nx = batch.state(s, i + 1);
      sde::euler_step(batch.state(s, i),
                      b.data() + static_cast<std::size_t>(s) * d,
                      v.data() + static_cast<std::size_t>(s) * d * d, d, dt,
                      w.data(), nx);
      for (int k = 0; k < d; ++k)
        if (!std::isfinite(nx[k]))
          throw train_error("generate: non-finite state at date " +
                            std::to_string(i + 1) + ", sample " +
                            std::to_string(s));
    }
  }
  return batch;
}

std::vector<ad::Tensor> EulerGenerator::rollout(ad::Tape& tape, int samples,
                                                CounterRng& rng) const {
  if (samples < 1) throw shape_error("rollout: samples must be positive");
  if (drift_.empty()) throw shape_error("rollout: uninitialized generator");
  const auto& g = cfg_.grid;
  const int d = cfg_.dim;
  const double dt = g.dt();
  const double sdt = std::sqrt(dt);
  const auto x0 = cfg_.start();

  std::vector<double> start(static_cast<std::size_t>(samples) * d);
  for (int s = 0; s < samples; ++s)
    for (int k = 0; k < d; ++k)
      start[static_cast<std::size_t>(s) * d + k] = x0[k];

  std::vector<ad::Tensor> states;
  states.reserve(static_cast<std::size_t>(g.steps) + 1);
  states.push_back(ad::Tensor::constant(samples, d, std::move(start)));
  for (int i = 0; i < g.steps; ++i) {
    auto tcol = ad::Tensor::constant(
        samples, 1,
        std::vector<double>(static_cast<std::size_t>(samples),
                            g.time(i) / g.maturity));
    auto input = ad::concat_cols(tape, {tcol, states.back()});
    auto b = drift_.forward(tape, input);
    auto v = vol_.forward(tape, input);
    std::vector<double> w(static_cast<std::size_t>(samples) * d);
    for (auto& x : w) x = sdt * rng.next_gauss();
    auto noise = ad::Tensor::constant(samples, d, std::move(w));
    // same grouping as euler_step: (y + b dt) + V w
    auto next = ad::add(tape, ad::add(tape, states.back(), ad::smul(tape, b, dt)),
                        ad::bmatvec(tape, v, noise));
    for (double x : next.values())
      if (!std::isfinite(x))
        throw train_error("rollout: non-finite state at date " +
                          std::to_string(i + 1));
    states.push_back(next);
  }
  return states;
}

EulerGenerator EulerGenerator::clone() const {
  return from_nets(cfg_, drift_.clone(), vol_.clone());
}

namespace {

// (t/T, y) rows over every transition input of a generated batch, optionally
// dropping states too close to zero for ratio estimates.
struct EvalPoints {
  std::vector<double> in;   // rows of width 2
  std::vector<double> y;    // the state column
  std::size_t total = 0;    // before filtering
};

EvalPoints transition_inputs(const sde::PathBatch& batch, double min_abs) {
  const auto& g = batch.grid;
  EvalPoints pts;
  pts.total = static_cast<std::size_t>(batch.samples) * g.steps;
  pts.in.reserve(2 * pts.total);
  pts.y.reserve(pts.total);
  for (int s = 0; s < batch.samples; ++s)
    for (int i = 0; i < g.steps; ++i) {
      const double y = batch.at(s, i, 0);
      if (std::fabs(y) <= min_abs) continue;
      pts.in.push_back(g.time(i) / g.maturity);
      pts.in.push_back(y);
      pts.y.push_back(y);
    }
  return pts;
}

}  // namespace

BsFit extract_bs_params(const EulerGenerator& gen, int samples,
                        std::uint64_t seed) {
  if (gen.dim() != 1)
    throw shape_error("extract_bs_params: scalar generators only");
  const auto batch = gen.generate(samples, seed);
  const auto pts = transition_inputs(batch, 1e-6);
  const std::size_t kept = pts.y.size();
  if (kept == 0 || (pts.total - kept) * 2 > pts.total)
    throw data_error(
        "extract_bs_params: estimation refused, more than half the states "
        "are too close to zero");
  const int m = static_cast<int>(kept);
  const auto b = gen.drift().forward_values_batch(pts.in, m);
  const auto v = gen.vol().forward_values_batch(pts.in, m);
  double rs = 0.0, ss = 0.0;
  for (int j = 0; j < m; ++j) {
    rs += b[j] / pts.y[j];
    ss += std::fabs(v[j] / pts.y[j]);
  }
  return {rs / m, ss / m};
}

OuFit extract_ou_params(const EulerGenerator& gen, int samples,
                        std::uint64_t seed) {
  if (gen.dim() != 1)
    throw shape_error("extract_ou_params: scalar generators only");
  const auto batch = gen.generate(samples, seed);
  const auto pts = transition_inputs(batch, -1.0);  // keep everything
  const int m = static_cast<int>(pts.y.size());
  const auto b = gen.drift().forward_values_batch(pts.in, m);
  const auto v = gen.vol().forward_values_batch(pts.in, m);

  double my = 0.0, mb = 0.0;
  for (int j = 0; j < m; ++j) {
    my += pts.y[j];
    mb += b[j];
  }
  my /= m;
  mb /= m;
  double syy = 0.0, syb = 0.0;
  for (int j = 0; j < m; ++j) {
    syy += (pts.y[j] - my) * (pts.y[j] - my);
    syb += (pts.y[j] - my) * (b[j] - mb);
  }
  if (syy < 1e-18)
    throw data_error("extract_ou_params: degenerate state support");
  const double beta = syb / syy;
  const double alpha = mb - beta * my;

  OuFit fit;
  fit.theta = -beta;
  double ss = 0.0;
  for (int j = 0; j < m; ++j) ss += std::fabs(v[j]);
  fit.sigma = ss / m;
  if (std::fabs(fit.theta) >= 1e-6) {
    fit.mu = alpha / fit.theta;
    fit.mu_defined = true;
  } else {
    fit.mu = std::numeric_limits<double>::quiet_NaN();
    fit.mu_defined = false;
  }
  return fit;
}

namespace {

constexpr char kMagic[4] = {'E', 'T', 'S', 'C'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const char* what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is)
    throw data_error(std::string("checkpoint: corrupt or truncated file (at ") +
                     what + ")");
  return v;
}

std::uint32_t act_code(ad::Activation a) {
  return static_cast<std::uint32_t>(a);
}

ad::Activation decode_act(std::uint32_t c) {
  if (c > static_cast<std::uint32_t>(ad::Activation::kIdentity))
    throw data_error("checkpoint: corrupt or truncated file (bad activation)");
  return static_cast<ad::Activation>(c);
}

void put_net_spec(std::ostream& os, const ad::Mlp& net) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& l : net.layers()) {
    put<std::int32_t>(os, l.in);
    put<std::int32_t>(os, l.out);
    put<std::uint32_t>(os, act_code(l.act));
  }
}

std::vector<ad::LayerSpec> get_net_spec(std::istream& is, const char* what) {
  const auto n = get<std::uint32_t>(is, what);
  if (n == 0 || n > 64)
    throw data_error("checkpoint: corrupt or truncated file (layer count)");
  std::vector<ad::LayerSpec> layers(n);
  for (auto& l : layers) {
    l.in = get<std::int32_t>(is, "layer in");
    l.out = get<std::int32_t>(is, "layer out");
    l.act = decode_act(get<std::uint32_t>(is, "layer act"));
    if (l.in < 1 || l.out < 1)
      throw data_error("checkpoint: corrupt or truncated file (layer shape)");
  }
  return layers;
}

void append_net_params(std::vector<ad::NamedTensor>& out, const ad::Mlp& net,
                       const std::string& prefix) {
  const auto& ps = net.params();
  for (std::size_t l =  0; l < net.layers().size(); ++l) {
    const auto& W = ps[2 * l];
    const auto& b = ps[2 * l + 1];
    out.push_back({prefix + "." + std::to_string(l) + ".w", W.rows(), W.cols(),
                   W.values()});
    out.push_back({prefix + "." + std::to_string(l) + ".b", b.rows(), b.cols(),
                   b.values()});
  }
}

}  // namespace

void save_checkpoint(std::ostream& os, const EulerGenerator& gen,
                     const TrainMeta& meta) {
  if (gen.drift().empty())
    throw shape_error("save_checkpoint: uninitialized generator");
  const auto& cfg = gen.config();
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kCheckpointFormatVersion);
  put<std::int32_t>(os, cfg.dim);
  put<std::int32_t>(os, cfg.grid.steps);
  put<double>(os, cfg.grid.t0);
  put<double>(os, cfg.grid.maturity);
  for (double v : cfg.start()) put<double>(os, v);
  put<std::int32_t>(os, cfg.hidden_layers);
  put<std::int32_t>(os, cfg.hidden_width);
  put<std::uint32_t>(os, act_code(cfg.activation));
  put<std::int64_t>(os, meta.iterations);
  put<std::uint64_t>(os, meta.seed);
  put<std::uint64_t>(os, meta.config_hash);
  put<std::uint64_t>(os, meta.loss_curve.size());
  if (!meta.loss_curve.empty())
    os.write(reinterpret_cast<const char*>(meta.loss_curve.data()),
             static_cast<std::streamsize>(meta.loss_curve.size() *
                                          sizeof(double)));
  put_net_spec(os, gen.drift());
  put_net_spec(os, gen.vol());
  std::vector<ad::NamedTensor> tensors;
  append_net_params(tensors, gen.drift(), "drift");
  append_net_params(tensors, gen.vol(), "vol");
  ad::write_tensors(os, tensors);
}

void save_checkpoint(const std::string& path, const EulerGenerator& gen,
                     const TrainMeta& meta) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("save_checkpoint: cannot open " + path);
  save_checkpoint(os, gen, meta);
  if (!os) throw data_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(std::istream& is, int expect_dim) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw data_error("checkpoint: corrupt or truncated file (bad magic)");
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kCheckpointFormatVersion)
    throw data_error("checkpoint: unsupported format version " +
                     std::to_string(version));

  GeneratorConfig cfg;
  cfg.dim = get<std::int32_t>(is, "dim");
  if (cfg.dim < 1)
    throw data_error("checkpoint: corrupt or truncated file (bad dim)");
  if (expect_dim > 0 && cfg.dim != expect_dim)
    throw data_error("checkpoint: dimension mismatch: file has d=" +
                     std::to_string(cfg.dim) + ", expected d=" +
                     std::to_string(expect_dim));
  cfg.grid.steps = get<std::int32_t>(is, "steps");
  cfg.grid.t0 = get<double>(is, "t0");
  cfg.grid.maturity = get<double>(is, "maturity");
  cfg.x0.resize(static_cast<std::size_t>(cfg.dim));
  for (auto& v : cfg.x0) v = get<double>(is, "x0");
  cfg.hidden_layers = get<std::int32_t>(is, "hidden layers");
  cfg.hidden_width = get<std::int32_t>(is, "hidden width");
  cfg.activation = decode_act(get<std::uint32_t>(is, "activation"));

  TrainMeta meta;
  meta.iterations = get<std::int64_t>(is, "iterations");
  meta.seed = get<std::uint64_t>(is, "seed");
  meta.config_hash = get<std::uint64_t>(is, "config hash");
  const auto curve_len = get<std::uint64_t>(is, "loss curve length");
  if (curve_len > (1ull << 24))
    throw data_error("checkpoint: corrupt or truncated file (curve length)");
  meta.loss_curve.resize(curve_len);
  if (curve_len > 0) {
    is.read(reinterpret_cast<char*>(meta.loss_curve.data()),
            static_cast<std::streamsize>(curve_len * sizeof(double)));
    if (!is)
      throw data_error("checkpoint: corrupt or truncated file (loss curve)");
  }

  auto drift_spec = get_net_spec(is, "drift layer count");
  auto vol_spec = get_net_spec(is, "vol layer count");

  std::vector<ad::NamedTensor> tensors;
  try {
    tensors = ad::read_tensors(is);
  } catch (const data_error& e) {
    throw data_error(std::string("checkpoint: corrupt or truncated file (") +
                     e.what() + ")");
  }
  if (tensors.size() != 2 * (drift_spec.size() + vol_spec.size()))
    throw data_error(
        "checkpoint: corrupt or truncated file (parameter count)");

  auto take = [&](std::size_t offset, std::size_t count) {
    std::vector<ad::Tensor> ps;
    ps.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      auto& t = tensors[offset + i];
      ps.push_back(ad::Tensor::param(t.rows, t.cols, std::move(t.values)));
    }
    return ps;
  };
  ad::Mlp drift, vol;
  try {
    drift = ad::Mlp::from_params(drift_spec, take(0, 2 * drift_spec.size()));
    vol = ad::Mlp::from_params(
        vol_spec, take(2 * drift_spec.size(), 2 * vol_spec.size()));
    Checkpoint ck;
    ck.gen = EulerGenerator::from_nets(cfg, std::move(drift), std::move(vol));
    ck.meta = std::move(meta);
    return ck;
  } catch (const shape_error& e) {
    throw data_error(std::string("checkpoint: corrupt or truncated file (") +
                     e.what() + ")");
  }
}

Checkpoint load_checkpoint(const std::string& path, int expect_dim) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("load_checkpoint: cannot open " + path);
  return load_checkpoint(is, expect_dim);
}

}  // namespace ets::egen
