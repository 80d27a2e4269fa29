#include "ets/metrics/scores.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ets/ad/adam.hpp"
#include "ets/errors.hpp"

namespace ets::metrics {

using ad::Tape;
using ad::Tensor;
using sde::PathBatch;

namespace {

Tensor glorot(int rows, int cols, CounterRng& rng) {
  const double bound = std::sqrt(6.0 / (rows + cols));
  std::vector<double> v(static_cast<std::size_t>(rows) * cols);
  for (auto& x : v) x = (2.0 * rng.next_unit_open() - 1.0) * bound;
  return Tensor::param(rows, cols, std::move(v));
}

}  // namespace

ElmanParams ElmanParams::make(int in, int hidden, int out, CounterRng& rng) {
  ElmanParams p;
  p.in = in;
  p.hidden = hidden;
  p.out = out;
  p.wx = glorot(in, hidden, rng);
  p.wh = glorot(hidden, hidden, rng);
  p.bh = Tensor::zeros(1, hidden, true);
  p.wo = glorot(hidden, out, rng);
  p.bo = Tensor::zeros(1, out, true);
  p.ws = glorot(in, out, rng);
  return p;
}

Tensor ElmanParams::rollout_last(Tape& tape,
                                 const std::vector<Tensor>& dates) const {
  if (dates.empty()) throw shape_error("rollout_last: empty sequence");
  Tensor h = ad::tanh(tape, ad::add(tape, ad::matmul(tape, dates[0], wx), bh));
  for (std::size_t t = 1; t < dates.size(); ++t) {
    Tensor pre = ad::add(tape, ad::matmul(tape, dates[t], wx),
                         ad::matmul(tape, h, wh));
    h = ad::tanh(tape, ad::add(tape, pre, bh));
  }
  Tensor lin = ad::add(tape, ad::matmul(tape, h, wo),
                       ad::matmul(tape, dates.back(), ws));
  return ad::add(tape, lin, bo);
}

std::vector<Tensor> ElmanParams::rollout_all(
    Tape& tape, const std::vector<Tensor>& dates) const {
  if (dates.empty()) throw shape_error("rollout_all: empty sequence");
  std::vector<Tensor> outs;
  outs.reserve(dates.size());
  Tensor h = ad::tanh(tape, ad::add(tape, ad::matmul(tape, dates[0], wx), bh));
  for (std::size_t t = 0; t < dates.size(); ++t) {
    if (t > 0) {
      Tensor pre = ad::add(tape, ad::matmul(tape, dates[t], wx),
                           ad::matmul(tape, h, wh));
      h = ad::tanh(tape, ad::add(tape, pre, bh));
    }
    Tensor lin = ad::add(tape, ad::matmul(tape, h, wo),
                         ad::matmul(tape, dates[t], ws));
    outs.push_back(ad::add(tape, lin, bo));
  }
  return outs;
}

void ElmanParams::forward_values(const double* seq, int steps,
                                 double* outs) const {
  const auto& vx = wx.values();
  const auto& vh = wh.values();
  const auto& vbh = bh.values();
  const auto& vo = wo.values();
  const auto& vbo = bo.values();
  const auto& vs = ws.values();
  std::vector<double> h(static_cast<std::size_t>(hidden), 0.0);
  std::vector<double> nh(static_cast<std::size_t>(hidden));
  for (int t = 0; t < steps; ++t) {
    const double* x = seq + static_cast<std::size_t>(t) * in;
    for (int j = 0; j < hidden; ++j) {
      double acc = vbh[static_cast<std::size_t>(j)];
      for (int i = 0; i < in; ++i)
        acc += x[i] * vx[static_cast<std::size_t>(i) * hidden + j];
      if (t > 0)
        for (int i = 0; i < hidden; ++i)
          acc += h[static_cast<std::size_t>(i)] *
                 vh[static_cast<std::size_t>(i) * hidden + j];
      nh[static_cast<std::size_t>(j)] = std::tanh(acc);
    }
    h = nh;
    double* o = outs + static_cast<std::size_t>(t) * out;
    for (int j = 0; j < out; ++j) {
      double acc = vbo[static_cast<std::size_t>(j)];
      for (int i = 0; i < hidden; ++i)
        acc += h[static_cast<std::size_t>(i)] *
               vo[static_cast<std::size_t>(i) * out + j];
      for (int i = 0; i < in; ++i)
        acc += x[i] * vs[static_cast<std::size_t>(i) * out + j];
      o[j] = acc;
    }
  }
}

namespace {

struct Split {
  std::vector<int> train, test;
};

Split split_indices(int m, double train_frac, CounterRng& rng) {
  std::vector<int> idx(static_cast<std::size_t>(m));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = m - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng.next_index(static_cast<std::uint64_t>(i) + 1));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  auto cut = static_cast<std::size_t>(train_frac * m);
  cut = std::max<std::size_t>(1, std::min<std::size_t>(cut, static_cast<std::size_t>(m) - 1));
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cut));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(cut), idx.end());
  return s;
}

// Per-date constant tensors for the rows of `batch` selected by src/rows,
// restricted to dates [t0, t1].
std::vector<Tensor> date_tensors(const PathBatch& batch,
                                 const std::vector<int>& rows, int t0, int t1) {
  const int d = batch.dim;
  const auto m = rows.size();
  std::vector<Tensor> dates;
  dates.reserve(static_cast<std::size_t>(t1 - t0 + 1));
  for (int t = t0; t <= t1; ++t) {
    std::vector<double> v(m * static_cast<std::size_t>(d));
    for (std::size_t s = 0; s < m; ++s)
      for (int k = 0; k < d; ++k)
        v[s * static_cast<std::size_t>(d) + k] = batch.at(rows[s], t, k);
    dates.push_back(Tensor::constant(static_cast<int>(m), d, std::move(v)));
  }
  return dates;
}

std::vector<int> sample_rows(const std::vector<int>& pool, int count,
                             CounterRng& rng) {
  std::vector<int> rows(static_cast<std::size_t>(count));
  for (auto& r : rows)
    r = pool[static_cast<std::size_t>(rng.next_index(pool.size()))];
  return rows;
}

void check_pair(const PathBatch& real, const PathBatch& gen) {
  if (real.dim != gen.dim)
    throw shape_error("score: dimension mismatch between batches");
  if (!(real.grid == gen.grid))
    throw shape_error("score: batches on different grids");
  if (real.samples < 10 || gen.samples < 10)
    throw shape_error("score: need at least 10 samples per batch");
}

}  // namespace

double discriminative_score(const PathBatch& real, const PathBatch& gen,
                            std::uint64_t seed, const ScoreConfig& cfg) {
  check_pair(real, gen);
  const int d = real.dim;
  const int dates = real.grid.steps + 1;
  double total = 0;
  for (int rep = 0; rep < cfg.repeats; ++rep) {
    CounterRng shuffle_rng(seed + static_cast<std::uint64_t>(rep),
                           streams::kShuffle);
    CounterRng init_rng(seed + static_cast<std::uint64_t>(rep),
                        streams::kInit);
    auto sr = split_indices(real.samples, cfg.train_frac, shuffle_rng);
    auto sg = split_indices(gen.samples, cfg.train_frac, shuffle_rng);
    auto net = ElmanParams::make(d, cfg.hidden_mult * d, 1, init_rng);
    auto params = net.all();
    ad::AdamState opt({.lr = cfg.lr, .clip_norm = 1.0});

    const int half = std::max(1, cfg.batch / 2);
    std::vector<double> labels(2 * static_cast<std::size_t>(half), 0.0);
    for (int i = 0; i < half; ++i) labels[static_cast<std::size_t>(i)] = 1.0;

    for (int it = 1; it <= cfg.iterations; ++it) {
      auto rows_r = sample_rows(sr.train, half, shuffle_rng);
      auto rows_g = sample_rows(sg.train, half, shuffle_rng);
      Tape tape;
      auto dr = date_tensors(real, rows_r, 0, dates - 1);
      auto dg = date_tensors(gen, rows_g, 0, dates - 1);
      std::vector<Tensor> joint;
      joint.reserve(dr.size());
      for (std::size_t t = 0; t < dr.size(); ++t) {
        std::vector<double> v = dr[t].values();
        const auto& gv = dg[t].values();
        v.insert(v.end(), gv.begin(), gv.end());
        joint.push_back(Tensor::constant(2 * half, d, std::move(v)));
      }
      Tensor logit = net.rollout_last(tape, joint);
      Tensor p = ad::sigmoid(tape, logit);
      Tensor y = Tensor::constant(2 * half, 1, labels);
      Tensor one_minus_p =
          ad::add(tape, ad::smul(tape, p, -1.0), Tensor::scalar(1.0));
      Tensor one_minus_y =
          ad::add(tape, ad::smul(tape, y, -1.0), Tensor::scalar(1.0));
      Tensor eps = Tensor::scalar(1e-12);
      Tensor ll = ad::add(
          tape, ad::mul(tape, y, ad::log(tape, ad::add(tape, p, eps))),
          ad::mul(tape, one_minus_y,
                  ad::log(tape, ad::add(tape, one_minus_p, eps))));
      Tensor loss = ad::smul(tape, ad::mean(tape, ll), -1.0);
      tape.backward(loss);
      opt.step(params, it);
    }

    // held-out accuracy, real labelled 1 and generated labelled 0
    int correct = 0, count = 0;
    std::vector<double> seq(static_cast<std::size_t>(dates) * d);
    std::vector<double> outs(static_cast<std::size_t>(dates));
    auto eval = [&](const PathBatch& b, const std::vector<int>& rows,
                    bool positive) {
      for (int s : rows) {
        for (int t = 0; t < dates; ++t)
          for (int k = 0; k < d; ++k)
            seq[static_cast<std::size_t>(t) * d + k] = b.at(s, t, k);
        net.forward_values(seq.data(), dates, outs.data());
        const bool pred = outs[static_cast<std::size_t>(dates) - 1] > 0.0;
        if (pred == positive) ++correct;
        ++count;
      }
    };
    eval(real, sr.test, true);
    eval(gen, sg.test, false);
    total += std::fabs(static_cast<double>(correct) / count - 0.5);
  }
  return total / cfg.repeats;
}

double predictive_score(const PathBatch& real, const PathBatch& gen,
                        std::uint64_t seed, const ScoreConfig& cfg) {
  check_pair(real, gen);
  const int d = real.dim;
  const int n = real.grid.steps;
  double total = 0;
  for (int rep = 0; rep < cfg.repeats; ++rep) {
    CounterRng shuffle_rng(seed + 1000 + static_cast<std::uint64_t>(rep),
                           streams::kShuffle);
    CounterRng init_rng(seed + 1000 + static_cast<std::uint64_t>(rep),
                        streams::kInit);
    auto sg = split_indices(gen.samples, cfg.train_frac, shuffle_rng);
    auto sr = split_indices(real.samples, cfg.train_frac, shuffle_rng);
    auto net = ElmanParams::make(d, cfg.hidden_mult * d, d, init_rng);
    auto params = net.all();
    ad::AdamState opt({.lr = cfg.lr, .clip_norm = 1.0});

    for (int it = 1; it <= cfg.iterations; ++it) {
      auto rows = sample_rows(sg.train, cfg.batch, shuffle_rng);
      Tape tape;
      auto inputs = date_tensors(gen, rows, 0, n - 1);
      auto targets = date_tensors(gen, rows, 1, n);
      auto preds = net.rollout_all(tape, inputs);
      // squared error for training (smooth near the optimum, so Adam
      // settles); the reported score below stays an MAE
      Tensor acc =
          ad::mean(tape, ad::square(tape, ad::sub(tape, preds[0], targets[0])));
      for (int t = 1; t < n; ++t)
        acc = ad::add(
            tape, acc,
            ad::mean(tape,
                     ad::square(tape, ad::sub(
                                          tape, preds[static_cast<std::size_t>(t)],
                                          targets[static_cast<std::size_t>(t)]))));
      Tensor loss = ad::smul(tape, acc, 1.0 / n);
      tape.backward(loss);
      opt.step(params, it);
    }

    // MAE on held-out real sequences
    double mae = 0;
    std::size_t terms = 0;
    std::vector<double> seq(static_cast<std::size_t>(n) * d);
    std::vector<double> outs(static_cast<std::size_t>(n) * d);
    for (int s : sr.test) {
      for (int t = 0; t < n; ++t)
        for (int k = 0; k < d; ++k)
          seq[static_cast<std::size_t>(t) * d + k] = real.at(s, t, k);
      net.forward_values(seq.data(), n, outs.data());
      for (int t = 0; t < n; ++t)
        for (int k = 0; k < d; ++k) {
          mae += std::fabs(outs[static_cast<std::size_t>(t) * d + k] -
                           real.at(s, t + 1, k));
          ++terms;
        }
    }
    total += mae / static_cast<double>(terms);
  }
  return total / cfg.repeats;
}

}  // namespace ets::metrics
