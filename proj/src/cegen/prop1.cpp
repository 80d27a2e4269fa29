#include "ets/cegen/prop1.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ets/metrics/gaussian.hpp"
#include "ets/rng.hpp"

namespace ets::cegen {

void Prop1Config::validate() const {
  if (!(dx > 0)) throw shape_error("Prop1Config: dx must be > 0");
  if (samples < 2) throw shape_error("Prop1Config: samples must be >= 2");
  if (min_cell < 2) throw shape_error("Prop1Config: min_cell must be >= 2");
  if (lipschitz < 0) throw shape_error("Prop1Config: negative Lipschitz");
  if (bootstrap < 0) throw shape_error("Prop1Config: negative bootstrap");
  if (se_inflation < 0) throw shape_error("Prop1Config: negative inflation");
}

namespace {

// 1-d W2 between two scalar clouds: squared mean gap plus squared deviation
// gap (the Bures term collapses to (sqrt(va) - sqrt(vb))^2 in one dimension).
double w2_sq_1d(const std::vector<double>& xs, const std::vector<double>& ys,
                double ridge = 1e-6) {
  const auto sa = metrics::empirical_summary(xs.data(),
                                             static_cast<int>(xs.size()), 1,
                                             ridge);
  const auto sb = metrics::empirical_summary(ys.data(),
                                             static_cast<int>(ys.size()), 1,
                                             ridge);
  const double dm = sa.mean(0) - sb.mean(0);
  const double ds = std::sqrt(sa.cov(0, 0)) - std::sqrt(sb.cov(0, 0));
  return dm * dm + ds * ds;
}

std::vector<double> resample(const std::vector<double>& v, CounterRng& rng) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = v[rng.next_index(v.size())];
  return out;
}

}  // namespace

Prop1Report prop1_bound_check(const egen::EulerGenerator& a,
                              const egen::EulerGenerator& b,
                              const Prop1Config& cfg) {
  cfg.validate();
  if (a.dim() != 1 || b.dim() != 1)
    throw shape_error("prop1_bound_check: scalar generators only");
  if (!(a.grid() == b.grid()))
    throw shape_error("prop1_bound_check: generators on different grids");

  const auto& g = a.grid();
  const double dt = g.dt();
  const auto pa = a.generate(cfg.samples, cfg.seed);
  const auto pb = b.generate(cfg.samples, cfg.seed + 1);

  Prop1Report rep;
  for (int i = 0; i < g.steps; ++i) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (int s = 0; s < cfg.samples; ++s) {
      lo = std::min({lo, pa.at(s, i, 0), pb.at(s, i, 0)});
      hi = std::max({hi, pa.at(s, i, 0), pb.at(s, i, 0)});
    }
    const int cells = std::max(
        1, static_cast<int>(std::ceil((hi - lo) / cfg.dx - 1e-12)));
    for (int c = 0; c < cells; ++c) {
      Prop1Cell cell;
      cell.date = i;
      cell.lo = lo + c * cfg.dx;
      cell.hi = (c + 1 == cells) ? hi : lo + (c + 1) * cfg.dx;
      cell.center = 0.5 * (cell.lo + cell.hi);

      std::vector<double> next_a, next_b;
      for (int s = 0; s < cfg.samples; ++s) {
        const double xa = pa.at(s, i, 0);
        const bool last = (c + 1 == cells);
        if (xa >= cell.lo && (xa < cell.hi || (last && xa <= cell.hi)))
          next_a.push_back(pa.at(s, i + 1, 0));
        const double xb = pb.at(s, i, 0);
        if (xb >= cell.lo && (xb < cell.hi || (last && xb <= cell.hi)))
          next_b.push_back(pb.at(s, i + 1, 0));
      }
      cell.n_a = static_cast<int>(next_a.size());
      cell.n_b = static_cast<int>(next_b.size());
      if (cell.n_a < cfg.min_cell || cell.n_b < cfg.min_cell) {
        ++rep.skipped;
        continue;
      }

      cell.eps = std::sqrt(std::max(0.0, w2_sq_1d(next_a, next_b)));
      if (cfg.bootstrap > 1) {
        CounterRng rng(cfg.seed,
                       streams::kScore +
                           static_cast<std::uint64_t>(i) * 100000 +
                           static_cast<std::uint64_t>(c));
        double sum = 0.0, sum2 = 0.0;
        for (int r = 0; r < cfg.bootstrap; ++r) {
          const double e = std::sqrt(std::max(
              0.0, w2_sq_1d(resample(next_a, rng), resample(next_b, rng))));
          sum += e;
          sum2 += e * e;
        }
        const double mu = sum / cfg.bootstrap;
        cell.eps_se =
            std::sqrt(std::max(0.0, sum2 / cfg.bootstrap - mu * mu));
      }
      const double eps_used = cell.eps + cfg.se_inflation * cell.eps_se;

      const double tn = g.time(i) / g.maturity;
      const std::vector<double> in{tn, cell.center};
      const double ba = a.drift().forward_values(in)[0];
      const double bb = b.drift().forward_values(in)[0];
      const double va = std::fabs(a.vol().forward_values(in)[0]);
      const double vb = std::fabs(b.vol().forward_values(in)[0]);

      cell.drift_gap = std::fabs(ba - bb);
      cell.drift_bound =
          (eps_used + cfg.dx) / dt + 2.0 * cfg.lipschitz * cfg.dx;
      cell.vol_gap = std::fabs(va - vb);
      cell.vol_bound =
          eps_used / std::sqrt(dt) + 2.0 * cfg.lipschitz * cfg.dx;
      cell.drift_ok = cell.drift_gap <= cell.drift_bound;
      cell.vol_ok = cell.vol_gap <= cell.vol_bound;
      if (!cell.drift_ok || !cell.vol_ok) rep.all_hold = false;
      rep.cells.push_back(cell);
    }
  }
  return rep;
}

}  // namespace ets::cegen
