#include "ets/cegen/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ets/metrics/gaussian.hpp"

namespace ets::cegen {

namespace {

constexpr double kRidge = 1e-6;

// row-major copy of one date of a path batch
std::vector<double> date_rows(const sde::PathBatch& b, int date) {
  std::vector<double> out(static_cast<std::size_t>(b.samples) * b.dim);
  for (int s = 0; s < b.samples; ++s)
    for (int j = 0; j < b.dim; ++j)
      out[static_cast<std::size_t>(s) * b.dim + j] = b.at(s, date, j);
  return out;
}

// member rows gathered into a contiguous cloud
std::vector<double> gather(const std::vector<double>& rows, int d,
                           const std::vector<int>& idx) {
  std::vector<double> out(idx.size() * d);
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (int j = 0; j < d; ++j)
      out[i * d + j] = rows[static_cast<std::size_t>(idx[i]) * d + j];
  return out;
}

struct Interval {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
};

Interval member_interval(const std::vector<double>& rows, int d, int dim,
                         const std::vector<int>& idx) {
  Interval iv;
  for (int s : idx) {
    const double v = rows[static_cast<std::size_t>(s) * d + dim];
    iv.lo = std::min(iv.lo, v);
    iv.hi = std::max(iv.hi, v);
  }
  return iv;
}

double coord_mean(const std::vector<double>& rows, int d, int dim,
                  const std::vector<int>& idx) {
  double s = 0.0;
  for (int i : idx) s += rows[static_cast<std::size_t>(i) * d + dim];
  return s / static_cast<double>(idx.size());
}

std::vector<double> col_means(const std::vector<double>& cloud, int m, int d) {
  std::vector<double> mu(static_cast<std::size_t>(d), 0.0);
  for (int s = 0; s < m; ++s)
    for (int j = 0; j < d; ++j)
      mu[j] += cloud[static_cast<std::size_t>(s) * d + j];
  for (auto& v : mu) v /= m;
  return mu;
}

}  // namespace

ad::Tensor conditional_loss(ad::Tape& tape, const sde::PathBatch& real,
                            const std::vector<ad::Tensor>& gen_states,
                            const PartitionSpec& spec,
                            const KmeansCenters* centers, LossStats* stats) {
  spec.validate();
  real.validate();
  const int d = real.dim;
  const int steps = real.grid.steps;
  if (gen_states.size() != static_cast<std::size_t>(steps) + 1)
    throw shape_error("conditional_loss: generated dates do not match grid");
  for (const auto& t : gen_states)
    if (!t.defined() || t.cols() != d || t.rows() != gen_states[0].rows())
      throw shape_error("conditional_loss: generated states must be m x d");
  if (spec.mode == PartitionMode::kKmeans) {
    if (centers == nullptr)
      throw shape_error("conditional_loss: kmeans mode needs fitted centers");
    if (centers->dim != d ||
        centers->centers.size() != static_cast<std::size_t>(steps))
      throw shape_error("conditional_loss: centers do not match the grid");
  }
  const int m_gen = gen_states[0].rows();
  LossStats local;
  LossStats& st = stats ? *stats : local;

  auto total = ad::Tensor::scalar(0.0);
  for (int i = 0; i < steps; ++i) {
    const auto real_prev = date_rows(real, i);
    const auto real_next = date_rows(real, i + 1);
    const auto& gen_prev = gen_states[i].values();

    const auto cells =
        spec.mode == PartitionMode::kQuantile
            ? build_quantile_partition(real_prev.data(), real.samples,
                                       gen_prev.data(), m_gen, d, spec)
            : assign_clusters(real_prev.data(), real.samples, gen_prev.data(),
                              m_gen, d, centers->centers[i], centers->k);

    int used = 0;
    for (const auto& cell : cells) {
      const int nr = static_cast<int>(cell.real_idx.size());
      const int ng = static_cast<int>(cell.gen_idx.size());
      if (nr == 0 || ng == 0) {
        ++st.cells_skipped;
        continue;
      }
      if (spec.mode == PartitionMode::kQuantile) {
        const auto ri = member_interval(real_prev, d, cell.dim, cell.real_idx);
        const auto gi = member_interval(gen_prev, d, cell.dim, cell.gen_idx);
        if (ri.hi < gi.lo || gi.hi < ri.lo) {
          // supports apart: pull the generated previous states over
          const double rm = coord_mean(real_prev, d, cell.dim, cell.real_idx);
          auto rows = ad::gather_rows(tape, gen_states[i], cell.gen_idx);
          std::vector<double> pick(static_cast<std::size_t>(d), 0.0);
          pick[cell.dim] = 1.0;
          auto col = ad::matmul(tape, rows,
                                ad::Tensor::constant(d, 1, std::move(pick)));
          auto gap = ad::abs(
              tape, ad::sub(tape, ad::mean(tape, col), ad::Tensor::scalar(rm)));
          total = ad::add(tape, total, ad::smul(tape, gap, spec.lambda));
          ++st.cells_disjoint;
          ++used;
          continue;
        }
      }
      const auto real_cloud = gather(real_next, d, cell.real_idx);
      auto gen_cloud = ad::gather_rows(tape, gen_states[i + 1], cell.gen_idx);
      if (std::min(nr, ng) < spec.min_cell) {
        // too small for a covariance: squared mean gap only
        auto rmean = ad::Tensor::constant(1, d, col_means(real_cloud, nr, d));
        auto diff = ad::sub(tape, ad::colmean(tape, gen_cloud), rmean);
        total = ad::add(tape, total,
                        ad::sum(tape, ad::square(tape, diff)));
        ++st.cells_small;
        ++used;
        continue;
      }
      const auto ref =
          metrics::empirical_summary(real_cloud.data(), nr, d, kRidge);
      total = ad::add(
          tape, total,
          metrics::gaussian_w2_sq_vs_const(tape, gen_cloud, ref, kRidge));
      ++st.cells_w2;
      ++used;
    }
    if (used == 0)
      throw train_error("conditional_loss: every cell empty at date " +
                        std::to_string(i + 1));
  }
  return total;
}

double conditional_loss_value(const sde::PathBatch& real,
                              const sde::PathBatch& gen,
                              const PartitionSpec& spec,
                              const KmeansCenters* centers, LossStats* stats) {
  gen.validate();
  if (!(gen.grid == real.grid) || gen.dim != real.dim)
    throw shape_error("conditional_loss: batches on different grids");
  ad::Tape tape;
  std::vector<ad::Tensor> states;
  states.reserve(static_cast<std::size_t>(gen.grid.dates()));
  for (int i = 0; i < gen.grid.dates(); ++i) {
    std::vector<double> rows(static_cast<std::size_t>(gen.samples) * gen.dim);
    for (int s = 0; s < gen.samples; ++s)
      for (int j = 0; j < gen.dim; ++j)
        rows[static_cast<std::size_t>(s) * gen.dim + j] = gen.at(s, i, j);
    states.push_back(
        ad::Tensor::constant(gen.samples, gen.dim, std::move(rows)));
  }
  return conditional_loss(tape, real, states, spec, centers, stats).value();
}

}  // namespace ets::cegen
