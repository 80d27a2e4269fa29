#include "ets/cegen/partition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ets/rng.hpp"

namespace ets::cegen {

void PartitionSpec::validate() const {
  if (k < 1) throw shape_error("PartitionSpec: k must be >= 1");
  if (lambda < 0) throw shape_error("PartitionSpec: lambda must be >= 0");
  if (min_cell < 2)
    throw shape_error("PartitionSpec: min_cell must be >= 2");
}

namespace {

// indices sorted by one coordinate of a row-major m x d cloud
std::vector<int> order_by_coord(const double* cloud, int m, int d, int dim) {
  std::vector<int> idx(static_cast<std::size_t>(m));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return cloud[static_cast<std::size_t>(a) * d + dim] <
           cloud[static_cast<std::size_t>(b) * d + dim];
  });
  return idx;
}

bool zero_width(const double* cloud, int m, int d, int dim) {
  double lo = cloud[dim], hi = cloud[dim];
  for (int s = 1; s < m; ++s) {
    const double v = cloud[static_cast<std::size_t>(s) * d + dim];
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return !(hi > lo);
}

std::vector<int> all_indices(int m) {
  std::vector<int> idx(static_cast<std::size_t>(m));
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

}  // namespace

std::vector<CellPair> build_quantile_partition(const double* real_prev,
                                               int m_real,
                                               const double* gen_prev,
                                               int m_gen, int d,
                                               const PartitionSpec& spec) {
  spec.validate();
  if (m_real < 1 || m_gen < 1 || d < 1)
    throw shape_error("build_quantile_partition: empty cloud");
  const int m_min = std::min(m_real, m_gen);
  int k = std::min(spec.k, m_min / spec.min_cell);
  k = std::max(1, k);

  std::vector<CellPair> cells;
  cells.reserve(static_cast<std::size_t>(d) * k);
  for (int dim = 0; dim < d; ++dim) {
    if (k == 1 || zero_width(real_prev, m_real, d, dim) ||
        zero_width(gen_prev, m_gen, d, dim)) {
      cells.push_back({dim, all_indices(m_real), all_indices(m_gen)});
      continue;
    }
    const auto ro = order_by_coord(real_prev, m_real, d, dim);
    const auto go = order_by_coord(gen_prev, m_gen, d, dim);
    for (int c = 0; c < k; ++c) {
      CellPair cell;
      cell.dim = dim;
      const auto cut = [k](int m, int j) {
        return static_cast<int>(static_cast<std::int64_t>(m) * j / k);
      };
      cell.real_idx.assign(ro.begin() + cut(m_real, c),
                           ro.begin() + cut(m_real, c + 1));
      cell.gen_idx.assign(go.begin() + cut(m_gen, c),
                          go.begin() + cut(m_gen, c + 1));
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

namespace {

double sq_dist(const double* a, const double* b, int d) {
  double s = 0.0;
  for (int j = 0; j < d; ++j) {
    const double t = a[j] - b[j];
    s += t * t;
  }
  return s;
}

int nearest(const double* p, const std::vector<double>& centers, int k,
            int d) {
  int best = 0;
  double bd = sq_dist(p, centers.data(), d);
  for (int c = 1; c < k; ++c) {
    const double dist = sq_dist(p, centers.data() + static_cast<std::size_t>(c) * d, d);
    if (dist < bd) {
      bd = dist;
      best = c;
    }
  }
  return best;
}

// One date's Lloyd fit on m row-major points.
std::vector<double> lloyd(const double* pts, int m, int d, int k,
                          CounterRng& rng) {
  // init from k distinct points (partial Fisher-Yates)
  std::vector<int> idx(static_cast<std::size_t>(m));
  std::iota(idx.begin(), idx.end(), 0);
  for (int j = 0; j < k; ++j) {
    const int pick = j + static_cast<int>(rng.next_index(
                             static_cast<std::uint64_t>(m - j)));
    std::swap(idx[j], idx[pick]);
  }
  std::vector<double> centers(static_cast<std::size_t>(k) * d);
  for (int c = 0; c < k; ++c)
    for (int j = 0; j < d; ++j)
      centers[static_cast<std::size_t>(c) * d + j] =
          pts[static_cast<std::size_t>(idx[c]) * d + j];

  std::vector<int> assign(static_cast<std::size_t>(m));
  std::vector<double> sums(static_cast<std::size_t>(k) * d);
  std::vector<int> counts(static_cast<std::size_t>(k));
  for (int round = 0; round < 100; ++round) {
    for (int s = 0; s < m; ++s)
      assign[s] = nearest(pts + static_cast<std::size_t>(s) * d, centers, k, d);
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (int s = 0; s < m; ++s) {
      ++counts[assign[s]];
      for (int j = 0; j < d; ++j)
        sums[static_cast<std::size_t>(assign[s]) * d + j] +=
            pts[static_cast<std::size_t>(s) * d + j];
    }
    // empty clusters grab the point farthest from its current center
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      int far = 0;
      double fd = -1.0;
      for (int s = 0; s < m; ++s) {
        const double dist =
            sq_dist(pts + static_cast<std::size_t>(s) * d,
                    centers.data() + static_cast<std::size_t>(assign[s]) * d, d);
        if (dist > fd) {
          fd = dist;
          far = s;
        }
      }
      counts[c] = 1;
      for (int j = 0; j < d; ++j)
        sums[static_cast<std::size_t>(c) * d + j] =
            pts[static_cast<std::size_t>(far) * d + j];
    }
    double moved = 0.0;
    for (int c = 0; c < k; ++c)
      for (int j = 0; j < d; ++j) {
        double& cj = centers[static_cast<std::size_t>(c) * d + j];
        const double nj = sums[static_cast<std::size_t>(c) * d + j] / counts[c];
        moved = std::max(moved, std::fabs(nj - cj));
        cj = nj;
      }
    if (moved < 1e-6) break;
  }
  return centers;
}

}  // namespace

KmeansCenters build_kmeans_partition(const sde::PathBatch& real, int k,
                                     std::uint64_t seed) {
  real.validate();
  if (k < 1) throw shape_error("build_kmeans_partition: k must be >= 1");
  KmeansCenters out;
  out.dim = real.dim;
  out.k = std::min(k, real.samples);
  out.degenerate = k >= real.samples;
  const int d = real.dim;
  std::vector<double> pts(static_cast<std::size_t>(real.samples) * d);
  for (int i = 0; i < real.grid.steps; ++i) {
    for (int s = 0; s < real.samples; ++s)
      for (int j = 0; j < d; ++j)
        pts[static_cast<std::size_t>(s) * d + j] = real.at(s, i, j);
    if (out.degenerate) {
      out.centers.push_back(pts);
      continue;
    }
    CounterRng rng(seed, streams::kShuffle + static_cast<std::uint64_t>(i));
    out.centers.push_back(lloyd(pts.data(), real.samples, d, out.k, rng));
  }
  return out;
}

std::vector<CellPair> assign_clusters(const double* real_prev, int m_real,
                                      const double* gen_prev, int m_gen,
                                      int d,
                                      const std::vector<double>& centers,
                                      int k) {
  if (centers.size() != static_cast<std::size_t>(k) * d)
    throw shape_error("assign_clusters: centers must be k x d");
  std::vector<CellPair> cells(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) cells[c].dim = c;
  for (int s = 0; s < m_real; ++s)
    cells[nearest(real_prev + static_cast<std::size_t>(s) * d, centers, k, d)]
        .real_idx.push_back(s);
  for (int s = 0; s < m_gen; ++s)
    cells[nearest(gen_prev + static_cast<std::size_t>(s) * d, centers, k, d)]
        .gen_idx.push_back(s);
  return cells;
}

}  // namespace ets::cegen
