#pragma once
#include <cstdint>
#include <vector>

#include "ets/errors.hpp"
#include "ets/sde/pathbatch.hpp"

namespace ets::cegen {

enum class PartitionMode { kQuantile, kKmeans };

struct PartitionSpec {
  PartitionMode mode = PartitionMode::kQuantile;
  int k = 10;           // subdivisions per conditioning coordinate
  double lambda = 1.0;  // disjoint-support penalty weight
  int min_cell = 5;     // below this a cell falls back to mean terms

  void validate() const;
};

// One conditioning cell: indices into the real and the generated batch whose
// previous states fall into paired intervals (quantile mode, `dim` is the
// conditioning coordinate) or into the same cluster (kmeans mode, `dim` is
// the cluster id).
struct CellPair {
  int dim = 0;
  std::vector<int> real_idx, gen_idx;
};

// Per-dimension equal-count quantile cells, computed separately on each
// cloud and paired by rank.  Clouds are row-major m x d previous states.
// k is reduced so every cell of the smaller cloud can hold min_cell points,
// and a dimension with zero-width support on either side collapses to a
// single cell.
std::vector<CellPair> build_quantile_partition(const double* real_prev,
                                               int m_real,
                                               const double* gen_prev,
                                               int m_gen, int d,
                                               const PartitionSpec& spec);

// Cluster centers fitted once per transition date, on real data only.
struct KmeansCenters {
  int k = 0;
  int dim = 0;
  bool degenerate = false;  // k was >= the sample count
  std::vector<std::vector<double>> centers;  // dates 0..steps-1, each k x d
};

// Lloyd's iterations per date until the largest center movement drops below
// 1e-6 or 100 rounds pass; an emptied cluster is re-seeded from the point
// farthest from its assigned center.
KmeansCenters build_kmeans_partition(const sde::PathBatch& real, int k,
                                     std::uint64_t seed);

// Nearest-center assignment of both clouds for one date (ties to the lower
// cluster id).  Cells may be empty on either side.
std::vector<CellPair> assign_clusters(const double* real_prev, int m_real,
                                      const double* gen_prev, int m_gen,
                                      int d,
                                      const std::vector<double>& centers,
                                      int k);

}  // namespace ets::cegen
