#pragma once
#include <cstdint>
#include <functional>
#include <vector>

#include "ets/cegen/partition.hpp"
#include "ets/egen/generator.hpp"
#include "ets/sde/pathbatch.hpp"

namespace ets::cegen {

// Yields a fresh batch of real sequences.  `seed` is unique per draw, so a
// simulator-backed source stays reproducible and a dataset-backed source can
// subsample deterministically.
using DataSource =
    std::function<sde::PathBatch(int samples, std::uint64_t seed)>;

struct TrainConfig {
  egen::GeneratorConfig gen;
  int iterations = 5000;
  int batch = 300;
  double lr = 1e-3;
  PartitionSpec partition{};
  std::uint64_t seed = 0;

  // Called every monitor_every iterations (and on the last one) with the
  // iteration, its loss, and the generator under training.
  int monitor_every = 50;
  std::function<void(int, double, const egen::EulerGenerator&)> monitor;

  // When set, training continues from a value copy of this generator
  // instead of a fresh initialization; its config must match `gen`.
  // Optimizer moments still start from zero.
  const egen::EulerGenerator* init = nullptr;

  void validate() const;
};

struct TrainResult {
  egen::EulerGenerator gen;
  std::vector<double> loss_history;  // one entry per iteration
};

// Alternating sample / rollout / partition / loss / Adam step loop.  The
// partition is rebuilt every iteration on the current previous states
// (kmeans centers are fitted once on real data up front).  Non-finite losses
// abort with the iteration in the message; a 1000-iteration stretch without
// improvement only warns on stderr.
TrainResult train_cegen(const DataSource& source, const TrainConfig& cfg);

}  // namespace ets::cegen
