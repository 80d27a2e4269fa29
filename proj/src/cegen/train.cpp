#include "ets/cegen/train.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <string>

#include "ets/ad/adam.hpp"
#include "ets/cegen/loss.hpp"
#include "ets/rng.hpp"

namespace ets::cegen {

void TrainConfig::validate() const {
  gen.validate();
  if (iterations < 0) throw shape_error("TrainConfig: negative iterations");
  if (batch < 2) throw shape_error("TrainConfig: batch must be >= 2");
  if (!(lr > 0)) throw shape_error("TrainConfig: learning rate must be > 0");
  partition.validate();
  if (monitor_every < 1) throw shape_error("TrainConfig: monitor_every >= 1");
}

TrainResult train_cegen(const DataSource& source, const TrainConfig& cfg) {
  cfg.validate();
  if (!source) throw shape_error("train_cegen: null data source");

  TrainResult res;
  if (cfg.init) {
    const auto& ic = cfg.init->config();
    if (ic.dim != cfg.gen.dim || !(ic.grid == cfg.gen.grid) ||
        ic.hidden_layers != cfg.gen.hidden_layers ||
        ic.width() != cfg.gen.width())
      throw shape_error("train_cegen: init generator does not match the config");
    res.gen = cfg.init->clone();
  } else {
    res.gen = egen::EulerGenerator::make(cfg.gen, cfg.seed);
  }
  res.loss_history.reserve(static_cast<std::size_t>(cfg.iterations));

  KmeansCenters centers;
  if (cfg.partition.mode == PartitionMode::kKmeans) {
    // fitted once, on real data only
    const auto ref = source(
        cfg.batch, CounterRng::derive_key(cfg.seed, streams::kData));
    centers = build_kmeans_partition(ref, cfg.partition.k, cfg.seed);
  }
  const KmeansCenters* cptr =
      cfg.partition.mode == PartitionMode::kKmeans ? &centers : nullptr;

  auto params = res.gen.params();
  ad::AdamState opt({.lr = cfg.lr});

  double best = std::numeric_limits<double>::infinity();
  int best_iter = 0;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const auto real = source(
        cfg.batch,
        CounterRng::derive_key(cfg.seed,
                               streams::kData + 1 + static_cast<std::uint64_t>(iter)));
    if (real.dim != cfg.gen.dim || !(real.grid == cfg.gen.grid))
      throw data_error("train_cegen: data source does not match the grid");

    double value = 0.0;
    try {
      ad::Tape tape;
      CounterRng noise(cfg.seed,
                       streams::kNoise + static_cast<std::uint64_t>(iter));
      auto states = res.gen.rollout(tape, cfg.batch, noise);
      auto loss = conditional_loss(tape, real, states, cfg.partition, cptr);
      value = loss.value();
      if (!std::isfinite(value))
        throw train_error("non-finite loss");
      tape.backward(loss);
      opt.step(params, iter);
    } catch (const train_error& e) {
      throw train_error("train_cegen: iteration " + std::to_string(iter) +
                        ": " + e.what());
    }
    res.loss_history.push_back(value);

    if (value < best) {
      best = value;
      best_iter = iter;
    } else if (iter - best_iter >= 1000) {
      std::cerr << "train_cegen: warning: no loss improvement in the last "
                   "1000 iterations (iteration "
                << iter << ")\n";
      best_iter = iter;  // keep the warning rare
    }
    if (cfg.monitor &&
        (iter % cfg.monitor_every == 0 || iter + 1 == cfg.iterations))
      cfg.monitor(iter, value, res.gen);
  }
  return res;
}

}  // namespace ets::cegen
