#pragma once

#include <cstdint>
#include <vector>

#include "ets/ad/tensor.hpp"
#include "ets/rng.hpp"
#include "ets/sde/pathbatch.hpp"

namespace ets::metrics {

// Single-layer Elman recurrence h' = tanh(x Wx + h Wh + bh) with an affine
// readout plus a linear input skip, y = x Ws + h Wo + bo, used for the
// train-on-synthetic evaluation scores.  The skip keeps one-step prediction
// of near-Markov paths well conditioned.
struct ElmanParams {
  int in = 1, hidden = 4, out = 1;
  ad::Tensor wx, wh, bh, wo, bo, ws;

  static ElmanParams make(int in, int hidden, int out, CounterRng& rng);
  std::vector<ad::Tensor> all() const { return {wx, wh, bh, wo, bo, ws}; }

  // Taped rollout over per-date input tensors (each m x in). rollout_last
  // returns the readout after the final date; rollout_all after every date.
  ad::Tensor rollout_last(ad::Tape& tape,
                          const std::vector<ad::Tensor>& dates) const;
  std::vector<ad::Tensor> rollout_all(ad::Tape& tape,
                                      const std::vector<ad::Tensor>& dates) const;

  // Values-only rollout of one sequence (row-major steps x in); writes the
  // readout after each date into outs (steps x out).
  void forward_values(const double* seq, int steps, double* outs) const;
};

struct ScoreConfig {
  int iterations = 500;
  int batch = 128;
  double lr = 1e-3;
  int repeats = 10;
  double train_frac = 0.8;
  int hidden_mult = 4;  // hidden width = hidden_mult * dim
};

// |held-out accuracy - 0.5| of a recurrent classifier trained to tell real
// paths (label 1) from generated ones (label 0), averaged over repeats.
// 0 means indistinguishable, 0.5 means perfectly separable.
double discriminative_score(const sde::PathBatch& real,
                            const sde::PathBatch& gen, std::uint64_t seed,
                            const ScoreConfig& cfg = {});

// Held-out MAE of a one-step-ahead predictor trained on generated paths and
// evaluated on real ones, averaged over repeats.  Lower is better.
double predictive_score(const sde::PathBatch& real, const sde::PathBatch& gen,
                        std::uint64_t seed, const ScoreConfig& cfg = {});

}  // namespace ets::metrics
