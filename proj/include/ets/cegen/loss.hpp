#pragma once
#include <vector>

#include "ets/ad/tensor.hpp"
#include "ets/cegen/partition.hpp"
#include "ets/sde/pathbatch.hpp"

namespace ets::cegen {

struct LossStats {
  int cells_w2 = 0;        // full mean + Bures terms
  int cells_small = 0;     // mean-difference-only fallbacks
  int cells_disjoint = 0;  // support-separation penalties
  int cells_skipped = 0;   // empty on one side (kmeans assignment)
};

// Conditional transition loss: for every date and paired cell, the Gaussian
// W2^2 between the full next-state clouds of the members.  A pair whose
// previous-state supports do not overlap contributes lambda times the
// absolute gap of the previous-state coordinate means instead; a pair below
// min_cell on either side contributes only the squared next-state mean gap
// (its covariance would be noise).  Real-side summaries are constants of the
// iteration; gradients flow through the generated states alone, and terms
// accumulate in fixed (date, dimension, cell) order.
//
// gen_states are the rollout outputs, dates 0..steps, each m x d.
// spec.mode == kKmeans requires `centers` fitted on real data.
ad::Tensor conditional_loss(ad::Tape& tape, const sde::PathBatch& real,
                            const std::vector<ad::Tensor>& gen_states,
                            const PartitionSpec& spec,
                            const KmeansCenters* centers = nullptr,
                            LossStats* stats = nullptr);

// Untaped convenience: the same loss between two sampled batches.
double conditional_loss_value(const sde::PathBatch& real,
                              const sde::PathBatch& gen,
                              const PartitionSpec& spec,
                              const KmeansCenters* centers = nullptr,
                              LossStats* stats = nullptr);

}  // namespace ets::cegen
