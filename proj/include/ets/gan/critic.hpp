#pragma once
#include <cstdint>
#include <vector>

#include "ets/ad/mlp.hpp"
#include "ets/ad/tensor.hpp"
#include "ets/sde/pathbatch.hpp"

namespace ets::gan {

// Scalar-output critic.  The temporal flavour reads a whole flattened
// sequence (steps * dim inputs, date 1 onward; the deterministic start
// carries no information), the marginal flavour one date at a time as
// (t/T, x).  Hidden layers are tanh, the readout linear, widths default to
// four times the input like the generator nets.
struct Critic {
  ad::Mlp net;

  static Critic temporal(int dim, int steps, int hidden_layers,
                         int hidden_width, std::uint64_t seed);
  static Critic marginal(int dim, int hidden_layers, int hidden_width,
                         std::uint64_t seed);

  bool defined() const { return !net.empty(); }
};

// m x (steps * dim) row per sample: dates 1..steps, dimension innermost.
std::vector<double> flatten_sequences(const sde::PathBatch& b);

// Kantorovich-Rubinstein dual reading of the critic: mean output on the
// real rows minus mean output on the generated rows.  Both row blocks must
// share one shape.
ad::Tensor w1_dual_estimate(ad::Tape& tape, const ad::Mlp& critic,
                            const ad::Tensor& real_rows,
                            const ad::Tensor& gen_rows);
double w1_dual_estimate(const ad::Mlp& critic,
                        const std::vector<double>& real_rows,
                        const std::vector<double>& gen_rows, int m);

// Mean squared deviation of the critic's input-gradient norm from 1 on
// pairwise interpolates u x + (1 - u) y, one uniform u per row drawn in row
// order from stream (seed, 0).  Differentiable in the critic parameters;
// the norm carries a 1e-12 cushion under the square root, so a critic with
// zero gradient scores just under 1.
ad::Tensor gradient_penalty(ad::Tape& tape, const ad::Mlp& critic,
                            const ad::Tensor& real_rows,
                            const ad::Tensor& gen_rows, std::uint64_t seed);

}  // namespace ets::gan
