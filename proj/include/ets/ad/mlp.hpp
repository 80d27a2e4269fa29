#pragma once
#include <utility>
#include <vector>

#include "ets/ad/tensor.hpp"
#include "ets/rng.hpp"

namespace ets::ad {

enum class Activation { kTanh, kRelu, kSigmoid, kIdentity };

struct LayerSpec {
  int in = 0;
  int out = 0;
  Activation act = Activation::kTanh;
};

// Plain feed-forward net.  Parameters interleave as W0, b0, W1, b1, ...
// where Wi is (in x out) and bi a 1 x out row added to every batch row.
class Mlp {
 public:
  Mlp() = default;

  // dims = {in, h1, ..., out}; hidden layers get `hidden`, the last layer
  // `last`.  Weights are uniform +-sqrt(6/(fan_in+fan_out)) drawn row-major
  // from `rng`; biases start at zero.
  static Mlp make(const std::vector<int>& dims, Activation hidden,
                  Activation last, CounterRng& rng);

  static Mlp from_params(std::vector<LayerSpec> layers,
                         std::vector<Tensor> params);

  Tensor forward(Tape& tape, const Tensor& x) const;

  // Untaped forward for generation and extraction.
  std::vector<double> forward_values(const std::vector<double>& row) const;
  // Batch version: x is m rows of input_dim doubles; returns m x output_dim.
  std::vector<double> forward_values_batch(const std::vector<double>& x,
                                           int m) const;

  int input_dim() const { return layers_.front().in; }
  int output_dim() const { return layers_.back().out; }
  bool empty() const { return layers_.empty(); }

  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }

  // Deep value copy with fresh parameter leaves (used for snapshots).
  Mlp clone() const;

 private:
  std::vector<LayerSpec> layers_;
  std::vector<Tensor> params_;
};

// Forward pass of a scalar-output net together with the per-sample gradient
// of the output w.r.t. the input row, both recorded on the tape.  The
// returned gradient is m x input_dim and stays differentiable w.r.t. the
// net's weights (relu masks are treated as locally constant).
std::pair<Tensor, Tensor> mlp_value_and_input_gradient(Tape& tape,
                                                       const Mlp& net,
                                                       const Tensor& x);

}  // namespace ets::ad
