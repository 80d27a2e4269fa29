#pragma once
#include <vector>

#include "ets/ad/tensor.hpp"

namespace ets::ad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Global-norm gradient clip applied across the whole parameter list before
  // the moment updates; <= 0 disables.  Recurrent rollouts need this.
  double clip_norm = 0.0;
};

// Bias-corrected Adam over a fixed parameter list.  Gradients are read from
// the tensors' accumulated grads; a missing grad counts as zero.  Any
// non-finite gradient aborts with the iteration in the message.  step()
// consumes the gradients: each parameter's grad buffer is cleared so the
// next tape starts from zero.
class AdamState {
 public:
  explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(std::vector<Tensor>& params, long iteration);

  const AdamConfig& config() const { return cfg_; }
  long steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

inline void adam_step(AdamState& state, std::vector<Tensor>& params,
                      long iteration) {
  state.step(params, iteration);
}

}  // namespace ets::ad
