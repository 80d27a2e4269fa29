#include "ets/ad/adam.hpp"

#include <cmath>
#include <string>

namespace ets::ad {

void AdamState::step(std::vector<Tensor>& params, long iteration) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }
  if (m_.size() != params.size())
    throw shape_error("adam_step: parameter list changed size");

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

  double scale = 1.0;
  if (cfg_.clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& p : params) {
      const auto* d = p.data();
      if (d->g.empty()) continue;
      for (double g : d->g)
        if (std::isfinite(g)) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;
  }

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto* d = params[i].data();
    if (m_[i].size() != d->v.size())
      throw shape_error("adam_step: parameter " + std::to_string(i) +
                        " changed shape");
    const bool has_grad = !d->g.empty();
    for (std::size_t j = 0; j < d->v.size(); ++j) {
      const double g = (has_grad ? d->g[j] : 0.0) * scale;
      if (!std::isfinite(g))
        throw train_error("adam_step: non-finite gradient in parameter " +
                          std::to_string(i) + " at iteration " +
                          std::to_string(iteration));
      m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g;
      v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g * g;
      const double mh = m_[i][j] / bc1;
      const double vh = v_[i][j] / bc2;
      d->v[j] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
    }
    // consume the gradient: leaves persist across tapes, so leftovers would
    // leak into the next iteration's backward pass
    d->g.clear();
    d->grad_set = false;
  }
}

}  // namespace ets::ad
