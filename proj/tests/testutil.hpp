#pragma once
// Shared test helpers: finite-difference gradient checking and small
// vector/matrix comparisons.
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "ets/ad/tensor.hpp"

namespace testutil {

struct FdReport {
  bool ok = true;
  int checked = 0;
  double worst_rel = 0.0;
  std::string detail;
};

// Central finite differences against reverse-mode gradients.
//
// `build` receives a fresh tape and leaf tensors (same shapes as `values`)
// and must return a scalar loss.  Each leaf entry is perturbed by +-h and the
// analytic gradient is required to match (f+ - f-) / 2h within
// atol + rtol * max(|fd|, |grad|).
inline FdReport fd_check(
    const std::vector<std::pair<int, int>>& shapes,
    const std::vector<std::vector<double>>& values,
    const std::function<ets::ad::Tensor(ets::ad::Tape&,
                                        const std::vector<ets::ad::Tensor>&)>&
        build,
    double h = 1e-5, double rtol = 1e-4, double atol = 1e-7) {
  using namespace ets::ad;
  FdReport rep;

  auto eval = [&](const std::vector<std::vector<double>>& vals) {
    Tape tape;
    std::vector<Tensor> leaves;
    for (std::size_t i = 0; i < shapes.size(); ++i)
      leaves.push_back(
          Tensor::param(shapes[i].first, shapes[i].second, vals[i]));
    return build(tape, leaves).value();
  };

  // analytic pass
  Tape tape;
  std::vector<Tensor> leaves;
  for (std::size_t i = 0; i < shapes.size(); ++i)
    leaves.push_back(
        Tensor::param(shapes[i].first, shapes[i].second, values[i]));
  Tensor loss = build(tape, leaves);
  tape.backward(loss);
  std::vector<std::vector<double>> grads;
  for (auto& l : leaves) grads.push_back(l.grad_vector());

  for (std::size_t i = 0; i < shapes.size(); ++i) {
    for (std::size_t j = 0; j < values[i].size(); ++j) {
      auto vp = values;
      vp[i][j] += h;
      const double fp = eval(vp);
      vp[i][j] -= 2 * h;
      const double fm = eval(vp);
      const double fd = (fp - fm) / (2 * h);
      const double an = grads[i][j];
      const double err = std::fabs(fd - an);
      const double scale = std::max(std::fabs(fd), std::fabs(an));
      const double rel = err / std::max(scale, 1e-12);
      ++rep.checked;
      if (scale > 1e-6 && rel > rep.worst_rel) rep.worst_rel = rel;
      if (err > atol + rtol * scale) {
        rep.ok = false;
        std::ostringstream os;
        os << "leaf " << i << " entry " << j << ": fd=" << fd
           << " analytic=" << an << " err=" << err;
        rep.detail = os.str();
        return rep;
      }
    }
  }
  return rep;
}

inline bool close(double a, double b, double tol) {
  return std::fabs(a - b) <= tol;
}

inline bool close_rel(double a, double b, double rtol, double atol = 1e-12) {
  return std::fabs(a - b) <= atol + rtol * std::max(std::fabs(a), std::fabs(b));
}

}  // namespace testutil
