#include "ets/ad/mlp.hpp"

#include <cmath>

namespace ets::ad {

namespace {

double apply_act(Activation act, double x) {
  switch (act) {
    case Activation::kTanh:
      return std::tanh(x);
    case Activation::kRelu:
      return x > 0.0 ? x : 0.0;
    case Activation::kSigmoid:
      return 1.0 / (1.0 + std::exp(-x));
    case Activation::kIdentity:
      return x;
  }
  return x;
}

Tensor apply_act(Tape& tape, Activation act, const Tensor& x) {
  switch (act) {
    case Activation::kTanh:
      return tanh(tape, x);
    case Activation::kRelu:
      return relu(tape, x);
    case Activation::kSigmoid:
      return sigmoid(tape, x);
    case Activation::kIdentity:
      return x;
  }
  return x;
}

}  // namespace

Mlp Mlp::make(const std::vector<int>& dims, Activation hidden, Activation last,
              CounterRng& rng) {
  if (dims.size() < 2) throw shape_error("Mlp::make: need at least one layer");
  Mlp net;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int in = dims[l], out = dims[l + 1];
    if (in < 1 || out < 1) throw shape_error("Mlp::make: bad layer width");
    const Activation act = (l + 2 == dims.size()) ? last : hidden;
    net.layers_.push_back({in, out, act});
    const double lim = std::sqrt(6.0 / (in + out));
    std::vector<double> w(static_cast<std::size_t>(in) * out);
    for (auto& x : w) x = (2.0 * rng.next_unit_open() - 1.0) * lim;
    net.params_.push_back(Tensor::param(in, out, std::move(w)));
    net.params_.push_back(Tensor::param(
        1, out, std::vector<double>(static_cast<std::size_t>(out), 0.0)));
  }
  return net;
}

Mlp Mlp::from_params(std::vector<LayerSpec> layers,
                     std::vector<Tensor> params) {
  if (params.size() != 2 * layers.size())
    throw shape_error("Mlp::from_params: need one weight and bias per layer");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& W = params[2 * l];
    const auto& b = params[2 * l + 1];
    if (W.rows() != layers[l].in || W.cols() != layers[l].out ||
        b.rows() != 1 || b.cols() != layers[l].out)
      throw shape_error("Mlp::from_params: parameter shape mismatch at layer " +
                        std::to_string(l));
    if (l > 0 && layers[l].in != layers[l - 1].out)
      throw shape_error("Mlp::from_params: layer widths do not chain");
  }
  Mlp net;
  net.layers_ = std::move(layers);
  net.params_ = std::move(params);
  return net;
}

Tensor Mlp::forward(Tape& tape, const Tensor& x) const {
  if (empty()) throw shape_error("Mlp::forward: empty net");
  if (x.cols() != input_dim())
    throw shape_error("Mlp::forward: input " + x.shape_str() + " vs in_dim " +
                      std::to_string(input_dim()));
  Tensor h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    h = add(tape, matmul(tape, h, params_[2 * l]), params_[2 * l + 1]);
    h = apply_act(tape, layers_[l].act, h);
  }
  return h;
}

std::vector<double> Mlp::forward_values(const std::vector<double>& row) const {
  return forward_values_batch(row, 1);
}

std::vector<double> Mlp::forward_values_batch(const std::vector<double>& x,
                                              int m) const {
  if (empty()) throw shape_error("Mlp::forward_values: empty net");
  const int in = input_dim();
  if (x.size() != static_cast<std::size_t>(m) * in)
    throw shape_error("Mlp::forward_values: input size mismatch");
  std::vector<double> cur(x), next;
  int width = in;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const int out = layers_[l].out;
    const auto& W = params_[2 * l].values();
    const auto& b = params_[2 * l + 1].values();
    next.assign(static_cast<std::size_t>(m) * out, 0.0);
    // same accumulation order as the taped path: matmul first, then bias
    for (int i = 0; i < m; ++i) {
      const double* xi = cur.data() + static_cast<std::size_t>(i) * width;
      double* oi = next.data() + static_cast<std::size_t>(i) * out;
      for (int p = 0; p < width; ++p) {
        const double v = xi[p];
        if (v == 0.0) continue;
        const double* wrow = W.data() + static_cast<std::size_t>(p) * out;
        for (int j = 0; j < out; ++j) oi[j] += v * wrow[j];
      }
      for (int j = 0; j < out; ++j)
        oi[j] = apply_act(layers_[l].act, oi[j] + b[j]);
    }
    cur.swap(next);
    width = out;
  }
  return cur;
}

Mlp Mlp::clone() const {
  std::vector<Tensor> params;
  params.reserve(params_.size());
  for (const auto& p : params_)
    params.push_back(Tensor::param(p.rows(), p.cols(), p.values()));
  return from_params(layers_, std::move(params));
}

std::pair<Tensor, Tensor> mlp_value_and_input_gradient(Tape& tape,
                                                       const Mlp& net,
                                                       const Tensor& x) {
  if (net.output_dim() != 1)
    throw shape_error("mlp_value_and_input_gradient: scalar output required");
  const auto& layers = net.layers();
  const auto& params = net.params();
  const int m = x.rows();

  // forward, keeping activations
  std::vector<Tensor> acts;  // post-activation per layer
  std::vector<Tensor> pres;  // pre-activation per layer
  Tensor h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Tensor z = add(tape, matmul(tape, h, params[2 * l]), params[2 * l + 1]);
    pres.push_back(z);
    h = apply_act(tape, layers[l].act, z);
    acts.push_back(h);
  }

  // reverse sweep expressed with recorded ops, so the result remains
  // differentiable w.r.t. the weights
  Tensor g = Tensor::constant(m, 1, std::vector<double>(m, 1.0));
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& spec = layers[li];
    Tensor gpre;
    switch (spec.act) {
      case Activation::kIdentity:
        gpre = g;
        break;
      case Activation::kTanh: {
        auto ones = Tensor::constant(
            m, spec.out,
            std::vector<double>(static_cast<std::size_t>(m) * spec.out, 1.0));
        gpre = mul(tape, g, sub(tape, ones, square(tape, acts[li])));
        break;
      }
      case Activation::kSigmoid: {
        auto ones = Tensor::constant(
            m, spec.out,
            std::vector<double>(static_cast<std::size_t>(m) * spec.out, 1.0));
        gpre = mul(tape, g, mul(tape, acts[li], sub(tape, ones, acts[li])));
        break;
      }
      case Activation::kRelu: {
        // mask depends on the sign pattern only; constant w.r.t. weights a.e.
        std::vector<double> mask(static_cast<std::size_t>(m) * spec.out);
        const auto& zv = pres[li].values();
        for (std::size_t i = 0; i < mask.size(); ++i)
          mask[i] = zv[i] > 0.0 ? 1.0 : 0.0;
        gpre = mul(tape, g, Tensor::constant(m, spec.out, std::move(mask)));
        break;
      }
    }
    g = matmul(tape, gpre, transpose(tape, params[2 * li]));
  }
  return {acts.back(), g};
}

}  // namespace ets::ad
