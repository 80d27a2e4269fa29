#include "ets/gan/critic.hpp"

#include <string>

#include "ets/errors.hpp"
#include "ets/rng.hpp"

namespace ets::gan {

namespace {

ad::Mlp critic_net(int inputs, int hidden_layers, int width,
                   std::uint64_t seed, std::uint64_t stream) {
  if (inputs < 1) throw shape_error("Critic: inputs must be positive");
  if (hidden_layers < 1)
    throw shape_error("Critic: at least one hidden layer");
  if (width < 1) throw shape_error("Critic: width must be positive");
  std::vector<int> dims(static_cast<std::size_t>(hidden_layers) + 2, width);
  dims.front() = inputs;
  dims.back() = 1;
  CounterRng rng(seed, stream);
  return ad::Mlp::make(dims, ad::Activation::kTanh, ad::Activation::kIdentity,
                       rng);
}

void check_rows(const ad::Mlp& critic, const ad::Tensor& real,
                const ad::Tensor& gen, const char* who) {
  if (critic.empty())
    throw shape_error(std::string(who) + ": undefined critic");
  if (critic.output_dim() != 1)
    throw shape_error(std::string(who) + ": critic must emit a scalar");
  if (!real.defined() || !gen.defined() || real.rows() != gen.rows() ||
      real.cols() != gen.cols())
    throw shape_error(std::string(who) + ": batches must share one shape");
  if (real.cols() != critic.input_dim())
    throw shape_error(std::string(who) +
                      ": rows do not match the critic input");
}

}  // namespace

Critic Critic::temporal(int dim, int steps, int hidden_layers,
                        int hidden_width, std::uint64_t seed) {
  if (dim < 1 || steps < 1)
    throw shape_error("Critic: dim and steps must be positive");
  const int inputs = steps * dim;
  const int width = hidden_width > 0 ? hidden_width : 4 * inputs;
  return {critic_net(inputs, hidden_layers, width, seed,
                     streams::kInit + 2)};
}

Critic Critic::marginal(int dim, int hidden_layers, int hidden_width,
                        std::uint64_t seed) {
  if (dim < 1) throw shape_error("Critic: dim must be positive");
  const int width = hidden_width > 0 ? hidden_width : 4 * dim;
  return {critic_net(1 + dim, hidden_layers, width, seed,
                     streams::kInit + 3)};
}

std::vector<double> flatten_sequences(const sde::PathBatch& b) {
  b.validate();
  std::vector<double> out(static_cast<std::size_t>(b.samples) * b.grid.steps *
                          b.dim);
  std::size_t at = 0;
  for (int s = 0; s < b.samples; ++s)
    for (int i = 1; i <= b.grid.steps; ++i)
      for (int j = 0; j < b.dim; ++j) out[at++] = b.at(s, i, j);
  return out;
}

ad::Tensor w1_dual_estimate(ad::Tape& tape, const ad::Mlp& critic,
                            const ad::Tensor& real_rows,
                            const ad::Tensor& gen_rows) {
  check_rows(critic, real_rows, gen_rows, "w1_dual_estimate");
  auto on_real = ad::mean(tape, critic.forward(tape, real_rows));
  auto on_gen = ad::mean(tape, critic.forward(tape, gen_rows));
  return ad::sub(tape, on_real, on_gen);
}

double w1_dual_estimate(const ad::Mlp& critic,
                        const std::vector<double>& real_rows,
                        const std::vector<double>& gen_rows, int m) {
  if (critic.empty() || critic.output_dim() != 1)
    throw shape_error("w1_dual_estimate: need a scalar critic");
  if (m < 1 ||
      real_rows.size() != static_cast<std::size_t>(m) * critic.input_dim() ||
      gen_rows.size() != real_rows.size())
    throw shape_error("w1_dual_estimate: batches must share one shape");
  const auto r = critic.forward_values_batch(real_rows, m);
  const auto g = critic.forward_values_batch(gen_rows, m);
  double acc = 0.0;
  for (int s = 0; s < m; ++s) acc += r[s] - g[s];
  return acc / m;
}

ad::Tensor gradient_penalty(ad::Tape& tape, const ad::Mlp& critic,
                            const ad::Tensor& real_rows,
                            const ad::Tensor& gen_rows, std::uint64_t seed) {
  check_rows(critic, real_rows, gen_rows, "gradient_penalty");
  const int m = real_rows.rows();
  const int n = real_rows.cols();
  const auto& x = real_rows.values();
  const auto& y = gen_rows.values();

  // the interpolates are probe points, not a gradient path: detached
  CounterRng rng(seed, 0);
  std::vector<double> mix(x.size());
  for (int s = 0; s < m; ++s) {
    const double u = rng.next_unit_open();
    for (int j = 0; j < n; ++j) {
      const std::size_t at = static_cast<std::size_t>(s) * n + j;
      mix[at] = u * x[at] + (1.0 - u) * y[at];
    }
  }

  auto probes = ad::Tensor::constant(m, n, std::move(mix));
  auto [value, grad] = ad::mlp_value_and_input_gradient(tape, critic, probes);
  (void)value;
  auto norm_sq = ad::rowsum(tape, ad::square(tape, grad));
  // cushion keeps the square root differentiable at zero gradient
  auto norm = ad::sqrt(
      tape, ad::add(tape, norm_sq, ad::Tensor::scalar(1e-12)));
  auto excess = ad::sub(tape, norm, ad::Tensor::scalar(1.0));
  return ad::mean(tape, ad::square(tape, excess));
}

}  // namespace ets::gan
