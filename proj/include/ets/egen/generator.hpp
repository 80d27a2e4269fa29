#pragma once
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ets/ad/mlp.hpp"
#include "ets/ad/tensor.hpp"
#include "ets/rng.hpp"
#include "ets/sde/pathbatch.hpp"
#include "ets/sde/timegrid.hpp"

namespace ets::egen {

// Shape and initialization choices for the two scheme networks.
struct GeneratorConfig {
  int dim = 1;
  sde::TimeGrid grid{};
  std::vector<double> x0;  // d entries; empty means 0.2 everywhere
  int hidden_layers = 3;
  int hidden_width = 0;  // 0 means 4 * dim
  ad::Activation activation = ad::Activation::kTanh;

  int width() const { return hidden_width > 0 ? hidden_width : 4 * dim; }
  std::vector<double> start() const;
  void validate() const;
};

// Explicit Euler scheme with learned coefficients,
//
//   Y_{i+1} = Y_i + b(t_i/T, Y_i) dt + V(t_i/T, Y_i) w_i,
//
// where w_i ~ N(0, dt I_d) and V is a full row-major d x d matrix emitted by
// the volatility net (width d^2).  Both nets take the date normalized by the
// grid maturity plus the current state, so generation stays Markovian.
class EulerGenerator {
 public:
  EulerGenerator() = default;

  static EulerGenerator make(const GeneratorConfig& cfg, std::uint64_t seed);

  // Wrap externally built nets; shapes are checked against the config.
  static EulerGenerator from_nets(const GeneratorConfig& cfg, ad::Mlp drift,
                                  ad::Mlp vol);

  const GeneratorConfig& config() const { return cfg_; }
  int dim() const { return cfg_.dim; }
  const sde::TimeGrid& grid() const { return cfg_.grid; }

  ad::Mlp& drift() { return drift_; }
  const ad::Mlp& drift() const { return drift_; }
  ad::Mlp& vol() { return vol_; }
  const ad::Mlp& vol() const { return vol_; }

  // All trainable leaves, drift parameters first.
  std::vector<ad::Tensor> params();

  // Untaped generation.  Sample s draws from stream (seed, kSample + s), per
  // date `dim` standard normals scaled by sqrt(dt), exactly the discipline
  // of the closed-form simulators, so batch prefixes do not depend on the
  // total sample count.
  sde::PathBatch generate(int samples, std::uint64_t seed) const;

  // Tape-recorded rollout for training: states at dates 0..steps, each an
  // m x d tensor (date 0 is the constant start value).  Noise is drawn from
  // `rng` dates-outer, samples-inner, dimension innermost.
  std::vector<ad::Tensor> rollout(ad::Tape& tape, int samples,
                                  CounterRng& rng) const;

  // Deep value copy with fresh parameter leaves.
  EulerGenerator clone() const;

 private:
  GeneratorConfig cfg_;
  ad::Mlp drift_, vol_;
};

// Scalar lognormal fit: r as the mean of b(t, y)/y over generated states,
// sigma as the mean of |V(t, y)/y| (the scheme cannot see the sign of V).
struct BsFit {
  double r = 0.0;
  double sigma = 0.0;
};

// Mean-reverting fit via least squares b ~ alpha + beta * y over generated
// states: theta = -beta, mu = alpha/theta, sigma the mean absolute
// volatility.  mu_defined is false when |theta| < 1e-6.
struct OuFit {
  double theta = 0.0;
  double mu = 0.0;
  double sigma = 0.0;
  bool mu_defined = false;
};

// Both extractors generate `samples` paths internally and evaluate the nets
// on every (date, state) pair feeding a transition (dates 0..steps-1), with
// the same t/T normalization used during generation.
BsFit extract_bs_params(const EulerGenerator& gen, int samples,
                        std::uint64_t seed);
OuFit extract_ou_params(const EulerGenerator& gen, int samples,
                        std::uint64_t seed);

// Training provenance carried inside a checkpoint.
struct TrainMeta {
  std::int64_t iterations = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::vector<double> loss_curve;
};

struct Checkpoint {
  EulerGenerator gen;
  TrainMeta meta;
};

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

// Binary container: magic "ETSC", u32 version, generator config (dim, grid,
// x0, net shape), training metadata, then the parameter container holding
// both nets' tensors.  Doubles round-trip bit-exactly, so a reloaded
// generator reproduces generation bit-for-bit.
void save_checkpoint(const std::string& path, const EulerGenerator& gen,
                     const TrainMeta& meta = {});

// expect_dim > 0 asserts the stored dimension (a d=4 checkpoint loaded into
// a d=10 experiment is a distinct error from corruption).
Checkpoint load_checkpoint(const std::string& path, int expect_dim = 0);

// Stream forms, for embedding a generator checkpoint inside a larger
// container.  Exactly the file bytes; the stream is left positioned right
// after them.  The writer does not test the stream; callers check.
void save_checkpoint(std::ostream& os, const EulerGenerator& gen,
                     const TrainMeta& meta = {});
Checkpoint load_checkpoint(std::istream& is, int expect_dim = 0);

}  // namespace ets::egen
