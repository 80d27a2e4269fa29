#pragma once
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ets/egen/generator.hpp"
#include "ets/gan/critic.hpp"
#include "ets/sde/pathbatch.hpp"

namespace ets::gan {

using DataSource =
    std::function<sde::PathBatch(int samples, std::uint64_t seed)>;

struct GanConfig {
  egen::GeneratorConfig gen;
  int iterations = 2000;  // generator steps
  int batch = 300;
  int n_critic = 5;       // critic steps per generator step
  double gp_coef = 10.0;  // gradient-penalty weight
  double lr_gen = 1e-3;
  double lr_critic = 1e-3;
  double lr_marginal = 1e-3;  // dual-critic trainer only
  int critic_hidden_layers = 3;
  int critic_width = 0;  // 0: 4 * inputs per critic flavour
  std::uint64_t seed = 0;

  // Called every monitor_every iterations (and on the last one) with the
  // iteration, the last critic objective, the generator loss, and the
  // generator under training.
  int monitor_every = 50;
  std::function<void(int, double, double, const egen::EulerGenerator&)>
      monitor;

  // Zero learning rates are allowed: a zero-rate Adam step must leave its
  // parameters bit-identical, which the tests use to pin the optimizer
  // plumbing and the generator/critic parameter split.
  void validate() const;
};

struct GanResult {
  egen::EulerGenerator gen;
  Critic temporal;
  Critic marginal;  // undefined for the single-critic trainer
  std::vector<double> critic_history;    // -dual + gp_coef * penalty
  std::vector<double> marginal_history;  // same objective, summed over dates
  std::vector<double> gen_history;       // the descended generator loss
};

// Alternating two-player loop: n_critic ascent steps on the dual estimate
// regularized by the gradient penalty, then one generator descent step on
// -E[critic(Y)] through the taped rollout.  Critic batches use untaped
// generation; non-finite losses abort with the iteration in the message.
GanResult train_ewgan(const DataSource& source, const GanConfig& cfg);

// Dual-critic variant: each critic iteration updates the temporal critic on
// flattened sequences, then the time-conditioned marginal critic once per
// date.  The generator descends the sum of both adversarial terms, the
// marginal one accumulated over dates.
GanResult train_edgan(const DataSource& source, const GanConfig& cfg);

// Container "ETSG": a generator checkpoint followed by the critic nets, so
// an adversarial run can resume with its critics instead of re-warming them.
inline constexpr std::uint32_t kGanCheckpointFormatVersion = 1;

struct GanCheckpoint {
  egen::Checkpoint base;
  Critic temporal;
  Critic marginal;  // undefined when the file holds one critic
};

void save_gan_checkpoint(const std::string& path,
                         const egen::EulerGenerator& gen,
                         const egen::TrainMeta& meta, const Critic& temporal,
                         const Critic* marginal = nullptr);
GanCheckpoint load_gan_checkpoint(const std::string& path, int expect_dim = 0);

}  // namespace ets::gan
