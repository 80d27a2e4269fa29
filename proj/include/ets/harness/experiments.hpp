#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "ets/egen/generator.hpp"
#include "ets/errors.hpp"
#include "ets/harness/config.hpp"
#include "ets/harness/dataset.hpp"
#include "ets/metrics/path_metrics.hpp"
#include "ets/sde/pathbatch.hpp"
#include "ets/sde/timegrid.hpp"

namespace ets::harness {

// Trainable model names plus the "bootstrap" pseudo-model, which resamples
// the reference data instead of training (the sanity floor every metric
// should be near zero against).
bool known_model(const std::string& name);
bool known_metric(const std::string& name);

struct ExperimentSpec {
  enum class Kind { kExpA, kExpB, kExpC, kExpD, kCustom };
  Kind kind = Kind::kExpA;

  std::vector<std::string> models{"cegen"};
  std::vector<std::string> metrics;  // empty means all applicable
  std::vector<std::uint64_t> seeds{0, 1, 2};

  // synthetic reference process (kExpA/kExpB/kExpC)
  std::string process = "ou";  // "ou" | "bs"
  int dim = 1;
  double rho = 0.5;  // off-diagonal correlation of the multivariate case
  sde::TimeGrid grid{0.0, 0.25, 29};  // 30 dates across the span

  // training budget, shared by every model
  int iterations = 5000;
  int batch = 300;
  double lr = 1e-3;
  int k_cells = 10;      // conditional-loss subdivisions
  int n_critic = 5;      // adversarial critic steps per generator step
  double gp_coef = 10.0;

  // evaluation
  int eval_samples = 4096;
  int score_iterations = 500;
  int score_repeats = 10;
  int min_score_samples = 20;  // below this the scores are omitted

  // transfer workflow (kExpC)
  int transfer_iteration = 1000;
  int target_sequences = 60;
  int trajectory_every = 50;

  // real-data workflow (kExpD)
  DatasetSpec data;

  std::string out_dir = "out";

  static ExperimentSpec from_config(const Config& cfg, Kind kind);
  void validate() const;
};

// Per-date batch statistics, one value per date and dimension (date-major).
struct EnvelopeCurves {
  int dates = 0, dim = 0;
  std::vector<double> avg, q05, q95, lo, hi;
};
EnvelopeCurves envelope_curves(const sde::PathBatch& batch);

// One trained (or resampled) model on one seed.
struct ModelRun {
  std::string model;
  std::uint64_t seed = 0;
  metrics::MetricReport metric;
  bool has_scores = false;
  double disc = 0.0, pred = 0.0;
  bool has_ou = false;
  egen::OuFit ou;
  bool has_bs = false;
  egen::BsFit bs;
  std::vector<double> loss_history;      // generator loss per iteration
  std::vector<double> critic_history;    // adversarial runs only
  std::vector<double> marginal_history;  // dual-critic runs only
  EnvelopeCurves envelope;               // of the evaluation batch
};

// Coefficient estimates logged during training (transfer workflow).
struct ParamTrajectory {
  std::string label;
  std::uint64_t seed = 0;
  std::vector<int> iters;
  std::vector<egen::OuFit> fits;
};

struct RunReport {
  std::string kind;  // "exp_a" | "exp_b" | "exp_c" | "exp_d"
  std::uint64_t config_hash = 0;
  std::string config_text;  // the exact configuration, defaults materialized
  std::vector<std::uint64_t> seeds;
  sde::TimeGrid grid{};  // grid the runs were evaluated on
  std::vector<ModelRun> runs;  // model-major, seed-minor
  EnvelopeCurves reference_envelope;
  std::vector<ParamTrajectory> trajectories;
  std::vector<std::string> deviations;  // always present in emitted reports
  std::vector<std::string> notes;
  double wall_seconds = 0.0;
};

// One-dimensional synthetic processes: trains the requested models against
// a Monte Carlo reference and reports metrics plus extracted coefficients.
// An empty model list evaluates the reference against an independent draw
// of itself, giving the near-zero noise floor of every metric.
RunReport run_experiment_a(const ExperimentSpec& spec);

// Correlated multivariate lognormal reference (dim >= 2): same flow, the
// correlation MSE is the headline number.  Coefficients are not extracted
// (the extractors are scalar).
RunReport run_experiment_b(const ExperimentSpec& spec);

// Sparse-data transfer: a conditional generator pre-trained on a
// misspecified mean-reverting simulator, then fine-tuned on a pool of only
// target_sequences real sequences, against one trained on the pool alone.
// Both log coefficient estimates every trajectory_every iterations.
RunReport run_transfer(const ExperimentSpec& spec);

// CSV-backed training: windows from load_csv_dataset feed the trainers;
// reports distribution metrics plus discriminative and predictive scores
// (omitted with a note when the pool is smaller than min_score_samples).
RunReport run_experiment_d(const ExperimentSpec& spec);

// Dispatch on spec.kind (kCustom is rejected; drive the library directly).
RunReport run_experiment(const ExperimentSpec& spec);

// Writes report.txt, config_used.txt, metrics.csv, and per-run plot-ready
// series (loss curves, envelope curves, parameter trajectories) into
// out_dir.  Serialization is deterministic: emitting the same report twice
// produces byte-identical files.  An unwritable destination rejects before
// anything is written.
void emit_report(const RunReport& report, const std::string& out_dir);

}  // namespace ets::harness
