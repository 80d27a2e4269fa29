#include "ets/harness/experiments.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "ets/cegen/train.hpp"
#include "ets/gan/train.hpp"
#include "ets/metrics/scores.hpp"
#include "ets/rng.hpp"
#include "ets/sde/sdesim.hpp"

namespace ets::harness {

namespace {

using Source = std::function<sde::PathBatch(int, std::uint64_t)>;

// fixed offsets inside the scoring stream, so every consumer of a run seed
// draws from its own key
constexpr std::uint64_t kEvalReal = 101;
constexpr std::uint64_t kEvalGen = 202;
constexpr std::uint64_t kBootstrap = 303;
constexpr std::uint64_t kScoreNet = 404;
constexpr std::uint64_t kExtract = 505;
constexpr std::uint64_t kTrajBase = 1000003;
constexpr std::uint64_t kPool = std::uint64_t{1} << 20;

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t which) {
  return CounterRng::derive_key(seed, streams::kScore + which);
}

sde::PathBatch resample(const sde::PathBatch& pool, int samples,
                        std::uint64_t seed) {
  auto out = sde::PathBatch::zeros(pool.grid, samples, pool.dim);
  const std::size_t row =
      static_cast<std::size_t>(pool.grid.dates()) * pool.dim;
  CounterRng rng(seed, 0);
  for (int s = 0; s < samples; ++s) {
    const int at = rng.next_index(pool.samples);
    std::copy_n(pool.values.begin() + at * row, row,
                out.values.begin() + s * row);
  }
  return out;
}

std::vector<double> flat_corr(int dim, double rho) {
  std::vector<double> corr(static_cast<std::size_t>(dim) * dim, rho);
  for (int j = 0; j < dim; ++j)
    corr[static_cast<std::size_t>(j) * dim + j] = 1.0;
  return corr;
}

const char* kind_name(ExperimentSpec::Kind kind) {
  switch (kind) {
    case ExperimentSpec::Kind::kExpA: return "exp_a";
    case ExperimentSpec::Kind::kExpB: return "exp_b";
    case ExperimentSpec::Kind::kExpC: return "exp_c";
    case ExperimentSpec::Kind::kExpD: return "exp_d";
    case ExperimentSpec::Kind::kCustom: break;
  }
  return "custom";
}

std::vector<std::string> standard_deviations(ExperimentSpec::Kind kind) {
  std::vector<std::string> d{
      "discriminative and predictive scores train a single-layer Elman cell "
      "with a linear input skip, not a 2-layer LSTM",
      "reference statistics come from seeded Monte Carlo draws, not stored "
      "datasets"};
  if (kind == ExperimentSpec::Kind::kExpC) {
    d.push_back(
        "the sparse target pool is simulated as independent sequences "
        "rather than windows of one long history");
    d.push_back("optimizer moments reset at the transfer iteration");
  }
  if (kind == ExperimentSpec::Kind::kExpD)
    d.push_back("training windows are resampled with replacement each "
                "iteration");
  return d;
}

void add_note(std::vector<std::string>& notes, const std::string& text) {
  if (std::find(notes.begin(), notes.end(), text) == notes.end())
    notes.push_back(text);
}

egen::GeneratorConfig generator_config(const sde::TimeGrid& grid, int dim,
                                       double start) {
  egen::GeneratorConfig g;
  g.dim = dim;
  g.grid = grid;
  if (start != 0.2) g.x0.assign(dim, start);
  return g;
}

struct TrainOutput {
  egen::EulerGenerator gen;
  std::vector<double> loss, critic, marginal;
};

// Trains one model against `src`.  `probe`, when set, sees the generator
// every trajectory_every iterations (conditional trainer only; the transfer
// workflow is the sole user).
TrainOutput train_model(const ExperimentSpec& spec, const std::string& model,
                        std::uint64_t seed, const egen::GeneratorConfig& g,
                        const Source& src, int iterations,
                        const egen::EulerGenerator* warm,
                        const std::function<void(int, const egen::EulerGenerator&)>&
                            probe = {}) {
  TrainOutput out;
  if (model == "cegen") {
    cegen::TrainConfig c;
    c.gen = g;
    c.iterations = iterations;
    c.batch = spec.batch;
    c.lr = spec.lr;
    c.partition.k = spec.k_cells;
    c.seed = seed;
    c.init = warm;
    if (probe) {
      c.monitor_every = spec.trajectory_every;
      c.monitor = [&](int iter, double, const egen::EulerGenerator& gen) {
        probe(iter, gen);
      };
    }
    auto r = cegen::train_cegen(src, c);
    out.gen = std::move(r.gen);
    out.loss = std::move(r.loss_history);
    return out;
  }
  gan::GanConfig c;
  c.gen = g;
  c.iterations = iterations;
  c.batch = spec.batch;
  c.n_critic = spec.n_critic;
  c.gp_coef = spec.gp_coef;
  c.lr_gen = c.lr_critic = c.lr_marginal = spec.lr;
  c.seed = seed;
  auto r = model == "ewgan" ? gan::train_ewgan(src, c)
                            : gan::train_edgan(src, c);
  out.gen = std::move(r.gen);
  out.loss = std::move(r.gen_history);
  out.critic = std::move(r.critic_history);
  out.marginal = std::move(r.marginal_history);
  return out;
}

// Everything after training: metrics, envelope, extraction, scores.
ModelRun evaluate_run(const ExperimentSpec& spec, const std::string& model,
                      std::uint64_t seed, const sde::PathBatch& eval_real,
                      const sde::PathBatch& gen_eval,
                      const egen::EulerGenerator* gen, bool with_scores,
                      std::vector<std::string>& notes) {
  ModelRun run;
  run.model = model;
  run.seed = seed;
  run.metric = metrics::evaluate_batches(eval_real, gen_eval);
  run.envelope = envelope_curves(gen_eval);

  if (gen && gen->dim() == 1 &&
      spec.kind != ExperimentSpec::Kind::kExpD) {
    if (spec.process == "ou") {
      run.ou = egen::extract_ou_params(*gen, spec.eval_samples,
                                       sub_seed(seed, kExtract));
      run.has_ou = true;
    } else {
      run.bs = egen::extract_bs_params(*gen, spec.eval_samples,
                                       sub_seed(seed, kExtract));
      run.has_bs = true;
    }
  }

  if (with_scores) {
    if (eval_real.samples < spec.min_score_samples) {
      add_note(notes, "scores omitted: " + std::to_string(eval_real.samples) +
                          " sequences, fewer than the minimum " +
                          std::to_string(spec.min_score_samples));
    } else {
      metrics::ScoreConfig sc;
      sc.iterations = spec.score_iterations;
      sc.repeats = spec.score_repeats;
      sc.batch = std::min(sc.batch, eval_real.samples);
      run.disc = metrics::discriminative_score(eval_real, gen_eval,
                                               sub_seed(seed, kScoreNet), sc);
      run.pred = metrics::predictive_score(eval_real, gen_eval,
                                           sub_seed(seed, kScoreNet), sc);
      run.has_scores = true;
    }
  }
  return run;
}

[[noreturn]] void rethrow_with_context(const std::string& kind,
                                       const std::string& model,
                                       std::uint64_t seed) {
  const std::string at =
      kind + ": model " + model + " seed " + std::to_string(seed) + ": ";
  try {
    throw;
  } catch (const train_error& e) {
    throw train_error(at + e.what());
  } catch (const data_error& e) {
    throw data_error(at + e.what());
  }
}

// Shared noise floor: with no models requested, compare the reference
// against an independent draw of itself.
void reference_runs(const ExperimentSpec& spec, const Source& src,
                    RunReport& rep) {
  for (const auto seed : spec.seeds) {
    const auto real = src(spec.eval_samples, sub_seed(seed, kEvalReal));
    const auto again = src(spec.eval_samples, sub_seed(seed, kEvalGen));
    rep.runs.push_back(evaluate_run(spec, "reference", seed, real, again,
                                    nullptr, false, rep.notes));
  }
}

// The synthetic experiments share one spine; only the reference process and
// a couple of switches differ.
RunReport run_synthetic(const ExperimentSpec& spec, const Source& src) {
  const auto t0 = std::chrono::steady_clock::now();
  RunReport rep;
  rep.kind = kind_name(spec.kind);
  rep.seeds = spec.seeds;
  rep.grid = spec.grid;
  rep.deviations = standard_deviations(spec.kind);

  const auto g = generator_config(spec.grid, spec.dim, 0.2);
  if (spec.models.empty()) {
    reference_runs(spec, src, rep);
  } else {
    for (const auto& model : spec.models) {
      for (const auto seed : spec.seeds) {
        const auto eval_real = src(spec.eval_samples, sub_seed(seed, kEvalReal));
        try {
          if (model == "bootstrap") {
            const auto gen_eval =
                resample(eval_real, spec.eval_samples, sub_seed(seed, kBootstrap));
            rep.runs.push_back(evaluate_run(spec, model, seed, eval_real,
                                            gen_eval, nullptr, false,
                                            rep.notes));
            continue;
          }
          auto trained = train_model(spec, model, seed, g, src,
                                     spec.iterations, nullptr);
          const auto gen_eval =
              trained.gen.generate(spec.eval_samples, sub_seed(seed, kEvalGen));
          auto run = evaluate_run(spec, model, seed, eval_real, gen_eval,
                                  &trained.gen, false, rep.notes);
          run.loss_history = std::move(trained.loss);
          run.critic_history = std::move(trained.critic);
          run.marginal_history = std::move(trained.marginal);
          rep.runs.push_back(std::move(run));
        } catch (const shape_error&) {
          throw;
        } catch (...) {
          rethrow_with_context(rep.kind, model, seed);
        }
      }
    }
  }
  rep.reference_envelope =
      envelope_curves(src(spec.eval_samples, sub_seed(spec.seeds[0], kEvalReal)));
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return rep;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string sanitize(const std::string& name) {
  std::string out = name;
  for (auto& c : out)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_')
      c = '_';
  return out;
}

std::string metrics_table(const RunReport& rep) {
  std::ostringstream os;
  os << "model,seed,fid,qvar,corr,envelope,disc,pred,ou_theta,ou_mu,"
        "ou_sigma,bs_r,bs_sigma\n";
  for (const auto& run : rep.runs) {
    os << run.model << ',' << run.seed << ',' << fmt(run.metric.fid) << ','
       << fmt(run.metric.qvar) << ',' << fmt(run.metric.corr) << ','
       << fmt(run.metric.envelope) << ',';
    if (run.has_scores) os << fmt(run.disc) << ',' << fmt(run.pred);
    else os << ',';
    os << ',';
    if (run.has_ou) {
      os << fmt(run.ou.theta) << ',';
      if (run.ou.mu_defined) os << fmt(run.ou.mu);
      os << ',' << fmt(run.ou.sigma);
    } else {
      os << ",,";
    }
    os << ',';
    if (run.has_bs) os << fmt(run.bs.r) << ',' << fmt(run.bs.sigma);
    else os << ',';
    os << '\n';
  }
  return os.str();
}

std::string envelope_csv(const EnvelopeCurves& env, const sde::TimeGrid& grid) {
  std::ostringstream os;
  os << "date,time,dim,avg,q05,q95,min,max\n";
  for (int i = 0; i < env.dates; ++i) {
    for (int j = 0; j < env.dim; ++j) {
      const std::size_t at = static_cast<std::size_t>(i) * env.dim + j;
      os << i << ',' << fmt(grid.time(i)) << ',' << j << ','
         << fmt(env.avg[at]) << ',' << fmt(env.q05[at]) << ','
         << fmt(env.q95[at]) << ',' << fmt(env.lo[at]) << ','
         << fmt(env.hi[at]) << '\n';
    }
  }
  return os.str();
}

std::string loss_csv(const ModelRun& run) {
  std::ostringstream os;
  const bool adversarial = !run.critic_history.empty();
  const bool dual = !run.marginal_history.empty();
  os << "iteration,loss";
  if (adversarial) os << ",critic";
  if (dual) os << ",marginal";
  os << '\n';
  for (std::size_t i = 0; i < run.loss_history.size(); ++i) {
    os << i << ',' << fmt(run.loss_history[i]);
    if (adversarial) os << ',' << fmt(run.critic_history[i]);
    if (dual) os << ',' << fmt(run.marginal_history[i]);
    os << '\n';
  }
  return os.str();
}

std::string trajectory_csv(const ParamTrajectory& traj) {
  std::ostringstream os;
  os << "iteration,theta,mu,sigma\n";
  for (std::size_t i = 0; i < traj.iters.size(); ++i) {
    os << traj.iters[i] << ',' << fmt(traj.fits[i].theta) << ',';
    if (traj.fits[i].mu_defined) os << fmt(traj.fits[i].mu);
    os << ',' << fmt(traj.fits[i].sigma) << '\n';
  }
  return os.str();
}

}  // namespace

bool known_model(const std::string& name) {
  return name == "cegen" || name == "ewgan" || name == "edgan" ||
         name == "bootstrap";
}

bool known_metric(const std::string& name) {
  return name == "fid" || name == "qvar" || name == "corr" ||
         name == "envelope" || name == "disc" || name == "pred";
}

void ExperimentSpec::validate() const {
  grid.validate();
  for (const auto& m : models)
    if (!known_model(m))
      throw shape_error("ExperimentSpec: unknown model '" + m + "'");
  for (const auto& m : metrics)
    if (!known_metric(m))
      throw shape_error("ExperimentSpec: unknown metric '" + m + "'");
  if (seeds.empty()) throw shape_error("ExperimentSpec: at least one seed");
  if (process != "ou" && process != "bs")
    throw shape_error("ExperimentSpec: unknown process '" + process + "'");
  if (dim < 1) throw shape_error("ExperimentSpec: dim must be >= 1");
  if (iterations < 0) throw shape_error("ExperimentSpec: negative iterations");
  if (batch < 2) throw shape_error("ExperimentSpec: batch must be >= 2");
  if (!(lr > 0)) throw shape_error("ExperimentSpec: learning rate must be > 0");
  if (k_cells < 1) throw shape_error("ExperimentSpec: k_cells must be >= 1");
  if (n_critic < 1) throw shape_error("ExperimentSpec: n_critic must be >= 1");
  if (gp_coef < 0) throw shape_error("ExperimentSpec: negative gp_coef");
  if (eval_samples < 2)
    throw shape_error("ExperimentSpec: eval_samples must be >= 2");
  if (kind == Kind::kExpB) {
    if (dim < 2)
      throw shape_error(
          "ExperimentSpec: correlation is undefined in one dimension");
    if (!(std::fabs(rho) < 1))
      throw shape_error("ExperimentSpec: |rho| must be < 1");
  }
  if (kind == Kind::kExpC) {
    if (transfer_iteration < 0 || transfer_iteration > iterations)
      throw shape_error(
          "ExperimentSpec: transfer_iteration must lie in [0, iterations]");
    if (target_sequences < 2)
      throw shape_error("ExperimentSpec: target_sequences must be >= 2");
    if (trajectory_every < 1)
      throw shape_error("ExperimentSpec: trajectory_every must be >= 1");
  }
  if (kind == Kind::kExpD && data.path.empty())
    throw shape_error("ExperimentSpec: a CSV path is required");
}

ExperimentSpec ExperimentSpec::from_config(const Config& cfg, Kind kind) {
  ExperimentSpec s;
  s.kind = kind;
  const bool exp_b = kind == Kind::kExpB;
  const char* models_default = kind == Kind::kExpC ? ""
                               : kind == Kind::kExpD ? "cegen,bootstrap"
                                                     : "cegen";
  s.models = cfg.get_list("experiment", "models", models_default);
  s.metrics = cfg.get_list("experiment", "metrics", "");
  s.seeds = cfg.get_u64_list("experiment", "seeds", "0,1,2");
  s.process = cfg.get_str("experiment", "process", exp_b ? "bs" : "ou");
  s.dim = static_cast<int>(cfg.get_int("experiment", "dim", exp_b ? 4 : 1));
  if (exp_b) s.rho = cfg.get_double("experiment", "rho", 0.5);
  s.grid.t0 = cfg.get_double("grid", "t0", 0.0);
  s.grid.maturity = cfg.get_double("grid", "maturity", 0.25);
  s.grid.steps = static_cast<int>(cfg.get_int("grid", "steps", 29));
  s.iterations = static_cast<int>(cfg.get_int("train", "iterations", 5000));
  s.batch = static_cast<int>(cfg.get_int("train", "batch", 300));
  s.lr = cfg.get_double("train", "lr", 1e-3);
  s.k_cells = static_cast<int>(cfg.get_int("train", "k", 10));
  s.n_critic = static_cast<int>(cfg.get_int("train", "n_critic", 5));
  s.gp_coef = cfg.get_double("train", "gp_coef", 10.0);
  s.eval_samples = static_cast<int>(cfg.get_int("eval", "samples", 4096));
  s.score_iterations =
      static_cast<int>(cfg.get_int("eval", "score_iterations", 500));
  s.score_repeats = static_cast<int>(cfg.get_int("eval", "score_repeats", 10));
  s.min_score_samples =
      static_cast<int>(cfg.get_int("eval", "min_score_samples", 20));
  if (kind == Kind::kExpC) {
    s.transfer_iteration =
        static_cast<int>(cfg.get_int("transfer", "iteration", 1000));
    s.target_sequences =
        static_cast<int>(cfg.get_int("transfer", "sequences", 60));
    s.trajectory_every = static_cast<int>(cfg.get_int("transfer", "every", 50));
  }
  if (kind == Kind::kExpD) {
    s.data.path = cfg.get_str("data", "path", "");
    s.data.columns = cfg.get_list("data", "columns", "");
    s.data.window = static_cast<int>(cfg.get_int("data", "window", 30));
    s.data.stride = static_cast<int>(cfg.get_int("data", "stride", 1));
    s.data.start_value = cfg.get_double("data", "start_value", 0.2);
    s.data.maturity = cfg.get_double("data", "maturity", 0.25);
  }
  s.out_dir = cfg.get_str("output", "dir", "out");
  return s;
}

EnvelopeCurves envelope_curves(const sde::PathBatch& batch) {
  EnvelopeCurves env;
  env.dates = batch.grid.dates();
  env.dim = batch.dim;
  const std::size_t cells = static_cast<std::size_t>(env.dates) * env.dim;
  env.avg.assign(cells, 0.0);
  env.q05.assign(cells, 0.0);
  env.q95.assign(cells, 0.0);
  env.lo.assign(cells, 0.0);
  env.hi.assign(cells, 0.0);
  std::vector<double> column(batch.samples);
  for (int i = 0; i < env.dates; ++i) {
    for (int j = 0; j < env.dim; ++j) {
      for (int s = 0; s < batch.samples; ++s) column[s] = batch.at(s, i, j);
      std::sort(column.begin(), column.end());
      const std::size_t at = static_cast<std::size_t>(i) * env.dim + j;
      double acc = 0.0;
      for (double v : column) acc += v;
      env.avg[at] = acc / batch.samples;
      env.q05[at] = metrics::quantile_sorted(column, 0.05);
      env.q95[at] = metrics::quantile_sorted(column, 0.95);
      env.lo[at] = column.front();
      env.hi[at] = column.back();
    }
  }
  return env;
}

RunReport run_experiment_a(const ExperimentSpec& spec) {
  spec.validate();
  if (spec.dim != 1)
    throw shape_error("run_experiment_a: one-dimensional references only");
  const auto grid = spec.grid;
  Source src;
  if (spec.process == "ou") {
    src = [grid](int m, std::uint64_t s) {
      return sde::simulate_ou(sde::OuParams{}, grid, m, s);
    };
  } else {
    src = [grid](int m, std::uint64_t s) {
      return sde::simulate_bs(sde::BsParams{}, grid, m, s);
    };
  }
  return run_synthetic(spec, src);
}

RunReport run_experiment_b(const ExperimentSpec& spec) {
  spec.validate();
  if (spec.kind != ExperimentSpec::Kind::kExpB)
    throw shape_error("run_experiment_b: spec kind mismatch");
  sde::BsParams p;
  p.dim = spec.dim;
  p.corr = flat_corr(spec.dim, spec.rho);
  p.validate();
  const auto grid = spec.grid;
  Source src = [p, grid](int m, std::uint64_t s) {
    return sde::simulate_bs(p, grid, m, s);
  };
  return run_synthetic(spec, src);
}

RunReport run_transfer(const ExperimentSpec& spec) {
  spec.validate();
  const auto t0 = std::chrono::steady_clock::now();

  // the reference model and its misspecified stand-in
  sde::OuParams target;
  target.theta = 2.0;
  target.mu = 0.6;
  target.sigma = 0.15;
  sde::OuParams wrong;
  wrong.theta = 3.0;
  wrong.mu = 0.8;
  wrong.sigma = 0.1;

  RunReport rep;
  rep.kind = kind_name(ExperimentSpec::Kind::kExpC);
  rep.seeds = spec.seeds;
  rep.grid = spec.grid;
  rep.deviations = standard_deviations(ExperimentSpec::Kind::kExpC);

  const auto grid = spec.grid;
  const auto g = generator_config(grid, 1, 0.2);
  Source mc_src = [wrong, grid](int m, std::uint64_t s) {
    return sde::simulate_ou(wrong, grid, m, s);
  };

  for (const auto seed : spec.seeds) {
    // all the target model offers: a small fixed pool of real sequences
    const auto pool = sde::simulate_ou(
        target, grid, spec.target_sequences,
        CounterRng::derive_key(seed, streams::kData + kPool));
    Source pool_src = [&pool](int m, std::uint64_t s) {
      return resample(pool, m, s);
    };

    const auto eval_real =
        sde::simulate_ou(target, grid, spec.eval_samples,
                         sub_seed(seed, kEvalReal));

    auto log_into = [&](ParamTrajectory& traj, int offset) {
      return [&traj, offset, &spec, seed](int iter,
                                          const egen::EulerGenerator& gen) {
        traj.iters.push_back(offset + iter);
        traj.fits.push_back(egen::extract_ou_params(
            gen, spec.eval_samples,
            sub_seed(seed, kTrajBase + static_cast<std::uint64_t>(offset) +
                               static_cast<std::uint64_t>(iter))));
      };
    };

    try {
      // run 1: misspecified Monte Carlo until the transfer, then the pool
      ParamTrajectory with;
      with.label = "cegen-transfer";
      with.seed = seed;
      auto phase1 = train_model(spec, "cegen", seed, g, mc_src,
                                spec.transfer_iteration, nullptr,
                                log_into(with, 0));
      auto phase2 = train_model(spec, "cegen", seed, g, pool_src,
                                spec.iterations - spec.transfer_iteration,
                                &phase1.gen,
                                log_into(with, spec.transfer_iteration));
      auto gen_eval =
          phase2.gen.generate(spec.eval_samples, sub_seed(seed, kEvalGen));
      auto run = evaluate_run(spec, "cegen-transfer", seed, eval_real,
                              gen_eval, &phase2.gen, false, rep.notes);
      run.loss_history = std::move(phase1.loss);
      run.loss_history.insert(run.loss_history.end(), phase2.loss.begin(),
                              phase2.loss.end());
      rep.runs.push_back(std::move(run));
      rep.trajectories.push_back(std::move(with));

      // run 2: the pool alone, full budget
      ParamTrajectory alone;
      alone.label = "cegen-direct";
      alone.seed = seed;
      auto direct = train_model(spec, "cegen", seed, g, pool_src,
                                spec.iterations, nullptr, log_into(alone, 0));
      auto direct_eval =
          direct.gen.generate(spec.eval_samples, sub_seed(seed, kEvalGen));
      auto drun = evaluate_run(spec, "cegen-direct", seed, eval_real,
                               direct_eval, &direct.gen, false, rep.notes);
      drun.loss_history = std::move(direct.loss);
      rep.runs.push_back(std::move(drun));
      rep.trajectories.push_back(std::move(alone));
    } catch (const shape_error&) {
      throw;
    } catch (...) {
      rethrow_with_context(rep.kind, "cegen", seed);
    }
  }

  rep.reference_envelope = envelope_curves(sde::simulate_ou(
      target, grid, spec.eval_samples, sub_seed(spec.seeds[0], kEvalReal)));
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return rep;
}

RunReport run_experiment_d(const ExperimentSpec& spec) {
  spec.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto loaded = load_csv_dataset(spec.data);
  const auto& pool = loaded.batch;

  RunReport rep;
  rep.kind = kind_name(ExperimentSpec::Kind::kExpD);
  rep.seeds = spec.seeds;
  rep.grid = pool.grid;
  rep.deviations = standard_deviations(ExperimentSpec::Kind::kExpD);
  if (loaded.windows_dropped > 0)
    add_note(rep.notes, std::to_string(loaded.windows_dropped) +
                            " windows dropped for missing values");
  for (int j = 0; j < pool.dim; ++j)
    if (loaded.degenerate[j])
      add_note(rep.notes, "column '" + loaded.columns[j] +
                              "' is constant and was pinned to the start "
                              "value");

  const auto g =
      generator_config(pool.grid, pool.dim, spec.data.start_value);
  Source pool_src = [&pool](int m, std::uint64_t s) {
    return resample(pool, m, s);
  };

  if (spec.models.empty()) {
    for (const auto seed : spec.seeds) {
      const auto again =
          resample(pool, spec.eval_samples, sub_seed(seed, kEvalGen));
      rep.runs.push_back(evaluate_run(spec, "reference", seed, pool, again,
                                      nullptr, true, rep.notes));
    }
  } else {
    for (const auto& model : spec.models) {
      for (const auto seed : spec.seeds) {
        try {
          if (model == "bootstrap") {
            const auto gen_eval =
                resample(pool, spec.eval_samples, sub_seed(seed, kBootstrap));
            rep.runs.push_back(evaluate_run(spec, model, seed, pool, gen_eval,
                                            nullptr, true, rep.notes));
            continue;
          }
          auto trained =
              train_model(spec, model, seed, g, pool_src, spec.iterations,
                          nullptr);
          const auto gen_eval =
              trained.gen.generate(spec.eval_samples, sub_seed(seed, kEvalGen));
          auto run = evaluate_run(spec, model, seed, pool, gen_eval,
                                  &trained.gen, true, rep.notes);
          run.loss_history = std::move(trained.loss);
          run.critic_history = std::move(trained.critic);
          run.marginal_history = std::move(trained.marginal);
          rep.runs.push_back(std::move(run));
        } catch (const shape_error&) {
          throw;
        } catch (...) {
          rethrow_with_context(rep.kind, model, seed);
        }
      }
    }
  }
  rep.reference_envelope = envelope_curves(pool);
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return rep;
}

RunReport run_experiment(const ExperimentSpec& spec) {
  switch (spec.kind) {
    case ExperimentSpec::Kind::kExpA: return run_experiment_a(spec);
    case ExperimentSpec::Kind::kExpB: return run_experiment_b(spec);
    case ExperimentSpec::Kind::kExpC: return run_transfer(spec);
    case ExperimentSpec::Kind::kExpD: return run_experiment_d(spec);
    case ExperimentSpec::Kind::kCustom: break;
  }
  throw usage_error("run_experiment: custom specs run through the library");
}

void emit_report(const RunReport& rep, const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (out_dir.empty())
    throw usage_error("emit_report: empty output directory");

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  {
    // reject unwritable destinations before emitting anything
    const auto probe = fs::path(out_dir) / ".write_probe";
    std::ofstream p(probe);
    if (!p)
      throw data_error("emit_report: cannot write to '" + out_dir + "'");
    p.close();
    fs::remove(probe, ec);
  }

  std::vector<std::pair<std::string, std::string>> files;

  {
    std::ostringstream os;
    char hash[24];
    std::snprintf(hash, sizeof hash, "%016llx",
                  static_cast<unsigned long long>(rep.config_hash));
    os << "experiment: " << rep.kind << '\n';
    os << "config hash: " << hash << '\n';
    os << "seeds:";
    for (const auto s : rep.seeds) os << ' ' << s;
    os << '\n';
    char wall[32];
    std::snprintf(wall, sizeof wall, "%.3f", rep.wall_seconds);
    os << "wall seconds: " << wall << "\n\n";
    os << "[config]\n" << rep.config_text << '\n';
    os << "[deviations]\n";
    for (const auto& d : rep.deviations) os << "- " << d << '\n';
    os << '\n';
    if (!rep.notes.empty()) {
      os << "[notes]\n";
      for (const auto& n : rep.notes) os << "- " << n << '\n';
      os << '\n';
    }
    os << "[metrics]\n" << metrics_table(rep);
    files.emplace_back("report.txt", os.str());
  }

  files.emplace_back("config_used.txt", rep.config_text);
  files.emplace_back("metrics.csv", metrics_table(rep));
  files.emplace_back("envelope_reference.csv",
                     envelope_csv(rep.reference_envelope, rep.grid));
  for (const auto& run : rep.runs) {
    const auto tag = sanitize(run.model) + "_" + std::to_string(run.seed);
    if (!run.loss_history.empty())
      files.emplace_back("loss_" + tag + ".csv", loss_csv(run));
    files.emplace_back("envelope_" + tag + ".csv",
                       envelope_csv(run.envelope, rep.grid));
  }
  for (const auto& traj : rep.trajectories) {
    files.emplace_back("params_" + sanitize(traj.label) + "_" +
                           std::to_string(traj.seed) + ".csv",
                       trajectory_csv(traj));
  }

  for (const auto& [name, content] : files) {
    const auto path = fs::path(out_dir) / name;
    std::ofstream out(path, std::ios::binary);
    out << content;
    out.flush();
    if (!out)
      throw data_error("emit_report: write failed for '" + path.string() +
                       "'");
  }
}

}  // namespace ets::harness
