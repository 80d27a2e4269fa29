// Command-line front end: simulate reference diffusions, train the three
// generator flavours, sample trained checkpoints, compare path batches, run
// the packaged experiments, and render their reports.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 training failure.

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ets/cegen/train.hpp"
#include "ets/egen/generator.hpp"
#include "ets/errors.hpp"
#include "ets/gan/train.hpp"
#include "ets/harness/config.hpp"
#include "ets/harness/dataset.hpp"
#include "ets/harness/experiments.hpp"
#include "ets/metrics/path_metrics.hpp"
#include "ets/metrics/scores.hpp"
#include "ets/rng.hpp"
#include "ets/sde/sdesim.hpp"

namespace {

using namespace ets;

double opt_or(const CLI::Option* opt, double value, double fallback) {
  return opt->count() ? value : fallback;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

// Loads the generator out of either checkpoint container; adversarial
// checkpoints carry critics after the embedded generator block.
egen::EulerGenerator load_any_generator(const std::string& path) {
  try {
    return gan::load_gan_checkpoint(path).base.gen;
  } catch (const data_error& e) {
    if (std::string(e.what()).find("bad magic") == std::string::npos) throw;
  }
  return egen::load_checkpoint(path).gen;
}

sde::PathBatch load_batch(const std::string& label, const std::string& path) {
  try {
    return sde::load_pathbatch(path);
  } catch (const data_error& e) {
    throw data_error(label + ": " + e.what());
  }
}

void write_outputs(const sde::PathBatch& batch, const std::string& out,
                   const std::string& csv) {
  if (out.empty() && csv.empty())
    throw usage_error("nothing to write: pass --out and/or --csv");
  if (!out.empty()) sde::save_pathbatch(batch, out);
  if (!csv.empty()) sde::export_pathbatch_csv(batch, csv);
}

std::vector<double> equicorrelation(int dim, double rho) {
  std::vector<double> c(static_cast<std::size_t>(dim) * dim, rho);
  for (int i = 0; i < dim; ++i) c[static_cast<std::size_t>(i) * dim + i] = 1.0;
  return c;
}

// --- simulate ---------------------------------------------------------

struct SimulateArgs {
  std::string process = "ou";
  int samples = 300;
  std::uint64_t seed = 0;
  std::string out, csv;
  sde::TimeGrid grid{0.0, 0.25, 29};
  double theta = 7.0, mu = 0.6, sigma = 0.0, r = 0.8, x0 = 0.2, rho = 0.0;
  int dim = 1;
  const CLI::Option* sigma_opt = nullptr;
};

int run_simulate(const SimulateArgs& a) {
  sde::PathBatch batch;
  if (a.process == "ou") {
    if (a.dim != 1) throw usage_error("simulate: ou is one-dimensional");
    sde::OuParams p;
    p.theta = a.theta;
    p.mu = a.mu;
    p.sigma = opt_or(a.sigma_opt, a.sigma, 0.1);
    p.x0 = a.x0;
    batch = sde::simulate_ou(p, a.grid, a.samples, a.seed);
  } else {
    sde::BsParams p;
    p.r = a.r;
    p.sigma = opt_or(a.sigma_opt, a.sigma, 0.3);
    p.x0 = a.x0;
    p.dim = a.dim;
    if (a.dim > 1 && a.rho != 0.0) p.corr = equicorrelation(a.dim, a.rho);
    batch = sde::simulate_bs(p, a.grid, a.samples, a.seed);
  }
  write_outputs(batch, a.out, a.csv);
  std::cout << a.process << ": " << batch.samples << " paths, "
            << batch.grid.dates() << " dates, dim " << batch.dim << '\n';
  return 0;
}

// --- train ------------------------------------------------------------

struct TrainArgs {
  std::string model;
  std::string config_path, data_path, out;
  std::uint64_t seed = 0;
  const CLI::Option* seed_opt = nullptr;
  int progress = 500;
};

// With-replacement row resampling, the data source for CSV-backed training.
sde::PathBatch resample_pool(const sde::PathBatch& pool, int samples,
                             std::uint64_t seed) {
  sde::PathBatch out = sde::PathBatch::zeros(pool.grid, samples, pool.dim);
  CounterRng rng(seed, 0);
  const std::size_t row = static_cast<std::size_t>(pool.grid.dates()) * pool.dim;
  for (int s = 0; s < samples; ++s) {
    const int pick = static_cast<int>(rng.next_index(
        static_cast<std::uint64_t>(pool.samples)));
    std::copy(pool.values.begin() + pick * row,
              pool.values.begin() + (pick + 1) * row,
              out.values.begin() + s * row);
  }
  return out;
}

int run_train(const TrainArgs& a) {
  harness::Config cfg = a.config_path.empty()
                            ? harness::Config::parse_text("")
                            : harness::Config::parse_file(a.config_path);

  const std::string data_path =
      !a.data_path.empty() ? a.data_path : cfg.get_str("data", "path", "");
  const std::uint64_t seed =
      a.seed_opt->count()
          ? a.seed
          : static_cast<std::uint64_t>(cfg.get_int("train", "seed", 0));

  egen::GeneratorConfig gcfg;
  std::function<sde::PathBatch(int, std::uint64_t)> source;
  sde::PathBatch pool;  // keeps CSV windows alive for the source closure

  if (!data_path.empty()) {
    harness::DatasetSpec ds;
    ds.path = data_path;
    ds.columns = cfg.get_list("data", "columns", "");
    ds.window = static_cast<int>(cfg.get_int("data", "window", 30));
    ds.stride = static_cast<int>(cfg.get_int("data", "stride", 1));
    ds.start_value = cfg.get_double("data", "start_value", 0.2);
    ds.maturity = cfg.get_double("data", "maturity", 0.25);
    auto loaded = harness::load_csv_dataset(ds);
    if (loaded.windows_dropped > 0)
      std::cerr << "ets: dropped " << loaded.windows_dropped
                << " windows covering missing values\n";
    pool = std::move(loaded.batch);
    gcfg.dim = pool.dim;
    gcfg.grid = pool.grid;
    gcfg.x0.assign(pool.dim, ds.start_value);
    source = [&pool](int m, std::uint64_t s) {
      return resample_pool(pool, m, s);
    };
  } else {
    const std::string process = cfg.get_str("process", "name", "ou");
    sde::TimeGrid grid;
    grid.t0 = cfg.get_double("grid", "t0", 0.0);
    grid.maturity = cfg.get_double("grid", "maturity", 0.25);
    grid.steps = static_cast<int>(cfg.get_int("grid", "steps", 29));
    if (process == "ou") {
      sde::OuParams p;
      p.theta = cfg.get_double("process", "theta", 7.0);
      p.mu = cfg.get_double("process", "mu", 0.6);
      p.sigma = cfg.get_double("process", "sigma", 0.1);
      p.x0 = cfg.get_double("process", "x0", 0.2);
      p.validate();
      gcfg.dim = 1;
      gcfg.grid = grid;
      gcfg.x0 = {p.x0};
      source = [p, grid](int m, std::uint64_t s) {
        return sde::simulate_ou(p, grid, m, s);
      };
    } else if (process == "bs") {
      sde::BsParams p;
      p.r = cfg.get_double("process", "r", 0.8);
      p.sigma = cfg.get_double("process", "sigma", 0.3);
      p.x0 = cfg.get_double("process", "x0", 0.2);
      p.dim = static_cast<int>(cfg.get_int("process", "dim", 1));
      const double rho = cfg.get_double("process", "rho", 0.0);
      if (p.dim > 1 && rho != 0.0) p.corr = equicorrelation(p.dim, rho);
      p.validate();
      gcfg.dim = p.dim;
      gcfg.grid = grid;
      gcfg.x0.assign(p.dim, p.x0);
      source = [p, grid](int m, std::uint64_t s) {
        return sde::simulate_bs(p, grid, m, s);
      };
    } else {
      throw usage_error("train: unknown process '" + process +
                        "' (expected ou or bs)");
    }
  }
  gcfg.hidden_layers =
      static_cast<int>(cfg.get_int("generator", "hidden_layers", 3));
  gcfg.hidden_width = static_cast<int>(cfg.get_int("generator", "width", 0));

  const int iterations =
      static_cast<int>(cfg.get_int("train", "iterations", 5000));
  const int batch = static_cast<int>(cfg.get_int("train", "batch", 300));
  const double lr = cfg.get_double("train", "lr", 1e-3);

  for (const auto& key : cfg.unused_keys())
    std::cerr << "ets: warning: unused config key " << key << '\n';

  egen::TrainMeta meta;
  meta.iterations = iterations;
  meta.seed = seed;
  meta.config_hash = cfg.hash();

  if (a.model == "cegen") {
    cegen::TrainConfig tc;
    tc.gen = gcfg;
    tc.iterations = iterations;
    tc.batch = batch;
    tc.lr = lr;
    tc.partition.k = static_cast<int>(cfg.get_int("train", "k", 10));
    tc.seed = seed;
    if (a.progress > 0) {
      tc.monitor_every = a.progress;
      tc.monitor = [](int it, double loss, const egen::EulerGenerator&) {
        std::cerr << "iter " << it << " loss " << fmt(loss) << '\n';
      };
    }
    auto res = cegen::train_cegen(source, tc);
    meta.loss_curve = res.loss_history;
    egen::save_checkpoint(a.out, res.gen, meta);
    std::cout << "cegen: " << iterations << " iterations, final loss "
              << fmt(res.loss_history.empty() ? 0.0 : res.loss_history.back())
              << ", saved " << a.out << '\n';
    return 0;
  }

  gan::GanConfig gc;
  gc.gen = gcfg;
  gc.iterations = iterations;
  gc.batch = batch;
  gc.n_critic = static_cast<int>(cfg.get_int("train", "n_critic", 5));
  gc.gp_coef = cfg.get_double("train", "gp_coef", 10.0);
  gc.lr_gen = gc.lr_critic = gc.lr_marginal = lr;
  gc.seed = seed;
  if (a.progress > 0) {
    gc.monitor_every = a.progress;
    gc.monitor = [](int it, double critic, double gen,
                    const egen::EulerGenerator&) {
      std::cerr << "iter " << it << " critic " << fmt(critic) << " gen "
                << fmt(gen) << '\n';
    };
  }
  const bool dual = a.model == "edgan";
  auto res = dual ? gan::train_edgan(source, gc) : gan::train_ewgan(source, gc);
  meta.loss_curve = res.gen_history;
  gan::save_gan_checkpoint(a.out, res.gen, meta, res.temporal,
                           dual ? &res.marginal : nullptr);
  std::cout << a.model << ": " << iterations
            << " iterations, final generator loss "
            << fmt(res.gen_history.empty() ? 0.0 : res.gen_history.back())
            << ", saved " << a.out << '\n';
  return 0;
}

// --- generate / evaluate ----------------------------------------------

struct GenerateArgs {
  std::string ckpt, out, csv;
  int samples = 300;
  std::uint64_t seed = 0;
};

int run_generate(const GenerateArgs& a) {
  const auto gen = load_any_generator(a.ckpt);
  write_outputs(gen.generate(a.samples, a.seed), a.out, a.csv);
  std::cout << "generated " << a.samples << " paths, "
            << gen.grid().dates() << " dates, dim " << gen.dim() << '\n';
  return 0;
}

struct EvaluateArgs {
  std::string real, gen, out;
  std::vector<std::string> metrics{"fid", "qvar", "corr", "envelope"};
  std::uint64_t seed = 0;
  int score_iterations = 500;
  int score_repeats = 10;
};

int run_evaluate(const EvaluateArgs& a) {
  for (const auto& m : a.metrics)
    if (!harness::known_metric(m))
      throw usage_error("evaluate: unknown metric '" + m + "'");

  const auto real = load_batch("--real", a.real);
  const auto gen = load_batch("--gen", a.gen);
  if (real.dim != gen.dim || real.grid.dates() != gen.grid.dates())
    throw data_error("evaluate: batches disagree on shape (real " +
                     std::to_string(real.grid.dates()) + " dates dim " +
                     std::to_string(real.dim) + ", generated " +
                     std::to_string(gen.grid.dates()) + " dates dim " +
                     std::to_string(gen.dim) + ")");

  const auto want = [&](const char* name) {
    for (const auto& m : a.metrics)
      if (m == name) return true;
    return false;
  };

  std::ostringstream os;
  if (want("fid")) os << "fid = " << fmt(metrics::fid_avg(real, gen)) << '\n';
  if (want("qvar"))
    os << "qvar = " << fmt(metrics::qvar_mse(real, gen)) << '\n';
  if (want("corr"))
    os << "corr = " << fmt(metrics::corr_mse(real, gen)) << '\n';
  if (want("envelope"))
    os << "envelope = " << fmt(metrics::envelope_mse(real, gen)) << '\n';
  if (want("disc") || want("pred")) {
    metrics::ScoreConfig sc;
    sc.iterations = a.score_iterations;
    sc.repeats = a.score_repeats;
    sc.batch = std::min(sc.batch, std::min(real.samples, gen.samples));
    if (want("disc"))
      os << "disc = " << fmt(metrics::discriminative_score(real, gen, a.seed, sc))
         << '\n';
    if (want("pred"))
      os << "pred = " << fmt(metrics::predictive_score(real, gen, a.seed, sc))
         << '\n';
  }

  if (a.out.empty()) {
    std::cout << os.str();
  } else {
    std::ofstream file(a.out, std::ios::binary);
    if (!file || !(file << os.str()) || !file.flush())
      throw data_error("evaluate: cannot write to '" + a.out + "'");
    std::cout << "wrote " << a.out << '\n';
  }
  return 0;
}

// --- exp / report / fixture -------------------------------------------

struct ExpArgs {
  std::string kind;
  std::string spec_path, out;
  const CLI::Option* out_opt = nullptr;
};

int run_exp(const ExpArgs& a) {
  harness::Config cfg = a.spec_path.empty()
                            ? harness::Config::parse_text("")
                            : harness::Config::parse_file(a.spec_path);
  harness::ExperimentSpec::Kind kind;
  if (a.kind == "a")
    kind = harness::ExperimentSpec::Kind::kExpA;
  else if (a.kind == "b")
    kind = harness::ExperimentSpec::Kind::kExpB;
  else if (a.kind == "c")
    kind = harness::ExperimentSpec::Kind::kExpC;
  else
    kind = harness::ExperimentSpec::Kind::kExpD;

  auto spec = harness::ExperimentSpec::from_config(cfg, kind);
  if (a.out_opt->count()) spec.out_dir = a.out;
  spec.validate();
  for (const auto& key : cfg.unused_keys())
    std::cerr << "ets: warning: unused config key " << key << '\n';

  auto rep = harness::run_experiment(spec);
  rep.config_text = cfg.materialized();
  rep.config_hash = cfg.hash();
  harness::emit_report(rep, spec.out_dir);

  for (const auto& run : rep.runs) {
    std::cout << run.model << " seed " << run.seed
              << ": fid " << fmt(run.metric.fid) << " qvar "
              << fmt(run.metric.qvar) << " corr " << fmt(run.metric.corr);
    if (run.has_scores)
      std::cout << " disc " << fmt(run.disc) << " pred " << fmt(run.pred);
    std::cout << '\n';
  }
  std::cout << "report written to " << spec.out_dir << '\n';
  return 0;
}

int run_report(const std::string& dir) {
  std::ifstream metrics(dir + "/metrics.csv", std::ios::binary);
  if (!metrics)
    throw data_error("report: cannot open '" + dir + "/metrics.csv'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(metrics, line)) {
    if (line.empty()) continue;
    std::vector<std::string> row;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) row.push_back(cell);
    row.resize(rows.empty() ? row.size() : rows[0].size());
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw data_error("report: '" + dir + "' has no metrics");

  std::vector<std::size_t> width(rows[0].size(), 0);
  for (const auto& row : rows)
    for (std::size_t j = 0; j < row.size(); ++j)
      width[j] = std::max(width[j], row[j].size());
  for (const auto& row : rows) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) std::cout << "  ";
      std::cout << row[j] << std::string(width[j] - row[j].size(), ' ');
    }
    std::cout << '\n';
  }

  std::ifstream rpt(dir + "/report.txt", std::ios::binary);
  bool tail = false;
  while (std::getline(rpt, line)) {
    if (line == "[deviations]") tail = true;
    if (line == "[metrics]") break;
    if (tail) std::cout << line << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Euler-scheme time-series generators: simulate, train, "
               "sample, and compare"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* ssim = app.add_subcommand("simulate", "Sample a reference diffusion");
  ssim->add_option("--process", sim.process, "ou or bs")
      ->check(CLI::IsMember({"ou", "bs"}))
      ->capture_default_str();
  ssim->add_option("--samples", sim.samples, "number of paths")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  ssim->add_option("--seed", sim.seed, "sampling seed")->capture_default_str();
  ssim->add_option("--out", sim.out, "binary path-batch output");
  ssim->add_option("--csv", sim.csv, "long-format CSV output");
  ssim->add_option("--t0", sim.grid.t0, "grid start")->capture_default_str();
  ssim->add_option("--maturity", sim.grid.maturity, "grid end")
      ->capture_default_str();
  ssim->add_option("--steps", sim.grid.steps, "Euler steps")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  ssim->add_option("--theta", sim.theta, "ou mean-reversion speed")
      ->capture_default_str();
  ssim->add_option("--mu", sim.mu, "ou long-run mean")->capture_default_str();
  sim.sigma_opt = ssim->add_option(
      "--sigma", sim.sigma, "volatility (default 0.1 ou, 0.3 bs)");
  ssim->add_option("--r", sim.r, "bs drift")->capture_default_str();
  ssim->add_option("--x0", sim.x0, "start value")->capture_default_str();
  ssim->add_option("--dim", sim.dim, "bs dimension")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  ssim->add_option("--rho", sim.rho, "bs equicorrelation")
      ->capture_default_str();

  TrainArgs tr;
  auto* strain = app.add_subcommand(
      "train", "Train a generator against simulated or CSV data");
  strain->add_option("--model", tr.model, "cegen, ewgan or edgan")
      ->check(CLI::IsMember({"cegen", "ewgan", "edgan"}))
      ->required();
  strain->add_option("--config", tr.config_path,
                     "config file ([process]/[grid]/[generator]/[train]/[data])");
  strain->add_option("--data", tr.data_path, "CSV series (overrides [data])");
  strain->add_option("--out", tr.out, "checkpoint output")->required();
  tr.seed_opt = strain->add_option("--seed", tr.seed,
                                   "training seed (overrides [train] seed)");
  strain->add_option("--progress", tr.progress,
                     "stderr progress cadence, 0 silences")
      ->capture_default_str();

  GenerateArgs ga;
  auto* sgen = app.add_subcommand("generate", "Sample a trained checkpoint");
  sgen->add_option("--ckpt", ga.ckpt, "checkpoint path")->required();
  sgen->add_option("--samples", ga.samples, "number of paths")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sgen->add_option("--seed", ga.seed, "sampling seed")->capture_default_str();
  sgen->add_option("--out", ga.out, "binary path-batch output");
  sgen->add_option("--csv", ga.csv, "long-format CSV output");

  EvaluateArgs ev;
  auto* seval = app.add_subcommand(
      "evaluate", "Compare two path batches under the distribution metrics");
  seval->add_option("--real", ev.real, "reference batch")->required();
  seval->add_option("--gen", ev.gen, "generated batch")->required();
  seval->add_option("--metrics", ev.metrics,
                    "subset of fid,qvar,corr,envelope,disc,pred")
      ->delimiter(',')
      ->capture_default_str();
  seval->add_option("--seed", ev.seed, "score-training seed")
      ->capture_default_str();
  seval->add_option("--score-iterations", ev.score_iterations,
                    "classifier/predictor budget")
      ->capture_default_str();
  seval->add_option("--score-repeats", ev.score_repeats,
                    "score averaging repeats")
      ->capture_default_str();
  seval->add_option("--out", ev.out, "write the report here instead of stdout");

  ExpArgs ex;
  auto* sexp = app.add_subcommand("exp", "Run a packaged experiment");
  sexp->add_option("kind", ex.kind, "a, b, c or d")
      ->check(CLI::IsMember({"a", "b", "c", "d"}))
      ->required();
  sexp->add_option("--spec", ex.spec_path, "experiment config file");
  ex.out_opt = sexp->add_option("--out", ex.out, "report directory override");

  std::string report_dir;
  auto* srep = app.add_subcommand("report", "Render an emitted report");
  srep->add_option("dir", report_dir, "report directory")->required();

  std::string fx_out;
  int fx_rows = 500, fx_dim = 4;
  std::uint64_t fx_seed = 0;
  auto* sfix = app.add_subcommand(
      "fixture", "Write a correlated lognormal stock-like CSV");
  sfix->add_option("--out", fx_out, "CSV output path")->required();
  sfix->add_option("--rows", fx_rows, "number of dates")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sfix->add_option("--dim", fx_dim, "number of series")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sfix->add_option("--seed", fx_seed, "fixture seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (ssim->parsed()) return run_simulate(sim);
    if (strain->parsed()) return run_train(tr);
    if (sgen->parsed()) return run_generate(ga);
    if (seval->parsed()) return run_evaluate(ev);
    if (sexp->parsed()) return run_exp(ex);
    if (srep->parsed()) return run_report(report_dir);
    harness::write_stock_fixture(fx_out, fx_rows, fx_dim, fx_seed);
    std::cout << "wrote " << fx_out << '\n';
    return 0;
  } catch (const usage_error& e) {
    std::cerr << "ets: " << e.what() << '\n';
    return 1;
  } catch (const data_error& e) {
    std::cerr << "ets: " << e.what() << '\n';
    return 2;
  } catch (const train_error& e) {
    std::cerr << "ets: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "ets: " << e.what() << '\n';
    return 1;
  }
}
