#include "ets/harness/dataset.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "ets/rng.hpp"
#include "ets/sde/sdesim.hpp"

namespace ets::harness {

namespace {

constexpr double kDegenerateEps = 1e-12;

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

// missing: empty, a textual null, or anything that does not parse to a
// finite number
bool parse_cell(const std::string& field, double* out) {
  if (field.empty()) return false;
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (end == field.c_str() || *end != '\0' || !std::isfinite(v)) return false;
  *out = v;
  return true;
}

}  // namespace

void DatasetSpec::validate() const {
  if (path.empty()) throw shape_error("DatasetSpec: empty path");
  if (window < 2) throw shape_error("DatasetSpec: window must be >= 2 rows");
  if (stride < 1) throw shape_error("DatasetSpec: stride must be >= 1");
  if (!(start_value > 0))
    throw shape_error("DatasetSpec: start_value must be > 0");
  if (!(maturity > 0)) throw shape_error("DatasetSpec: maturity must be > 0");
}

double LoadedDataset::raw(int w, int i, int j) const {
  if (degenerate[static_cast<std::size_t>(j)]) return col_min[j];
  const std::size_t at = static_cast<std::size_t>(w) * batch.dim + j;
  const double s = (batch.at(w, i, j) - rebase_shift[at]) / rebase_scale[at];
  return col_min[j] + s * (col_max[j] - col_min[j]);
}

LoadedDataset load_csv_dataset(const DatasetSpec& spec) {
  spec.validate();
  std::ifstream in(spec.path);
  if (!in)
    throw data_error("load_csv_dataset: cannot open '" + spec.path + "'");

  std::string line;
  if (!std::getline(in, line))
    throw data_error("load_csv_dataset: '" + spec.path + "' is empty");
  const auto header = split_row(line);

  // resolve the column selection against the header
  std::vector<int> pick;
  std::vector<std::string> names;
  if (spec.columns.empty()) {
    for (int j = 0; j < static_cast<int>(header.size()); ++j)
      pick.push_back(j);
    names = header;
  } else {
    for (const auto& want : spec.columns) {
      int found = -1;
      for (int j = 0; j < static_cast<int>(header.size()); ++j) {
        if (header[j] != want) continue;
        if (found >= 0)
          throw data_error("load_csv_dataset: column '" + want +
                           "' appears twice in the header");
        found = j;
      }
      if (found < 0)
        throw data_error("load_csv_dataset: column '" + want +
                         "' not in the header of '" + spec.path + "'");
      pick.push_back(found);
      names.push_back(want);
    }
  }
  const int d = static_cast<int>(pick.size());
  if (d == 0) throw data_error("load_csv_dataset: no columns");

  // parse the body; a cell that fails to parse poisons its whole row
  std::vector<double> cells;  // rows x d
  std::vector<char> row_missing;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split_row(line);
    if (fields.size() != header.size())
      throw data_error("load_csv_dataset: '" + spec.path + "' row " +
                       std::to_string(lineno) + ": expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    bool missing = false;
    std::vector<double> parsed(d);
    for (int j = 0; j < d; ++j)
      if (!parse_cell(fields[pick[j]], &parsed[j])) missing = true;
    row_missing.push_back(missing ? 1 : 0);
    cells.insert(cells.end(), parsed.begin(), parsed.end());
  }
  const int rows = static_cast<int>(row_missing.size());
  if (rows < spec.window)
    throw data_error("load_csv_dataset: " + std::to_string(rows) +
                     " data rows cannot fill a " +
                     std::to_string(spec.window) + "-row window");

  LoadedDataset out;
  out.columns = names;
  out.rows_read = rows;
  out.col_min.assign(d, std::numeric_limits<double>::infinity());
  out.col_max.assign(d, -std::numeric_limits<double>::infinity());
  for (int r = 0; r < rows; ++r) {
    if (row_missing[r]) continue;
    for (int j = 0; j < d; ++j) {
      const double v = cells[static_cast<std::size_t>(r) * d + j];
      out.col_min[j] = std::min(out.col_min[j], v);
      out.col_max[j] = std::max(out.col_max[j], v);
    }
  }
  if (!std::isfinite(out.col_min[0]))
    throw data_error("load_csv_dataset: every row has a missing value");

  out.degenerate.assign(d, 0);
  for (int j = 0; j < d; ++j)
    if (out.col_max[j] - out.col_min[j] < kDegenerateEps)
      out.degenerate[j] = 1;

  // keep the windows that cover no missing row
  const int candidates = (rows - spec.window) / spec.stride + 1;
  std::vector<int> starts;
  for (int c = 0; c < candidates; ++c) {
    const int r0 = c * spec.stride;
    bool ok = true;
    for (int i = 0; i < spec.window && ok; ++i)
      if (row_missing[r0 + i]) ok = false;
    if (ok)
      starts.push_back(r0);
    else
      ++out.windows_dropped;
  }
  if (starts.empty())
    throw data_error("load_csv_dataset: all " + std::to_string(candidates) +
                     " windows cover missing values");

  const sde::TimeGrid grid{0.0, spec.maturity, spec.window - 1};
  out.batch = sde::PathBatch::zeros(grid, static_cast<int>(starts.size()), d);
  out.rebase_scale.assign(starts.size() * static_cast<std::size_t>(d), 1.0);
  out.rebase_shift.assign(starts.size() * static_cast<std::size_t>(d), 0.0);

  for (int w = 0; w < static_cast<int>(starts.size()); ++w) {
    for (int j = 0; j < d; ++j) {
      const std::size_t at = static_cast<std::size_t>(w) * d + j;
      if (out.degenerate[j]) {
        // no scale to fit; the whole column sits at start_value
        for (int i = 0; i < spec.window; ++i)
          out.batch.at(w, i, j) = spec.start_value;
        continue;
      }
      const double span = out.col_max[j] - out.col_min[j];
      const double first =
          (cells[static_cast<std::size_t>(starts[w]) * d + j] -
           out.col_min[j]) /
          span;
      // multiplicative rebase to the common start; a window opening exactly
      // on the column minimum has nothing to scale and is shifted instead
      if (first > kDegenerateEps) {
        out.rebase_scale[at] = spec.start_value / first;
      } else {
        out.rebase_shift[at] = spec.start_value - first;
      }
      for (int i = 0; i < spec.window; ++i) {
        const double s =
            (cells[static_cast<std::size_t>(starts[w] + i) * d + j] -
             out.col_min[j]) /
            span;
        out.batch.at(w, i, j) = out.rebase_scale[at] * s + out.rebase_shift[at];
      }
    }
  }
  out.batch.validate();
  return out;
}

void write_stock_fixture(const std::string& path, int rows, int dim,
                         std::uint64_t seed) {
  if (rows < 1 || dim < 1)
    throw shape_error("write_stock_fixture: need rows >= 1, dim >= 1");
  std::ofstream out(path);
  if (!out)
    throw data_error("write_stock_fixture: cannot open '" + path + "'");

  for (int j = 0; j < dim; ++j) out << (j ? ",s" : "s") << j;
  out << '\n';

  // correlated daily lognormal walk with per-column drift and volatility
  std::vector<double> corr(static_cast<std::size_t>(dim) * dim, 0.5);
  for (int j = 0; j < dim; ++j) corr[static_cast<std::size_t>(j) * dim + j] = 1.0;
  const auto chol = sde::cholesky_corr(corr, dim);

  std::vector<double> price(dim), z(dim), eps(dim);
  for (int j = 0; j < dim; ++j) price[j] = 80.0 + 10.0 * j;
  const double dt = 1.0 / 252.0;
  CounterRng rng(seed, 0);

  char buf[32];
  for (int r = 0; r < rows; ++r) {
    for (int j = 0; j < dim; ++j) {
      std::snprintf(buf, sizeof buf, "%.6f", price[j]);
      out << (j ? "," : "") << buf;
    }
    out << '\n';
    for (int j = 0; j < dim; ++j) z[j] = rng.next_gauss();
    for (int j = 0; j < dim; ++j) {
      double acc = 0.0;
      for (int k = 0; k <= j; ++k)
        acc += chol[static_cast<std::size_t>(j) * dim + k] * z[k];
      eps[j] = acc;
    }
    for (int j = 0; j < dim; ++j) {
      const double mu = 0.05 + 0.01 * j, sigma = 0.15 + 0.03 * (j % 4);
      price[j] *= std::exp((mu - 0.5 * sigma * sigma) * dt +
                           sigma * std::sqrt(dt) * eps[j]);
    }
  }
  out.flush();
  if (!out)
    throw data_error("write_stock_fixture: write failed for '" + path + "'");
}

}  // namespace ets::harness
