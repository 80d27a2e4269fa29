#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "ets/errors.hpp"
#include "ets/sde/pathbatch.hpp"

namespace ets::harness {

// How to turn one CSV series into training sequences.
struct DatasetSpec {
  std::string path;
  std::vector<std::string> columns;  // header names; empty means all
  int window = 30;                   // rows per sequence
  int stride = 1;                    // rows between window starts
  double start_value = 0.2;          // every window is rebased to open here
  double maturity = 0.25;            // time span assigned to one window

  void validate() const;
};

// A windowed, scaled view of a CSV series.  Columns are min-max scaled to
// [0, 1] with bounds fitted on the full series, then each window and
// dimension is multiplied by start_value / (its first scaled value) so all
// sequences open at the same spot.  A window whose first scaled value sits
// at the column minimum cannot be rescaled multiplicatively and is shifted
// instead; a constant column has no scale at all and maps to the constant
// start_value.  Enough state is stored to undo all of it exactly.
struct LoadedDataset {
  sde::PathBatch batch;  // windows x window rows x selected columns
  std::vector<std::string> columns;
  std::vector<double> col_min, col_max;  // full-series bounds per column
  std::vector<char> degenerate;          // column constant: max == min
  std::vector<double> rebase_scale;      // per (window, column), row-major
  std::vector<double> rebase_shift;
  int rows_read = 0;
  int windows_dropped = 0;  // windows that covered a missing value

  // Raw-unit value behind batch.at(w, i, j); exact affine inverse.
  double raw(int w, int i, int j) const;
};

// Reads a comma-separated file with one header row.  Empty fields and
// non-numeric entries count as missing: every window covering such a row is
// dropped (and counted); rows with the wrong field count are structural
// damage and reject the file.  All windows dropped, or fewer rows than one
// window, rejects the file too.
LoadedDataset load_csv_dataset(const DatasetSpec& spec);

// Writes a deterministic stock-like CSV: `dim` correlated lognormal price
// columns named s0..s{dim-1}, one header row, `rows` data rows.
void write_stock_fixture(const std::string& path, int rows, int dim,
                         std::uint64_t seed);

}  // namespace ets::harness
