#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "ets/errors.hpp"
#include "ets/sde/timegrid.hpp"

namespace ets::sde {

// A batch of sampled paths on a shared grid: samples x dates x dim,
// row-major, with dates = grid.steps + 1 (initial value included).
struct PathBatch {
  TimeGrid grid;
  int samples = 0;
  int dim = 0;
  std::vector<double> values;

  static PathBatch zeros(const TimeGrid& g, int samples, int dim);

  double at(int s, int date, int k) const {
    return values[idx(s, date, k)];
  }
  double& at(int s, int date, int k) { return values[idx(s, date, k)]; }

  // pointer to the dim-vector of sample s at a date
  const double* state(int s, int date) const {
    return values.data() + idx(s, date, 0);
  }
  double* state(int s, int date) { return values.data() + idx(s, date, 0); }

  void validate() const;

 private:
  std::size_t idx(int s, int date, int k) const {
    return (static_cast<std::size_t>(s) * grid.dates() + date) * dim + k;
  }
};

inline constexpr std::uint32_t kPathBatchFormatVersion = 1;

// Binary container: magic "ETSB", u32 version, u64 samples/dates/dim,
// f64 t0/maturity, then raw row-major little-endian doubles.
void save_pathbatch(const PathBatch& batch, const std::string& path);
PathBatch load_pathbatch(const std::string& path);

// Long-format CSV: sample,date,time,x0,... one row per (sample, date).
void export_pathbatch_csv(const PathBatch& batch, const std::string& path);

}  // namespace ets::sde
