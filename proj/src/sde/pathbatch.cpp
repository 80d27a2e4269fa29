#include "ets/sde/pathbatch.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "file formats assume a little-endian host");

namespace ets::sde {

namespace {
constexpr char kMagic[4] = {'E', 'T', 'S', 'B'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const char* what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is)
    throw data_error(std::string("path batch: truncated at ") + what);
  return v;
}
}  // namespace

PathBatch PathBatch::zeros(const TimeGrid& g, int samples, int dim) {
  g.validate();
  if (samples < 1 || dim < 1)
    throw shape_error("PathBatch: samples and dim must be positive");
  PathBatch b;
  b.grid = g;
  b.samples = samples;
  b.dim = dim;
  b.values.assign(static_cast<std::size_t>(samples) * g.dates() * dim, 0.0);
  return b;
}

void PathBatch::validate() const {
  grid.validate();
  if (samples < 1 || dim < 1)
    throw shape_error("PathBatch: samples and dim must be positive");
  if (values.size() !=
      static_cast<std::size_t>(samples) * grid.dates() * dim)
    throw shape_error("PathBatch: value count does not match shape");
  for (double v : values)
    if (!std::isfinite(v)) throw data_error("PathBatch: non-finite value");
}

void save_pathbatch(const PathBatch& batch, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("save_pathbatch: cannot open " + path);
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kPathBatchFormatVersion);
  put<std::uint64_t>(os, static_cast<std::uint64_t>(batch.samples));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(batch.grid.dates()));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(batch.dim));
  put<double>(os, batch.grid.t0);
  put<double>(os, batch.grid.maturity);
  os.write(reinterpret_cast<const char*>(batch.values.data()),
           static_cast<std::streamsize>(batch.values.size() * sizeof(double)));
  if (!os) throw data_error("save_pathbatch: write failed for " + path);
}

PathBatch load_pathbatch(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("load_pathbatch: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw data_error("load_pathbatch: bad magic in " + path);
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kPathBatchFormatVersion)
    throw data_error("load_pathbatch: unsupported format version " +
                     std::to_string(version));
  const auto samples = get<std::uint64_t>(is, "samples");
  const auto dates = get<std::uint64_t>(is, "dates");
  const auto dim = get<std::uint64_t>(is, "dim");
  if (samples < 1 || dates < 2 || dim < 1 ||
      samples * dates * dim > (1ull << 32))
    throw data_error("load_pathbatch: implausible shape");
  PathBatch b;
  b.grid.t0 = get<double>(is, "t0");
  b.grid.maturity = get<double>(is, "maturity");
  b.grid.steps = static_cast<int>(dates) - 1;
  b.grid.validate();
  b.samples = static_cast<int>(samples);
  b.dim = static_cast<int>(dim);
  b.values.resize(samples * dates * dim);
  is.read(reinterpret_cast<char*>(b.values.data()),
          static_cast<std::streamsize>(b.values.size() * sizeof(double)));
  if (!is) throw data_error("load_pathbatch: truncated values in " + path);
  return b;
}

void export_pathbatch_csv(const PathBatch& batch, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw data_error("export_pathbatch_csv: cannot open " + path);
  os << "sample,date,time";
  for (int k = 0; k < batch.dim; ++k) os << ",x" << k;
  os << "\n";
  char buf[32];
  for (int s = 0; s < batch.samples; ++s)
    for (int t = 0; t < batch.grid.dates(); ++t) {
      os << s << "," << t << ",";
      std::snprintf(buf, sizeof(buf), "%.17g", batch.grid.time(t));
      os << buf;
      for (int k = 0; k < batch.dim; ++k) {
        std::snprintf(buf, sizeof(buf), "%.17g", batch.at(s, t, k));
        os << "," << buf;
      }
      os << "\n";
    }
  if (!os) throw data_error("export_pathbatch_csv: write failed for " + path);
}

}  // namespace ets::sde
