#include "ets/ad/params_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

static_assert(std::endian::native == std::endian::little,
              "file formats assume a little-endian host");

namespace ets::ad {

namespace {

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const char* what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw data_error(std::string("parameter container: truncated at ") +
                            what);
  return v;
}

constexpr char kMagic[4] = {'E', 'T', 'S', 'P'};

}  // namespace

void write_tensors(std::ostream& os, const std::vector<NamedTensor>& ts) {
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kParamsFormatVersion);
  put<std::uint64_t>(os, ts.size());
  for (const auto& t : ts) {
    if (t.rows < 1 || t.cols < 1 ||
        t.values.size() != static_cast<std::size_t>(t.rows) * t.cols)
      throw shape_error("write_tensors: inconsistent tensor '" + t.name + "'");
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::int32_t>(os, t.rows);
    put<std::int32_t>(os, t.cols);
    os.write(reinterpret_cast<const char*>(t.values.data()),
             static_cast<std::streamsize>(t.values.size() * sizeof(double)));
  }
  if (!os) throw data_error("write_tensors: stream write failed");
}

std::vector<NamedTensor> read_tensors(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw data_error("parameter container: bad magic");
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kParamsFormatVersion)
    throw data_error("parameter container: unsupported format version " +
                     std::to_string(version));
  const auto count = get<std::uint64_t>(is, "count");
  if (count > (1ull << 20))
    throw data_error("parameter container: implausible tensor count");
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto len = get<std::uint32_t>(is, "name length");
    if (len > (1u << 16))
      throw data_error("parameter container: implausible name length");
    t.name.resize(len);
    is.read(t.name.data(), len);
    if (!is) throw data_error("parameter container: truncated name");
    t.rows = get<std::int32_t>(is, "rows");
    t.cols = get<std::int32_t>(is, "cols");
    if (t.rows < 1 || t.cols < 1 ||
        static_cast<std::int64_t>(t.rows) * t.cols > (1ll << 28))
      throw data_error("parameter container: bad shape for '" + t.name + "'");
    t.values.resize(static_cast<std::size_t>(t.rows) * t.cols);
    is.read(reinterpret_cast<char*>(t.values.data()),
            static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    if (!is)
      throw data_error("parameter container: truncated values for '" +
                       t.name + "'");
    out.push_back(std::move(t));
  }
  return out;
}

void save_tensors(const std::string& path,
                  const std::vector<NamedTensor>& ts) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("save_tensors: cannot open " + path);
  write_tensors(os, ts);
  if (!os) throw data_error("save_tensors: write failed for " + path);
}

std::vector<NamedTensor> load_tensors(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("load_tensors: cannot open " + path);
  return read_tensors(is);
}

}  // namespace ets::ad
