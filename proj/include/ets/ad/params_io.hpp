#pragma once
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ets/errors.hpp"

namespace ets::ad {

struct NamedTensor {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::vector<double> values;
};

// Flat container: magic "ETSP", u32 format version, u64 count, then per
// tensor {u32 name_len, name, i32 rows, i32 cols, f64 values...}, all
// little-endian.  Doubles round-trip bit-exactly.
inline constexpr std::uint32_t kParamsFormatVersion = 1;

void write_tensors(std::ostream& os, const std::vector<NamedTensor>& ts);
std::vector<NamedTensor> read_tensors(std::istream& is);

void save_tensors(const std::string& path, const std::vector<NamedTensor>& ts);
std::vector<NamedTensor> load_tensors(const std::string& path);

}  // namespace ets::ad
