#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "protoem/autodiff.hpp"
#include "protoem/common.hpp"

namespace protoem {

// Tagged binary tensor container; doubles are written raw (column-major) so
// checkpoint round-trips are bit-exact.
namespace tensorio {

constexpr char kMagic[8] = {'P', 'T', 'E', 'M', 'B', 'I', 'N', '1'};

inline void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw DataError("tensor file truncated");
  return v;
}

inline void save(const std::string& path, const std::vector<std::pair<std::string, const Mat*>>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write tensor file: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_u64(os, tensors.size());
  for (const auto& [name, mat] : tensors) {
    write_u64(os, name.size());
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u64(os, static_cast<std::uint64_t>(mat->rows()));
    write_u64(os, static_cast<std::uint64_t>(mat->cols()));
    os.write(reinterpret_cast<const char*>(mat->data()),
             static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(mat->size())));
  }
  if (!os) throw DataError("failed writing tensor file: " + path);
}

inline std::map<std::string, Mat> load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open tensor file: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("not a tensor file: " + path);
  std::map<std::string, Mat> out;
  const std::uint64_t count = read_u64(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t name_len = read_u64(is);
    std::string name(name_len, '\0');
    is.read(name.data(), static_cast<std::streamsize>(name_len));
    const auto rows = static_cast<Eigen::Index>(read_u64(is));
    const auto cols = static_cast<Eigen::Index>(read_u64(is));
    Mat m(rows, cols);
    is.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
    if (!is) throw DataError("tensor file truncated: " + path);
    out.emplace(std::move(name), std::move(m));
  }
  return out;
}

inline void save_params(const std::string& path, const ad::ParamSet& params) {
  std::vector<std::pair<std::string, const Mat*>> tensors;
  for (const auto& p : params) tensors.emplace_back(p.name, &p.value);
  save(path, tensors);
}

// Loads values into already-registered parameters; shapes must match.
inline void load_params(const std::string& path, ad::ParamSet& params) {
  auto tensors = load(path);
  for (auto& p : params) {
    auto it = tensors.find(p.name);
    if (it == tensors.end()) throw DataError("tensor file missing parameter: " + p.name);
    if (it->second.rows() != p.value.rows() || it->second.cols() != p.value.cols())
      throw DataError("tensor shape mismatch for " + p.name);
    p.value = it->second;
  }
}

}  // namespace tensorio
}  // namespace protoem
