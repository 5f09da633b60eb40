#include "cmlab/hash.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace cmlab {

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

uint64_t hash_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("hash_file: cannot open '" + path + "'");
  uint64_t h = kFnvOffset;
  std::vector<char> buf(1 << 16);
  while (is) {
    is.read(buf.data(), buf.size());
    h = fnv1a64(buf.data(), static_cast<size_t>(is.gcount()), h);
  }
  return h;
}

}  // namespace cmlab
