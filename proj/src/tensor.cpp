#include "cmlab/tensor.hpp"

#include <bit>
#include <istream>
#include <ostream>

namespace cmlab {

namespace {

constexpr char kMagic[8] = {'C', 'M', 'L', 'T', 'E', 'N', 'S', '\0'};
constexpr uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

template <typename U>
void put(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename U>
U get(std::istream& is) {
  U v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw std::runtime_error("tensor read: truncated stream");
  return v;
}

}  // namespace

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
  os.write(kMagic, sizeof kMagic);
  put<uint32_t>(os, kVersion);
  put<uint8_t>(os, static_cast<uint8_t>(dtype_of<T>()));
  put<uint8_t>(os, static_cast<uint8_t>(t.rank()));
  for (int64_t e : t.shape) put<uint64_t>(os, static_cast<uint64_t>(e));
  os.write(reinterpret_cast<const char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(T)));
  if (!os) throw std::runtime_error("tensor write failed");
}

Dtype peek_tensor_dtype(std::istream& is) {
  const auto pos = is.tellg();
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw std::runtime_error("tensor read: bad magic");
  get<uint32_t>(is);
  const auto tag = get<uint8_t>(is);
  is.seekg(pos);
  if (tag != 1 && tag != 2)
    throw std::runtime_error("tensor read: unknown dtype tag " + std::to_string(tag));
  return static_cast<Dtype>(tag);
}

template <typename T>
Tensor<T> read_tensor(std::istream& is) {
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw std::runtime_error("tensor read: bad magic");
  const auto version = get<uint32_t>(is);
  if (version != kVersion)
    throw std::runtime_error("tensor read: unsupported version " +
                             std::to_string(version));
  const auto tag = get<uint8_t>(is);
  if (tag != static_cast<uint8_t>(dtype_of<T>()))
    throw std::runtime_error(
        std::string("tensor read: dtype mismatch, stream has ") +
        dtype_name(static_cast<Dtype>(tag)) + ", caller wants " +
        dtype_name(dtype_of<T>()));
  const auto rank = get<uint8_t>(is);
  Shape shape(rank);
  for (auto& e : shape) e = static_cast<int64_t>(get<uint64_t>(is));
  Tensor<T> t(shape);
  is.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(T)));
  if (!is) throw std::runtime_error("tensor read: truncated payload");
  return t;
}

template void write_tensor<float>(std::ostream&, const Tensor<float>&);
template void write_tensor<double>(std::ostream&, const Tensor<double>&);
template Tensor<float> read_tensor<float>(std::istream&);
template Tensor<double> read_tensor<double>(std::istream&);

}  // namespace cmlab
