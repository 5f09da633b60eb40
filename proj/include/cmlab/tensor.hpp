// Dense row-major tensor of float or double, plus the versioned binary
// serialization format (bit-exact round trip).

#pragma once

#include <cstdint>
#include <cstring>
#include <iosfwd>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace cmlab {

using Shape = std::vector<int64_t>;

inline int64_t numel_of(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) {
    if (e < 0) throw std::invalid_argument("tensor: negative extent");
    n *= e;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i)
    out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(numel_of(shape)) {}
  Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != numel_of(shape))
      throw std::invalid_argument("tensor: data length " +
                                  std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int64_t dim(size_t i) const { return shape.at(i); }
  size_t rank() const { return shape.size(); }

  T& at2(int64_t i, int64_t j) { return data[i * shape[1] + j]; }
  const T& at2(int64_t i, int64_t j) const { return data[i * shape[1] + j]; }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, T v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(T v) { return Tensor({1}, {v}); }
};

// ------------------------------------------------------------- serialization
//
// Layout (all integers little-endian):
//   magic   8 bytes  "CMLTENS\0"
//   version u32      1
//   dtype   u8       1 = f32, 2 = f64
//   rank    u8
//   extents u64 * rank
//   payload row-major IEEE-754, little-endian

enum class Dtype : uint8_t { f32 = 1, f64 = 2 };

template <typename T>
constexpr Dtype dtype_of() {
  if constexpr (std::is_same_v<T, float>) return Dtype::f32;
  else return Dtype::f64;
}

inline const char* dtype_name(Dtype d) {
  return d == Dtype::f32 ? "f32" : "f64";
}

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t);
template <typename T>
Tensor<T> read_tensor(std::istream& is);
// Peeks the dtype tag of the next serialized tensor without consuming it.
Dtype peek_tensor_dtype(std::istream& is);

extern template void write_tensor<float>(std::ostream&, const Tensor<float>&);
extern template void write_tensor<double>(std::ostream&, const Tensor<double>&);
extern template Tensor<float> read_tensor<float>(std::istream&);
extern template Tensor<double> read_tensor<double>(std::istream&);

}  // namespace cmlab
