#include <sstream>

#include "cmlab/rng.hpp"
#include "cmlab/tensor.hpp"
#include "doctest.h"

using namespace cmlab;

TEST_SUITE("tensor") {

TEST_CASE("shape/data length mismatch is rejected") {
  CHECK_THROWS(Tensor<double>({2, 3}, {1.0, 2.0}));
  CHECK_THROWS(Tensor<float>({-1, 4}));
}

TEST_CASE("serialization round trip is bit-exact") {
  Rng rng(5);
  Tensor<double> t({3, 4, 5});
  for (auto& x : t.data) x = rng.normal() * 1e3;
  t.data[0] = 0.1;  // not exactly representable; survives only if bit-exact
  t.data[1] = -0.0;

  std::stringstream ss;
  write_tensor(ss, t);
  auto back = read_tensor<double>(ss);
  REQUIRE(back.shape == t.shape);
  CHECK(std::memcmp(back.data.data(), t.data.data(),
                    t.data.size() * sizeof(double)) == 0);

  Tensor<float> f({7});
  for (auto& x : f.data) x = static_cast<float>(rng.normal());
  std::stringstream sf;
  write_tensor(sf, f);
  auto fb = read_tensor<float>(sf);
  CHECK(std::memcmp(fb.data.data(), f.data.data(),
                    f.data.size() * sizeof(float)) == 0);
}

TEST_CASE("dtype tag is enforced on read") {
  Tensor<float> f({2}, {1.0f, 2.0f});
  std::stringstream ss;
  write_tensor(ss, f);
  CHECK(peek_tensor_dtype(ss) == Dtype::f32);
  CHECK_THROWS_WITH_AS(read_tensor<double>(ss),
                       doctest::Contains("dtype mismatch"),
                       std::runtime_error);
}

TEST_CASE("corrupt streams are rejected") {
  std::stringstream ss;
  ss << "definitely not a tensor";
  CHECK_THROWS(read_tensor<float>(ss));

  Tensor<double> t({4}, {1, 2, 3, 4});
  std::stringstream s2;
  write_tensor(s2, t);
  std::string bytes = s2.str();
  bytes.resize(bytes.size() - 7);  // truncate payload
  std::stringstream s3(bytes);
  CHECK_THROWS_WITH_AS(read_tensor<double>(s3), doctest::Contains("truncated"),
                       std::runtime_error);
}

TEST_CASE("scalar and zero-size tensors round trip") {
  Tensor<double> s = Tensor<double>::scalar(42.0);
  std::stringstream ss;
  write_tensor(ss, s);
  auto back = read_tensor<double>(ss);
  CHECK(back.numel() == 1);
  CHECK(back.data[0] == 42.0);
}

}  // TEST_SUITE
