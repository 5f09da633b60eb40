#include <cmath>

#include "cmlab/model.hpp"
#include "cmlab/objective.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace cmlab;
using testutil::random_tensor;

namespace {

Tensor<double> unit_rows(int b, int d, uint64_t seed) {
  Rng rng(seed);
  Tensor<double> t({b, d});
  for (auto& x : t.data) x = rng.normal();
  for (int r = 0; r < b; ++r) {
    double n = 0;
    for (int j = 0; j < d; ++j) n += t.data[r * d + j] * t.data[r * d + j];
    n = std::sqrt(n);
    for (int j = 0; j < d; ++j) t.data[r * d + j] /= n;
  }
  return t;
}

Tensor<double> basis_rows(std::vector<int> which, int d) {
  Tensor<double> t({static_cast<int64_t>(which.size()), d});
  for (size_t r = 0; r < which.size(); ++r) t.data[r * d + which[r]] = 1.0;
  return t;
}

}  // namespace

TEST_SUITE("objective") {

TEST_CASE("single pair: loss is zero") {
  SimilarityBatch<double> b;
  b.image_embeds = basis_rows({0}, 4);
  b.text_embeds = basis_rows({0}, 4);
  b.temperature = 0.07;
  CHECK(std::abs(info_nce_value(b)) < 1e-10);
}

TEST_CASE("all-equal similarities give ln B") {
  for (int bs : {2, 5, 8}) {
    SimilarityBatch<double> b;
    Tensor<double> same({bs, 4});
    for (int r = 0; r < bs; ++r) same.data[r * 4 + 1] = 1.0;
    b.image_embeds = same;
    b.text_embeds = same;
    b.temperature = 0.3;
    CHECK(std::abs(info_nce_value(b) - std::log(double(bs))) < 1e-10);
  }
}

TEST_CASE("B=2 identity similarity matrix at tau 1") {
  SimilarityBatch<double> b;
  b.image_embeds = basis_rows({0, 1}, 4);
  b.text_embeds = basis_rows({0, 1}, 4);
  b.temperature = 1.0;
  const double expect = std::log(1.0 + std::exp(-1.0));  // 0.313261687518223
  CHECK(std::abs(info_nce_value(b) - expect) < 1e-10);
  CHECK(info_nce_value(b) == doctest::Approx(0.31326168751822286).epsilon(1e-12));
}

TEST_CASE("graph route agrees with the direct evaluation") {
  const int bs = 6, d = 8;
  auto ie = unit_rows(bs, d, 1);
  auto te = unit_rows(bs, d, 2);
  SimilarityBatch<double> b{ie, te, 0.25};
  const double direct = info_nce_value(b);

  Graph<double> g;
  Var iv = g.constant(ie);
  Var tv = g.constant(te);
  Var sc = g.constant(Tensor<double>::scalar(1.0 / 0.25));
  Var loss = info_nce_loss(g, iv, tv, sc);
  CHECK(std::abs(g.value(loss).data[0] - direct) < 1e-12);
}

TEST_CASE("invalid batches are rejected") {
  SimilarityBatch<double> b;
  b.image_embeds = basis_rows({0, 1}, 4);
  b.text_embeds = basis_rows({0, 1}, 4);
  b.temperature = -1.0;
  CHECK_THROWS(info_nce_value(b));
  b.temperature = 0.0;
  CHECK_THROWS(info_nce_value(b));
  b.temperature = 1.0;
  b.text_embeds.data[0] = 2.0;  // breaks unit norm
  CHECK_THROWS(info_nce_value(b));
  b.text_embeds.data[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS(info_nce_value(b));
}

TEST_CASE("loss is invariant to a constant shift of every logit") {
  Rng rng(3);
  const int bs = 5;
  std::vector<double> logits(bs * bs);
  for (auto& x : logits) x = 3.0 * rng.normal();
  auto shifted = logits;
  for (auto& x : shifted) x += 12.34;
  CHECK(std::abs(detail::nce_direction(logits, bs) -
                 detail::nce_direction(shifted, bs)) < 1e-10);
}

TEST_CASE("loss is invariant to a joint permutation of the batch") {
  const int bs = 7, d = 6;
  auto ie = unit_rows(bs, d, 4);
  auto te = unit_rows(bs, d, 5);
  SimilarityBatch<double> b{ie, te, 0.5};
  const double base = info_nce_value(b);

  const std::vector<int> perm = {3, 0, 6, 1, 5, 2, 4};
  SimilarityBatch<double> p;
  p.temperature = 0.5;
  p.image_embeds = Tensor<double>({bs, d});
  p.text_embeds = Tensor<double>({bs, d});
  for (int r = 0; r < bs; ++r)
    for (int j = 0; j < d; ++j) {
      p.image_embeds.data[r * d + j] = ie.data[perm[r] * d + j];
      p.text_embeds.data[r * d + j] = te.data[perm[r] * d + j];
    }
  CHECK(std::abs(info_nce_value(p) - base) < 1e-10);
}

TEST_CASE("zero-initialized projections degenerate to ln B") {
  // all-zero embedding rows (what a zero projection matrix produces) pass
  // through l2_normalize as zero rows; every similarity ties and the loss is
  // exactly the uniform-softmax value
  const int bs = 4, d = 8;
  Graph<double> g;
  Var raw_i = g.leaf(Tensor<double>::zeros({bs, d}), true);
  Var raw_t = g.leaf(Tensor<double>::zeros({bs, d}), true);
  Var loss = info_nce_loss(g, l2_normalize(g, raw_i), l2_normalize(g, raw_t),
                           g.constant(Tensor<double>::scalar(14.0)));
  CHECK(g.value(loss).data[0] == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("log-temperature gradient is zero at the clamp boundary") {
  auto at_scale = [](double log_temp) {
    Graph<double> g;
    Var lt = g.leaf(Tensor<double>::scalar(log_temp), true);
    Var sc = clamp(g, exp_op(g, lt), kLogitScaleMin, kLogitScaleMax);
    Var ie = g.constant(basis_rows({0, 1}, 4));
    Var te = g.constant(basis_rows({0, 1}, 4));
    g.backward(info_nce_loss(g, ie, te, sc));
    return g.grad(lt).data[0];
  };
  CHECK(at_scale(std::log(200.0)) == 0.0);  // clamped high
  CHECK(at_scale(std::log(0.5)) == 0.0);    // clamped low
  CHECK(at_scale(std::log(10.0)) != 0.0);   // interior
}

TEST_CASE("gradients through the loss match finite differences") {
  const int bs = 4, d = 6;
  Rng rng(11);
  std::vector<Tensor<double>> inputs = {random_tensor({bs, d}, rng),
                                        random_tensor({bs, d}, rng),
                                        Tensor<double>::scalar(1.3)};
  auto loss_fn = [&](const std::vector<Tensor<double>>& ins) {
    Graph<double> g;
    Var i = g.leaf(ins[0], true);
    Var t = g.leaf(ins[1], true);
    Var lt = g.leaf(ins[2], true);
    Var sc = clamp(g, exp_op(g, lt), kLogitScaleMin, kLogitScaleMax);
    return g
        .value(info_nce_loss(g, l2_normalize(g, i), l2_normalize(g, t), sc))
        .data[0];
  };
  Graph<double> g;
  Var i = g.leaf(inputs[0], true);
  Var t = g.leaf(inputs[1], true);
  Var lt = g.leaf(inputs[2], true);
  Var sc = clamp(g, exp_op(g, lt), kLogitScaleMin, kLogitScaleMax);
  g.backward(info_nce_loss(g, l2_normalize(g, i), l2_normalize(g, t), sc));
  std::vector<Tensor<double>> analytic = {g.grad(i), g.grad(t), g.grad(lt)};
  auto res = testutil::grad_check(loss_fn, inputs, analytic);
  INFO("worst=", res.worst);
  CHECK(res.max_err < 1e-4);
}

TEST_CASE("toy problem: loss decreases for 50 consecutive descent steps") {
  const int bs = 4, d = 6;
  Rng rng(21);
  Tensor<double> ie = random_tensor({bs, d}, rng, 0.5);
  Tensor<double> te = random_tensor({bs, d}, rng, 0.5);
  double last = 1e300;
  for (int step = 0; step < 50; ++step) {
    Graph<double> g;
    Var i = g.leaf(ie, true);
    Var t = g.leaf(te, true);
    Var loss = info_nce_loss(g, l2_normalize(g, i), l2_normalize(g, t),
                             g.constant(Tensor<double>::scalar(10.0)));
    const double val = g.value(loss).data[0];
    CHECK(val < last);
    last = val;
    g.backward(loss);
    for (int64_t k = 0; k < ie.numel(); ++k) ie.data[k] -= 1e-2 * g.grad(i).data[k];
    for (int64_t k = 0; k < te.numel(); ++k) te.data[k] -= 1e-2 * g.grad(t).data[k];
  }
}

}  // TEST_SUITE
