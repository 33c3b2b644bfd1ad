#include <algorithm>
#include <cmath>
#include <numeric>

#include "support.hpp"

#include "bta/decoders.hpp"
#include "bta/model.hpp"

using namespace bta;
using bta::test::random_tensor;

using T2 = Tensor<double>;

namespace {

LinearLayer<double> zero_linear(std::size_t in, std::size_t out, Activation act) {
  return {T2::zeros({in, out}), T2::zeros({out}), act};
}

LinearLayer<double> random_linear(Rng& rng, std::size_t in, std::size_t out, Activation act) {
  return {random_tensor(rng, {in, out}, -0.5, 0.5, false), random_tensor(rng, {out}, -0.1, 0.1, false), act};
}

FusedRepresentation<double> random_fused(Rng& rng, std::size_t df, std::size_t d) {
  auto f = fuse_pool(random_tensor(rng, {6, df}, -1, 1, false), random_tensor(rng, {2, df}, -1, 1, false));
  f.u_bar = random_tensor(rng, {d}, -1, 1, false);
  return f;
}

}  // namespace

TEST_CASE("fuse pool averages over time and concatenates") {
  const auto f = fuse_pool(T2::full({128, 256}, 0.3), T2::full({8, 256}, -0.2));
  CHECK(f.o.shape() == Shape{512});
  for (std::size_t i = 0; i < 256; ++i) {
    CHECK(f.v_bar.at(i) == doctest::Approx(0.3));
    CHECK(f.o.at(i) == doctest::Approx(0.3));
    CHECK(f.o.at(256 + i) == doctest::Approx(-0.2));
  }
}

TEST_CASE("pooling gradient spreads 1/L per frame") {
  Rng rng(1);
  const auto m = random_tensor(rng, {3, 4}, -1, 1, false);
  const auto v = random_tensor(rng, {5, 4});
  backward(sum(fuse_pool(v, m).o));
  const auto g = v.grad_tensor();
  for (std::size_t i = 0; i < g.numel(); ++i) CHECK(g.at(i) == doctest::Approx(0.2));
  CHECK(test::grad_check([&](const T2& p) { return sum(mul(fuse_pool(p, m).o, fuse_pool(p, m).o)); },
                         random_tensor(rng, {5, 4})) < 1e-6);
}

TEST_CASE("decoder weight shapes at full scale") {
  ModelConfig oe;
  oe.feature_dim = 8;
  oe.embed_dim = 8;
  oe.num_labels = 10;
  const Model<float> open(oe, 1);
  CHECK(open.params().get("W_2").shape() == Shape{1024, 512});
  CHECK(open.params().get("W_y").shape() == Shape{512, 256});

  ModelConfig mc = oe;
  mc.task = TaskKind::multi_choice;
  const Model<float> choice(mc, 1);
  CHECK(choice.params().get("W_y").shape() == Shape{2048, 512});
  CHECK(choice.params().get("W_y'").shape() == Shape{512, 1});
}

TEST_CASE("zero weights give uniform probabilities and tied scores") {
  Rng rng(2);
  const std::size_t df = 4, d = 6;
  const auto fused = random_fused(rng, df, d);
  const AnswerTrunk<double> trunk{zero_linear(d, d, Activation::none), zero_linear(2 * df + d, d, Activation::relu),
                                  zero_linear(d, df, Activation::relu)};
  const auto out = open_ended_decode(trunk, zero_linear(df, 5, Activation::none), fused);
  for (auto p : out.probabilities.data()) CHECK(p == doctest::Approx(0.2));

  MultiChoiceHead<double> head{zero_linear(d, d, Activation::none), zero_linear(d, d, Activation::none),
                               zero_linear(4 * df + 2 * d, d, Activation::relu), zero_linear(d, 1, Activation::none)};
  head.score.bias = T2({1}, {0.7});
  std::vector<double> scores;
  for (int c = 0; c < 3; ++c) {
    scores.push_back(multichoice_score(head, fused.o, random_fused(rng, df, d).o, fused.u_bar,
                                       random_tensor(rng, {d}, -1, 1, false))
                         .item());
  }
  for (auto s : scores) CHECK(s == 0.7);
  CHECK(select_answer(std::span<const double>(scores)) == 0);
}

TEST_CASE("open-ended probabilities are a distribution and shift invariant") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t df = 4, d = 6;
    const auto fused = random_fused(rng, df, d);
    const AnswerTrunk<double> trunk{random_linear(rng, d, d, Activation::none),
                                    random_linear(rng, 2 * df + d, d, Activation::relu),
                                    random_linear(rng, d, df, Activation::relu)};
    auto cls = random_linear(rng, df, 7, Activation::none);
    const auto out = open_ended_decode(trunk, cls, fused);
    double total = 0;
    for (auto p : out.probabilities.data()) {
      CHECK(p > 0.0);
      total += p;
    }
    CHECK(std::abs(total - 1.0) < 1e-6);

    cls.bias = add_scalar(cls.bias, 3.0);
    const auto shifted = open_ended_decode(trunk, cls, fused);
    CHECK(select_answer(shifted.probabilities) == select_answer(out.probabilities));
  }
}

TEST_CASE("count rounding") {
  CHECK(round_count(3.4, 1, 10) == 3);
  CHECK(round_count(3.5, 1, 10) == 4);
  CHECK(round_count(0.2, 1, 10) == 1);
  CHECK(round_count(42.0, 1, 10) == 10);
  CHECK_THROWS(round_count(std::nan(""), 1, 10));
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const long c = round_count(rng.uniform(-20, 20), 1, 10);
    CHECK(c >= 1);
    CHECK(c <= 10);
  }
}

TEST_CASE("count decode rounds the regression output") {
  Rng rng(5);
  const std::size_t df = 4, d = 6;
  const auto fused = random_fused(rng, df, d);
  const AnswerTrunk<double> trunk{random_linear(rng, d, d, Activation::none),
                                  random_linear(rng, 2 * df + d, d, Activation::relu),
                                  random_linear(rng, d, df, Activation::relu)};
  auto reg = zero_linear(df, 1, Activation::none);
  reg.bias = T2({1}, {3.5});
  const auto out = count_decode(trunk, reg, fused, 1, 10);
  CHECK(out.raw.shape().empty());
  CHECK(out.raw.item() == 3.5);
  CHECK(out.answer == 4);
}

TEST_CASE("select answer") {
  const std::vector<double> a{0.1, 0.9, 0.3};
  const std::vector<double> tie{0.5, 0.5};
  CHECK(select_answer(std::span<const double>(a)) == 1);
  CHECK(select_answer(std::span<const double>(tie)) == 0);
  CHECK_THROWS(select_answer(std::span<const double>()));

  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(6);
    for (auto& x : s) x = rng.uniform(-3, 3);
    std::vector<std::size_t> p(6);
    std::iota(p.begin(), p.end(), 0);
    for (std::size_t k = 6; k > 1; --k) std::swap(p[k - 1], p[rng.index(k)]);
    std::vector<double> permuted(6), transformed(6);
    for (std::size_t i = 0; i < 6; ++i) {
      permuted[i] = s[p[i]];
      transformed[i] = std::exp(2 * s[i]) + 5;
    }
    const auto best = select_answer(std::span<const double>(s));
    CHECK(p[select_answer(std::span<const double>(permuted))] == best);
    CHECK(select_answer(std::span<const double>(transformed)) == best);
  }
}

TEST_CASE("cross entropy") {
  CHECK(cross_entropy_loss(T2::full({4}, 0.25), 2).item() == doctest::Approx(std::log(4.0)));
  CHECK(cross_entropy_loss(T2({3}, {0, 1, 0}), 1).item() == 0.0);
  CHECK(std::isfinite(cross_entropy_loss(T2({2}, {1, 0}), 1).item()));
  CHECK_THROWS_AS(cross_entropy_loss(T2::full({4}, 0.25), 4), std::out_of_range);

  Rng rng(7);
  const auto logits = random_tensor(rng, {5});
  backward(cross_entropy_loss(softmax_along_axis(logits, 0, 1.0), 3));
  const auto g = logits.grad_tensor();
  const auto p = softmax_along_axis(logits.detach(), 0, 1.0);
  for (std::size_t i = 0; i < 5; ++i) CHECK(g.at(i) == doctest::Approx(p.at(i) - (i == 3 ? 1.0 : 0.0)));
  CHECK(test::grad_check([](const T2& x) { return cross_entropy_loss(softmax_along_axis(x, 0, 1.0), 3); },
                         random_tensor(rng, {5})) < 1e-6);
}

TEST_CASE("mean squared error") {
  CHECK(mse_loss(T2({}, {3.0}), T2({}, {5.0})).item() == 4.0);
  CHECK(mse_loss(T2({}, {2.5}), T2({}, {2.5})).item() == 0.0);
  const T2 raw({}, {1.25}, true);
  backward(mse_loss(raw, T2({}, {4.0})));
  CHECK(raw.grad_tensor().item() == doctest::Approx(2 * (1.25 - 4.0)));
}

TEST_CASE("hinge loss") {
  CHECK(hinge_loss(T2({2}, {2, 0}), 0).item() == 0.0);
  CHECK(hinge_loss(T2({2}, {0, 0}), 0).item() == 1.0);
  CHECK(hinge_loss(T2({3}, {0, 0.5, 2}), 2).item() == 0.0);
  CHECK(hinge_loss(T2({3}, {0, 0.5, 1}), 2).item() == doctest::Approx(0.5));

  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_tensor(rng, {4}, -2, 2, false);
    const auto loss = hinge_loss(s, 1).item();
    bool separated = true;
    for (std::size_t i = 0; i < 4; ++i)
      if (i != 1 && s.at(i) > s.at(1) - 1) separated = false;
    CHECK(loss >= 0.0);
    CHECK((loss == 0.0) == separated);
  }
  // Margin-active point away from every kink.
  CHECK(test::grad_check([](const T2& x) { return hinge_loss(x, 0); }, T2({3}, {0.2, 0.5, -0.1}, true)) < 1e-6);
}
