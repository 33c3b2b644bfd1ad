#include <cmath>

#include "support.hpp"

#include "bta/interactions.hpp"

using namespace bta;
using bta::test::random_tensor;

using T2 = Tensor<double>;

namespace {

GCNStack<double> identity_stack(std::size_t d, std::size_t layers, Activation act) {
  GCNStack<double> s;
  for (std::size_t i = 0; i < layers; ++i) s.weights.push_back(T2::eye(d));
  s.activation = act;
  return s;
}

LinearLayer<double> random_linear(Rng& rng, std::size_t in, std::size_t out, Activation act) {
  return {random_tensor(rng, {in, out}, -0.5, 0.5, false), random_tensor(rng, {out}, -0.1, 0.1, false), act};
}

void check_row_stochastic(const T2& s) {
  for (std::size_t i = 0; i < s.dim(0); ++i) {
    double total = 0;
    for (std::size_t j = 0; j < s.dim(1); ++j) {
      CHECK(s.at(i, j) > 0.0);
      total += s.at(i, j);
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
}

}  // namespace

TEST_CASE("interaction matrix examples") {
  const auto uniform = interaction_matrix(T2({3, 2}, {1, 2, 3, 4, 5, 6}), T2::full({4, 2}, 0.5), 10.0);
  for (auto v : uniform.data()) CHECK(v == doctest::Approx(0.25));

  const auto eight = interaction_matrix(T2::full({8, 4}, 0.1), T2::full({8, 4}, -0.2), 10.0);
  for (auto v : eight.data()) CHECK(std::abs(v - 0.125) <= 1e-6);

  const auto closed = interaction_matrix(T2({1, 1}, {1.0}), T2({2, 1}, {std::log(3.0), 0.0}), 1.0);
  CHECK(closed.at(0) == doctest::Approx(0.75));
  CHECK(closed.at(1) == doctest::Approx(0.25));
}

TEST_CASE("q2v degenerates to identity without question signal") {
  const T2 x({1, 3}, {0.4, -1.2, 2.0});
  LinearLayer<double> fc{T2::eye(3), T2::zeros({3}), Activation::none};
  const auto r = q2v_interaction(x, T2::zeros({4, 3}), T2::zeros({1, 1}), fc,
                                 identity_stack(3, 2, Activation::none), 10.0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(r.conditioned.at(i) == doctest::Approx(x.at(i)));
}

TEST_CASE("q2v aggregation equals a per-node sum over question words") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_tensor(rng, {4, 5}, -1, 1, false);
    const auto u = random_tensor(rng, {3, 5}, -1, 1, false);
    LinearLayer<double> fc{T2::eye(5), T2::zeros({5}), Activation::none};
    const auto r = q2v_interaction(x, u, T2::zeros({4, 4}), fc, identity_stack(5, 1, Activation::none), 10.0);
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t k = 0; k < 5; ++k) {
        double agg = x.at(i, k);
        for (std::size_t j = 0; j < 3; ++j) agg += r.interaction.at(i, j) * u.at(j, k);
        CHECK(std::abs(r.aggregated.at(i, k) - agg) <= 1e-6);
      }
    }
  }
}

TEST_CASE("full-scale interaction shapes") {
  Rng rng(3);
  const std::size_t d = 512;
  const auto v = random_tensor(rng, {128, d}, -0.1, 0.1, false);
  const auto m = random_tensor(rng, {8, d}, -0.1, 0.1, false);
  const auto u = random_tensor(rng, {12, d}, -0.1, 0.1, false);
  LinearLayer<double> fc{T2::eye(d), T2::zeros({d}), Activation::relu};
  const auto stack = identity_stack(d, 2, Activation::relu);
  const auto qa = q2v_interaction(v, u, T2::full({128, 128}, 1.0 / 128), fc, stack, 10.0);
  const auto qm = q2v_interaction(m, u, T2::full({8, 8}, 0.125), fc, stack, 10.0);
  CHECK(qa.conditioned.shape() == Shape{128, d});
  CHECK(qm.conditioned.shape() == Shape{8, d});

  const auto b = bridge_aggregate(u, qm.conditioned, T2::eye(12), stack, 10.0);
  CHECK(b.aggregated.shape() == Shape{12, d});
  const auto proj = random_linear(rng, d, 256, Activation::relu);
  CHECK(v2v_deliver(qa.conditioned, b.aggregated, proj, 10.0).output.shape() == Shape{128, 256});
  CHECK(v2v_deliver(qm.conditioned, b.aggregated, proj, 10.0).output.shape() == Shape{8, 256});
  CHECK(v2v_no_bridge(qa.conditioned, qm.conditioned, proj, 10.0).output.shape() == Shape{128, 256});
}

TEST_CASE("bridge of identical conditioned rows is that row") {
  Rng rng(4);
  const auto u = random_tensor(rng, {5, 3}, -1, 1, false);
  const T2 c = concat_rows<double>({T2({1, 3}, {0.2, -0.7, 1.1}), T2({1, 3}, {0.2, -0.7, 1.1})});
  const auto b = bridge_aggregate(u, c, T2::eye(5), identity_stack(3, 2, Activation::relu), 10.0);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t k = 0; k < 3; ++k) CHECK(b.bridged.at(i, k) == doctest::Approx(c.at(0, k)));
}

TEST_CASE("zero bridge weights leave the question nodes bitwise unchanged") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto u = random_tensor(rng, {6, 4}, -1, 1, false);
    const auto c = random_tensor(rng, {3, 4}, -1, 1, false);
    GCNStack<double> zero{{T2::zeros({4, 4}), T2::zeros({4, 4})}, Activation::relu};
    const auto b = bridge_aggregate(u, c, T2::eye(6), zero, 10.0);
    for (std::size_t i = 0; i < u.numel(); ++i) CHECK(b.aggregated.at(i) == u.at(i));
  }
}

TEST_CASE("v2v deliver with a zero bridge signal projects the conditioned nodes") {
  Rng rng(6);
  const auto x = random_tensor(rng, {4, 3}, -1, 1, false);
  LinearLayer<double> fc{T2::eye(3), T2::zeros({3}), Activation::relu};
  const auto r = v2v_deliver(x, T2::zeros({2, 3}), fc, 10.0);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(r.output.at(i) == std::max(0.0, x.at(i)));
  check_row_stochastic(r.interaction);
}

TEST_CASE("v2v deliver aggregation equals per-node brute force") {
  Rng rng(7);
  const auto x = random_tensor(rng, {5, 4}, -1, 1, false);
  const auto ub = random_tensor(rng, {3, 4}, -1, 1, false);
  LinearLayer<double> fc{T2::eye(4), T2::zeros({4}), Activation::none};
  const auto r = v2v_deliver(x, ub, fc, 10.0);
  check_row_stochastic(r.interaction);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t k = 0; k < 4; ++k) {
      double agg = x.at(i, k);
      for (std::size_t j = 0; j < 3; ++j) agg += r.interaction.at(i, j) * ub.at(j, k);
      CHECK(std::abs(r.output.at(i, k) - agg) <= 1e-6);
    }
  }
}

TEST_CASE("direct v2v with equal source rows adds the same vector everywhere") {
  Rng rng(8);
  const auto target = random_tensor(rng, {4, 3}, -1, 1, false);
  const auto source = T2::full({5, 3}, 0.3);
  LinearLayer<double> fc{T2::eye(3), T2::zeros({3}), Activation::none};
  const auto r = v2v_no_bridge(target, source, fc, 10.0);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < 3; ++k) CHECK(r.output.at(i, k) - target.at(i, k) == doctest::Approx(0.3));
}

TEST_CASE("direct v2v equals the bridge path through a single mean node") {
  Rng rng(9);
  const auto target = random_tensor(rng, {4, 3}, -1, 1, false);
  const auto source = random_tensor(rng, {5, 3}, -1, 1, false);
  const auto mean = reshape(mean_along_axis(source, 0), {1, 3});
  const auto fc = random_linear(rng, 3, 2, Activation::relu);
  // λ = 0 makes the direct aggregation the plain source mean.
  const auto direct = v2v_no_bridge(target, source, fc, 0.0);
  const auto bridged = v2v_deliver(target, mean, fc, 10.0);
  for (std::size_t i = 0; i < direct.output.numel(); ++i)
    CHECK(std::abs(direct.output.at(i) - bridged.output.at(i)) < 1e-12);
}

TEST_CASE("orthogonal question shifts keep interaction argmax") {
  // Visual rows live in the first two coordinates; the shift uses the third.
  Rng rng(10);
  const T2 x({3, 3}, {1, 0, 0, 0, 1, 0, 0.6, -0.8, 0});
  const auto u = random_tensor(rng, {4, 3}, -1, 1, false);
  std::vector<double> shifted(u.data().begin(), u.data().end());
  for (std::size_t j = 0; j < 4; ++j) shifted[j * 3 + 2] += 5.0;
  const auto a = interaction_matrix(x, u, 10.0);
  const auto b = interaction_matrix(x, T2({4, 3}, shifted), 10.0);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(std::abs(a.at(i) - b.at(i)) < 1e-12);
}

TEST_CASE("interaction gradients match finite differences") {
  Rng rng(11);
  const auto u = random_tensor(rng, {3, 4}, -1, 1, false);
  CHECK(test::grad_check([&](const T2& p) { return sum(mul(interaction_matrix(p, u, 5.0), interaction_matrix(p, u, 5.0))); },
                         random_tensor(rng, {4, 4}, -1, 1)) < 1e-6);
}
