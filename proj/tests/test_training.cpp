#include <cmath>

#include "support.hpp"

#include "bta/config.hpp"
#include "bta/synthetic.hpp"
#include "bta/training.hpp"

using namespace bta;

using T2 = Tensor<double>;

namespace {

SyntheticSpec small_spec(TaskKind task, std::size_t samples) {
  SyntheticSpec s;
  s.task = task;
  s.seed = 11;
  s.samples = samples;
  s.clips = 2;
  s.frames_per_clip = 2;
  s.tokens = 4;
  s.feature_dim = 8;
  s.embed_dim = 8;
  s.num_candidates = 3;
  return s;
}

ModelConfig small_config(const Dataset<double>& data) {
  ModelConfig c;
  c.model_dim = 16;
  c.fused_dim = 8;
  adopt_dataset_shape(c, data);
  return c;
}

double mean_loss(const Model<double>& model, const Dataset<double>& data) {
  double total = 0;
  for (const auto& s : data.samples) total += run_sample(model, s, {}, true).loss.item();
  return total / static_cast<double>(data.samples.size());
}

}  // namespace

TEST_CASE("learning rate schedule") {
  TrainConfig c;
  CHECK(lr_schedule(0, c) == 1e-4);
  CHECK(lr_schedule(4, c) == 1e-4);
  CHECK(lr_schedule(5, c) == doctest::Approx(5e-5));
  CHECK(lr_schedule(24, c) == doctest::Approx(6.25e-6));
  for (std::size_t e = 0; e < 60; ++e) CHECK(lr_schedule(e + 1, c) <= lr_schedule(e, c));
}

TEST_CASE("train config validation") {
  TrainConfig c;
  c.epochs = 0;
  CHECK_THROWS(c.validate());
  c = {};
  c.batch_size = 0;
  CHECK_THROWS(c.validate());
  c = {};
  c.learning_rate = 0;
  CHECK_THROWS(c.validate());
}

TEST_CASE("optimizer first step has magnitude lr") {
  ParamStore<double> store;
  auto w = store.add("w", T2({1}, {0.5}, true), Branch::decoder);
  AdamState<double> state;
  w.node()->grad = {1.0};
  optimizer_step(store, state, 1e-3);
  CHECK(w.at(0) == doctest::Approx(0.5 - 1e-3).epsilon(1e-6));
  w.node()->grad = {1.0};
  optimizer_step(store, state, 1e-3);
  CHECK(w.at(0) == doctest::Approx(0.5 - 2e-3).epsilon(1e-6));
  CHECK(state.step == 2);
}

TEST_CASE("optimizer leaves parameters with zero gradient unchanged") {
  ParamStore<double> store;
  auto w = store.add("w", T2({3}, {0.1, -0.2, 0.3}, true), Branch::decoder);
  AdamState<double> state;
  for (int i = 0; i < 5; ++i) {
    w.node()->grad = {0, 0, 0};
    optimizer_step(store, state, 1e-2);
  }
  CHECK(w.at(0) == 0.1);
  CHECK(w.at(1) == -0.2);
  CHECK(w.at(2) == 0.3);
}

TEST_CASE("non-finite gradients abort naming the parameter") {
  ParamStore<double> store;
  store.add("a", T2({1}, {0.0}, true), Branch::decoder);
  auto b = store.add("W_bad", T2({2}, {1.0, 2.0}, true), Branch::motion);
  b.node()->grad = {0.0, std::nan("")};
  AdamState<double> state;
  try {
    optimizer_step(store, state, 1e-3);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("W_bad") != std::string::npos);
  }
  CHECK(b.at(0) == 1.0);
  CHECK(state.step == 0);
}

TEST_CASE("evaluate counts correct answers and never mutates parameters") {
  auto data = generate_synthetic<double>(small_spec(TaskKind::open_ended, 4));
  const Model<double> model(small_config(data), 2);
  const auto before = model.params().checksum();
  for (std::size_t i = 0; i < 4; ++i) {
    const long predicted = run_sample(model, data.samples[i], {}, false).prediction.answer;
    data.samples[i].answer = i == 2 ? (predicted + 1) % 4 : predicted;
  }
  const auto m = evaluate(model, data, {});
  CHECK(m.name == "accuracy");
  CHECK(m.value == 0.75);
  CHECK(evaluate(model, data, {}, 3).value == 0.75);
  CHECK(model.params().checksum() == before);
}

TEST_CASE("count evaluation reports mse of rounded predictions") {
  auto data = generate_synthetic<double>(small_spec(TaskKind::count, 3));
  const Model<double> model(small_config(data), 3);
  for (auto& s : data.samples) s.answer = run_sample(model, s, {}, false).prediction.answer;
  const auto m = evaluate(model, data, {});
  CHECK(m.name == "mse");
  CHECK(m.value == 0.0);
  data.samples[0].answer += 2;
  CHECK(evaluate(model, data, {}).value == doctest::Approx(4.0 / 3.0));
}

TEST_CASE("one sample one epoch runs end to end") {
  for (auto task : {TaskKind::open_ended, TaskKind::count, TaskKind::multi_choice}) {
    const auto data = generate_synthetic<double>(small_spec(task, 1));
    Model<double> model(small_config(data), 4);
    AdamState<double> state;
    TrainConfig tc;
    tc.epochs = 1;
    const auto report = train(model, state, data, nullptr, tc);
    REQUIRE(report.epoch_loss.size() == 1);
    CHECK(std::isfinite(report.epoch_loss[0]));
    CHECK(report.parameter_checksum == model.params().checksum());
  }
}

TEST_CASE("first epoch beats the uniform baseline") {
  SyntheticSpec spec;
  spec.seed = 5;
  spec.samples = 16;
  spec.num_labels = 4;
  const auto data = generate_synthetic<double>(spec);
  ModelConfig mc;
  adopt_dataset_shape(mc, data);
  Model<double> model(mc, 6);
  AdamState<double> state;
  TrainConfig tc;
  (void)train_epoch(model, data, tc, state, 0);
  CHECK(mean_loss(model, data) < std::log(4.0));
}

TEST_CASE("ablated branches receive no updates") {
  const auto data = generate_synthetic<double>(small_spec(TaskKind::open_ended, 4));
  for (auto [ablation, branch] : {std::pair{Ablation::no_appearance, Branch::appearance},
                                  std::pair{Ablation::no_motion, Branch::motion}}) {
    Model<double> model(small_config(data), 7);
    const auto frozen = model.params().checksum(branch);
    const auto decoder = model.params().checksum(Branch::decoder);
    AdamState<double> state;
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 2;
    tc.learning_rate = 1e-2;
    tc.ablations = {ablation};
    (void)train(model, state, data, nullptr, tc);
    CHECK(model.params().checksum(branch) == frozen);
    CHECK(model.params().checksum(Branch::decoder) != decoder);
  }
}

TEST_CASE("identical runs are bit identical") {
  const auto data = generate_synthetic<double>(small_spec(TaskKind::multi_choice, 4));
  auto run = [&] {
    Model<double> model(small_config(data), 8);
    AdamState<double> state;
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 3;
    tc.seed = 9;
    return train(model, state, data, nullptr, tc);
  };
  const auto a = run(), b = run();
  CHECK(a.epoch_loss == b.epoch_loss);
  CHECK(a.epoch_metric == b.epoch_metric);
  CHECK(a.parameter_checksum == b.parameter_checksum);
}

TEST_CASE("task mismatch is rejected") {
  const auto data = generate_synthetic<double>(small_spec(TaskKind::count, 2));
  auto cfg = small_config(data);
  cfg.task = TaskKind::open_ended;
  cfg.num_labels = 3;
  Model<double> model(cfg, 1);
  AdamState<double> state;
  CHECK_THROWS_AS(train_epoch(model, data, TrainConfig{}, state, 0), std::invalid_argument);
}

TEST_CASE("model gradient check passes for every head") {
  for (auto task : {TaskKind::open_ended, TaskKind::count, TaskKind::multi_choice}) {
    const auto r = gradient_check_model(task);
    CAPTURE(task_name(task));
    CHECK(r.passed);
    CHECK(r.max_relative_error <= 1e-4);
    CHECK(r.kink_margin >= 1e-5);
    CHECK(r.groups.size() > 20);
  }
}
