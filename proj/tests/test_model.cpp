#include <cmath>
#include <set>

#include "support.hpp"

#include "bta/config.hpp"
#include "bta/model.hpp"
#include "bta/synthetic.hpp"

using namespace bta;

using T2 = Tensor<double>;

namespace {

SyntheticSpec tiny_spec(TaskKind task) {
  SyntheticSpec s;
  s.task = task;
  s.seed = 3;
  s.samples = 3;
  s.clips = 2;
  s.frames_per_clip = 3;
  s.tokens = 4;
  s.feature_dim = 6;
  s.embed_dim = 5;
  s.num_candidates = 3;
  return s;
}

ModelConfig tiny_config(const Dataset<double>& data) {
  ModelConfig c;
  c.model_dim = 8;
  c.fused_dim = 4;
  adopt_dataset_shape(c, data);
  return c;
}

bool all_finite(const T2& t) {
  for (auto v : t.data())
    if (!std::isfinite(v)) return false;
  return true;
}

void check_row_stochastic(const T2& s) {
  for (std::size_t i = 0; i < s.dim(0); ++i) {
    double total = 0;
    for (std::size_t j = 0; j < s.dim(1); ++j) total += s.at(i, j);
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
}

}  // namespace

TEST_CASE("full forward shapes and trace") {
  const auto data = generate_synthetic<double>(tiny_spec(TaskKind::open_ended));
  const Model<double> model(tiny_config(data), 1);
  const auto& s = data.samples[0];
  const auto r = full_forward(model, s.appearance, s.motion, s.question, {});
  CHECK(r.appearance_nodes.shape() == Shape{6, 8});
  CHECK(r.motion_nodes.shape() == Shape{2, 8});
  CHECK(r.question_nodes.shape() == Shape{4, 8});
  CHECK(r.appearance_conditioned.shape() == Shape{6, 8});
  CHECK(r.motion_conditioned.shape() == Shape{2, 8});
  CHECK(r.aggregated_motion.shape() == Shape{4, 8});
  CHECK(r.aggregated_appearance.shape() == Shape{4, 8});
  CHECK(r.final_appearance.shape() == Shape{6, 4});
  CHECK(r.final_motion.shape() == Shape{2, 4});
  CHECK(r.fused.o.shape() == Shape{8});
  CHECK(r.fused.u_bar.shape() == Shape{8});

  std::set<std::string> keys;
  for (const auto& [k, m] : r.trace.matrices) {
    keys.insert(k);
    check_row_stochastic(m);
  }
  CHECK(keys == std::set<std::string>{"S^v", "S^m", "S_b^v", "S_b^m", "bridge^m", "bridge^v"});
  CHECK(r.trace.matrices.at("S^v").shape() == Shape{6, 4});
  CHECK(r.trace.matrices.at("bridge^m").shape() == Shape{4, 2});
  CHECK(r.trace.frame_labels.size() == 6);
  CHECK(r.trace.token_labels == s.question.tokens);
}

TEST_CASE("every ablation runs and leaves finite predictions") {
  for (auto task : {TaskKind::open_ended, TaskKind::count, TaskKind::multi_choice}) {
    const auto data = generate_synthetic<double>(tiny_spec(task));
    const Model<double> model(tiny_config(data), 2);
    for (auto a : all_ablations()) {
      CAPTURE(ablation_name(a));
      ForwardConfig fc{10.0, Pathway::from({a})};
      const auto ev = run_sample(model, data.samples[1], fc, true);
      CHECK(all_finite(ev.prediction.output));
      CHECK(std::isfinite(ev.loss.item()));
      CHECK(ev.question_pass.fused.o.shape() == Shape{8});
      if (task == TaskKind::multi_choice) CHECK(ev.prediction.output.shape() == Shape{3});
      for (const auto& [k, m] : ev.question_pass.trace.matrices) check_row_stochastic(m);
    }
  }
}

TEST_CASE("ablation pathways substitute the documented nodes") {
  const auto data = generate_synthetic<double>(tiny_spec(TaskKind::open_ended));
  const Model<double> model(tiny_config(data), 3);
  const auto& s = data.samples[0];

  const auto no_q2a = full_forward(model, s.appearance, s.motion, s.question, {10.0, Pathway::from({Ablation::no_q2a})});
  CHECK(no_q2a.appearance_conditioned.data()[0] == no_q2a.appearance_nodes.data()[0]);
  CHECK(no_q2a.trace.matrices.count("S^v") == 0);

  const auto no_bridge =
      full_forward(model, s.appearance, s.motion, s.question, {10.0, Pathway::from({Ablation::no_bridge})});
  CHECK(no_bridge.trace.matrices.count("S_wob^v") == 1);
  CHECK(no_bridge.trace.matrices.at("S_wob^m").shape() == Shape{2, 6});
  CHECK(no_bridge.trace.matrices.count("bridge^m") == 0);

  const auto no_app =
      full_forward(model, s.appearance, s.motion, s.question, {10.0, Pathway::from({Ablation::no_appearance})});
  CHECK_FALSE(no_app.final_appearance.defined());
  CHECK(no_app.final_motion.shape() == Shape{2, 4});
  for (std::size_t i = 0; i < 4; ++i) CHECK(no_app.fused.o.at(i) == 0.0);
}

TEST_CASE("model construction and forward are deterministic") {
  const auto data = generate_synthetic<double>(tiny_spec(TaskKind::count));
  const auto cfg = tiny_config(data);
  const Model<double> a(cfg, 7), b(cfg, 7), c(cfg, 8);
  CHECK(a.params().checksum() == b.params().checksum());
  CHECK(a.params().checksum() != c.params().checksum());
  const auto ra = run_sample(a, data.samples[0], {}, false);
  const auto rb = run_sample(b, data.samples[0], {}, false);
  CHECK(ra.prediction.output.item() == rb.prediction.output.item());
}

TEST_CASE("forward errors name the failing stage") {
  const auto data = generate_synthetic<double>(tiny_spec(TaskKind::open_ended));
  const Model<double> model(tiny_config(data), 4);
  const auto& s = data.samples[0];
  try {
    (void)full_forward(model, T2::zeros({6, 5}), s.motion, s.question, {});
    FAIL("expected ForwardError");
  } catch (const ForwardError& e) {
    CHECK(e.stage() == "input");
    CHECK(std::string(e.what()).find("appearance features") != std::string::npos);
  }
  auto bad = s.question;
  bad.edges.push_back({9, 0, "dep"});
  try {
    (void)full_forward(model, s.appearance, s.motion, bad, {});
    FAIL("expected ForwardError");
  } catch (const ForwardError& e) {
    CHECK(e.stage() == "question graph");
  }
}

TEST_CASE("ablation names round trip") {
  CHECK(all_ablations().size() == 10);
  for (auto a : all_ablations()) CHECK(parse_ablation(ablation_name(a)) == a);
  CHECK_THROWS(parse_ablation("no-such-thing"));
}

TEST_CASE("end-to-end gradient matches finite differences for one parameter") {
  const auto data = generate_synthetic<double>(tiny_spec(TaskKind::open_ended));
  Model<double> model(tiny_config(data), 5);
  auto w = model.params().get("W_g^v.0");
  const auto& s = data.samples[2];
  const auto loss = [&] { return run_sample(model, s, {}, true).loss; };
  model.params().zero_grads();
  backward(loss());
  const auto analytic = w.grad_tensor();
  double worst = 0;
  for (std::size_t i = 0; i < w.numel(); i += 7) {
    const double keep = w.data()[i];
    w.mutable_data()[i] = keep + 1e-5;
    const double up = loss().item();
    w.mutable_data()[i] = keep - 1e-5;
    const double down = loss().item();
    w.mutable_data()[i] = keep;
    worst = std::max(worst, test::rel_error(analytic.at(i), (up - down) / 2e-5, 1e-6));
  }
  CHECK(worst < 1e-4);
}
