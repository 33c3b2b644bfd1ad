// bta: dataset generation, training, evaluation, inference and interaction dumps.
//
// Exit codes: 0 success, 1 usage, 2 validation, 3 numeric failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "bta/checkpoint.hpp"
#include "bta/config.hpp"
#include "bta/manifest.hpp"
#include "bta/trace.hpp"

namespace fs = std::filesystem;
using namespace bta;

namespace {

enum Exit { kOk = 0, kUsage = 1, kValidation = 2, kNumeric = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
  std::optional<std::size_t> epochs;
  std::vector<std::string> ablate;
  std::string out;
  std::string checkpoint;
  std::string sample_id;
  std::string precision;
  std::string task;
};

RunConfig resolve(const Options& o) {
  RunConfig rc = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.seed) {
    rc.train.seed = *o.seed;
    rc.synthetic.seed = *o.seed;
  }
  if (o.lambda) rc.train.lambda = *o.lambda;
  if (o.epochs) rc.train.epochs = *o.epochs;
  try {
    if (!o.ablate.empty()) {
      rc.train.ablations.clear();
      for (const auto& a : o.ablate) rc.train.ablations.push_back(parse_ablation(a));
    }
    if (!o.precision.empty()) rc.train.precision = parse_precision(o.precision);
    if (!o.task.empty()) rc.synthetic.task = parse_task(o.task);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (!o.out.empty()) rc.out = o.out;
  if (!o.checkpoint.empty()) rc.checkpoint = o.checkpoint;
  return rc;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

int cmd_gen_synth(const Options& o) {
  const auto rc = resolve(o);
  if (rc.out.empty()) throw UsageError("gen-synth needs --out <dir>");
  const auto manifest = write_synthetic_dataset(rc.synthetic, rc.out);
  std::cout << manifest.string() << "\n";
  return kOk;
}

template <typename T>
int train_as(const RunConfig& rc) {
  if (rc.train_manifest.empty()) throw UsageError("train needs train_manifest in the config");
  const auto training = load_manifest<T>(rc.train_manifest);
  std::optional<Dataset<T>> validation;
  if (!rc.eval_manifest.empty()) validation = load_manifest<T>(rc.eval_manifest);

  ModelConfig mc = rc.model;
  adopt_dataset_shape(mc, training);
  mc.validate();
  rc.train.validate();

  Model<T> model(mc, rc.train.seed);
  AdamState<T> state;
  const auto report = train(model, state, training, validation ? &*validation : nullptr, rc.train,
                            [](std::size_t epoch, double loss, const Metric& m) {
                              std::cout << "epoch " << epoch + 1 << " loss " << fixed(loss, 6) << " " << m.name
                                        << " " << fixed(m.value) << "\n";
                            });

  const fs::path out = rc.out.empty() ? fs::path(".") : fs::path(rc.out);
  fs::create_directories(out);
  const fs::path ckpt = rc.checkpoint.empty() ? out / "checkpoint.btac" : fs::path(rc.checkpoint);
  save_checkpoint(ckpt, model, state, rc.train);

  // Wall time goes to stderr so the report file is reproducible.
  nlohmann::json j;
  j["epochs"] = rc.train.epochs;
  j["epoch_loss"] = report.epoch_loss;
  j["epoch_metric"] = report.epoch_metric;
  j["metric"] = report.metric_name;
  j["best_epoch"] = report.best_epoch;
  j["best_metric"] = report.best_metric;
  j["parameter_checksum"] = report.parameter_checksum;
  j["config"] = to_json(rc.train);
  j["model"] = to_json(mc);
  atomic_write(out / "report.json", j.dump(2) + "\n");
  std::cerr << "trained " << rc.train.epochs << " epochs in " << fixed(report.wall_seconds, 2) << " s; checkpoint "
            << ckpt.string() << "\n";
  return kOk;
}

int cmd_train(const Options& o) {
  const auto rc = resolve(o);
  return rc.train.precision == Precision::f64 ? train_as<double>(rc) : train_as<float>(rc);
}

template <typename T>
struct Loaded {
  Model<T> model;
  Dataset<T> data;
  ForwardConfig forward;
};

// Rebuilds the model recorded in the checkpoint and checks the dataset fits it.
template <typename T>
Loaded<T> load_for_inference(const RunConfig& rc, const Options& o, const CheckpointHeader& header) {
  const std::string manifest = !rc.eval_manifest.empty() ? rc.eval_manifest : rc.train_manifest;
  if (manifest.empty()) throw UsageError("no eval_manifest or train_manifest in the config");
  auto data = load_manifest<T>(manifest);
  ModelConfig expected = header.model;
  adopt_dataset_shape(expected, data);
  if (!(expected == header.model)) {
    throw CheckpointMismatchError("dataset '" + data.name + "' does not fit the checkpoint architecture " +
                                  to_json(header.model).dump());
  }
  Model<T> model(header.model, 0);
  load_checkpoint<T>(rc.checkpoint, model, nullptr);
  TrainConfig tc = header.train;
  if (o.lambda) tc.lambda = *o.lambda;
  if (!o.ablate.empty()) tc.ablations = rc.train.ablations;
  return {std::move(model), std::move(data), tc.forward()};
}

CheckpointHeader checkpoint_header(const RunConfig& rc) {
  if (rc.checkpoint.empty()) throw UsageError("missing --checkpoint");
  if (!fs::exists(rc.checkpoint)) throw IoError("checkpoint '" + rc.checkpoint + "' not found");
  return read_checkpoint_header(rc.checkpoint);
}

template <typename T>
int eval_as(const RunConfig& rc, const Options& o, const CheckpointHeader& h) {
  const auto l = load_for_inference<T>(rc, o, h);
  const auto m = evaluate(l.model, l.data, l.forward, thread_budget());
  std::cout << m.name << " " << fixed(m.value) << "\n";
  return kOk;
}

int cmd_eval(const Options& o) {
  const auto rc = resolve(o);
  const auto h = checkpoint_header(rc);
  return h.precision == Precision::f64 ? eval_as<double>(rc, o, h) : eval_as<float>(rc, o, h);
}

template <typename T>
void print_prediction(const Dataset<T>& data, const QASample<T>& s, const Prediction<T>& p) {
  std::cout << s.id << " " << p.answer;
  if (p.task == TaskKind::open_ended) {
    std::cout << " " << data.answers.labels.at(static_cast<std::size_t>(p.answer));
  } else if (p.task == TaskKind::multi_choice) {
    std::cout << " scores";
    for (auto v : p.output.data()) std::cout << " " << fixed(static_cast<double>(v), 6);
  }
  std::cout << "\n";
}

template <typename T>
int infer_as(const RunConfig& rc, const Options& o, const CheckpointHeader& h) {
  const auto l = load_for_inference<T>(rc, o, h);
  if (!o.sample_id.empty()) {
    const auto& s = l.data.find(o.sample_id);
    print_prediction(l.data, s, run_sample(l.model, s, l.forward, false).prediction);
    return kOk;
  }
  for (const auto& s : l.data.samples) print_prediction(l.data, s, run_sample(l.model, s, l.forward, false).prediction);
  return kOk;
}

int cmd_infer(const Options& o) {
  const auto rc = resolve(o);
  const auto h = checkpoint_header(rc);
  return h.precision == Precision::f64 ? infer_as<double>(rc, o, h) : infer_as<float>(rc, o, h);
}

template <typename T>
int dump_as(const RunConfig& rc, const Options& o, const CheckpointHeader& h) {
  if (o.sample_id.empty()) throw UsageError("dump-interactions needs --sample-id");
  if (rc.out.empty()) throw UsageError("dump-interactions needs --out <file>");
  const auto l = load_for_inference<T>(rc, o, h);
  const auto& s = l.data.find(o.sample_id);
  const auto ev = run_sample(l.model, s, l.forward, false);
  dump_interaction_trace(ev.question_pass.trace, s.id, l.forward.lambda, rc.out);
  std::cout << rc.out << "\n";
  return kOk;
}

int cmd_dump(const Options& o) {
  const auto rc = resolve(o);
  const auto h = checkpoint_header(rc);
  return h.precision == Precision::f64 ? dump_as<double>(rc, o, h) : dump_as<float>(rc, o, h);
}

int cmd_grad_check(const Options& o) {
  const auto rc = resolve(o);
  std::vector<TaskKind> tasks = {TaskKind::open_ended, TaskKind::count, TaskKind::multi_choice};
  if (!o.task.empty()) tasks = {parse_task(o.task)};
  GradCheckOptions opts;
  opts.lambda = rc.train.lambda;
  opts.ablations = rc.train.ablations;
  if (o.seed) opts.seed = *o.seed;
  bool ok = true;
  for (auto task : tasks) {
    const auto r = gradient_check_model(task, opts);
    for (const auto& g : r.groups) {
      std::cout << task_name(task) << " " << g.parameter << " " << g.max_relative_error << "\n";
    }
    std::cout << task_name(task) << " max " << r.max_relative_error << (r.passed ? " PASS" : " FAIL") << "\n";
    for (const auto& f : r.failures) std::cerr << "  " << f << "\n";
    ok = ok && r.passed;
  }
  return ok ? kOk : kNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bta: graph-bridged video question answering"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run configuration");
    sub->add_option("--seed", o.seed, "Random seed");
    sub->add_option("--lambda", o.lambda, "Affinity scaling factor");
    sub->add_option("--ablate", o.ablate, "Ablation (repeatable): no-appearance, no-motion, no-q2v-v2v, no-q2a, "
                                          "no-q2m, no-q2v, no-a2m, no-m2a, no-v2v, no-bridge");
    sub->add_option("--out", o.out, "Output directory or file");
  };

  auto* gen = app.add_subcommand("gen-synth", "Write a synthetic dataset");
  common(gen);
  gen->add_option("--task", o.task, "open_ended, count or multi_choice");

  auto* tr = app.add_subcommand("train", "Train and write checkpoint.btac + report.json");
  common(tr);
  tr->add_option("--epochs", o.epochs, "Number of epochs");
  tr->add_option("--checkpoint", o.checkpoint, "Checkpoint path");
  tr->add_option("--precision", o.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));

  auto* ev = app.add_subcommand("eval", "Print the accuracy or MSE of a checkpoint");
  common(ev);
  ev->add_option("--checkpoint", o.checkpoint, "Checkpoint path");

  auto* inf = app.add_subcommand("infer", "Print predicted answers");
  common(inf);
  inf->add_option("--checkpoint", o.checkpoint, "Checkpoint path");
  inf->add_option("--sample-id", o.sample_id, "Only this sample");

  auto* dump = app.add_subcommand("dump-interactions", "Write the interaction matrices of one sample");
  common(dump);
  dump->add_option("--checkpoint", o.checkpoint, "Checkpoint path");
  dump->add_option("--sample-id", o.sample_id, "Sample id");

  auto* gc = app.add_subcommand("grad-check", "Compare analytic and numeric gradients");
  common(gc);
  gc->add_option("--task", o.task, "Only this task head");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_gen_synth(o);
    if (*tr) return cmd_train(o);
    if (*ev) return cmd_eval(o);
    if (*inf) return cmd_infer(o);
    if (*dump) return cmd_dump(o);
    if (*gc) return cmd_grad_check(o);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    // Manifest, config, checkpoint and format problems, unknown sample ids.
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  }
  return kUsage;
}
