#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "bta/dataset.hpp"
#include "bta/model.hpp"

namespace bta {

struct TrainConfig {
  std::size_t epochs = 25;
  std::size_t batch_size = 16;
  double learning_rate = 1e-4;
  double decay_factor = 0.5;
  std::size_t decay_every = 5;
  double lambda = 10.0;
  std::vector<Ablation> ablations;
  std::uint64_t seed = 0;
  Precision precision = Precision::f32;
  bool shuffle = true;
  /// Restore the parameters of the epoch with the best evaluation metric.
  bool keep_best = true;

  void validate() const;
  ForwardConfig forward() const { return {lambda, Pathway::from(ablations)}; }
  bool operator==(const TrainConfig&) const = default;
};

/// lr · decay^⌊epoch / decay_every⌋
double lr_schedule(std::size_t epoch, const TrainConfig& config);

/// Adaptive-moment optimizer state, one slot per parameter in store order.
template <typename T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;

  void reset(const ParamStore<T>& params);
};

template <typename T>
void optimizer_step(ParamStore<T>& params, AdamState<T>& state, double learning_rate);

struct Metric {
  std::string name;  // "accuracy" or "mse"
  double value = 0.0;

  /// Whether `other` is an improvement over this value.
  bool improved_by(const Metric& other) const {
    return name == "mse" ? other.value < value : other.value > value;
  }
};

/// One pass over the dataset in seed-determined batches; per-sample forward
/// passes accumulate gradients and the optimizer steps once per batch.
/// Returns the mean per-sample loss.
template <typename T>
double train_epoch(Model<T>& model, const Dataset<T>& dataset, const TrainConfig& config,
                   AdamState<T>& state, std::size_t epoch);

/// Accuracy (open-ended, multi-choice) or MSE of rounded counts. Read-only on
/// the model; `threads` > 1 evaluates samples in parallel.
template <typename T>
Metric evaluate(const Model<T>& model, const Dataset<T>& dataset, const ForwardConfig& config,
                std::size_t threads = 1);

struct TrainReport {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_metric;
  std::string metric_name;
  std::size_t best_epoch = 0;
  double best_metric = 0.0;
  double wall_seconds = 0.0;
  std::uint64_t parameter_checksum = 0;
};

using EpochCallback = std::function<void(std::size_t epoch, double loss, const Metric& metric)>;

/// Full schedule. The metric is computed on `validation` when given, else on
/// the training set.
template <typename T>
TrainReport train(Model<T>& model, AdamState<T>& state, const Dataset<T>& training,
                  const std::type_identity_t<Dataset<T>>* validation, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Evaluation parallelism from BTA_THREADS (default: hardware concurrency).
std::size_t thread_budget();

struct GradCheckGroup {
  std::string parameter;
  double max_relative_error = 0.0;
  double max_abs_gradient = 0.0;
};

struct GradCheckReport {
  TaskKind task = TaskKind::open_ended;
  std::vector<GradCheckGroup> groups;
  double max_relative_error = 0.0;
  double kink_margin = 0.0;
  std::uint64_t seed = 0;
  bool passed = false;
  std::vector<std::string> failures;
};

struct GradCheckOptions {
  std::size_t frames = 8;
  std::size_t clips = 2;
  std::size_t tokens = 5;
  std::size_t model_dim = 16;
  std::size_t feature_dim = 6;
  std::size_t embed_dim = 6;
  std::size_t candidates = 3;
  std::size_t candidate_tokens = 2;
  double lambda = 10.0;
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Elementwise error is |a - n| / max(|a|, |n|, floor).
  double relative_floor = 1e-6;
  /// Points whose relu inputs come closer to zero than this are re-drawn.
  double min_kink_margin = 1e-5;
  std::vector<Ablation> ablations;
  std::uint64_t seed = 1;
};

/// Compares backward() against central finite differences for every
/// parameter of a tiny 64-bit model with the given task head.
GradCheckReport gradient_check_model(TaskKind task, const GradCheckOptions& options = {});

}  // namespace bta
