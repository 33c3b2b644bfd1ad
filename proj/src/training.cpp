#include "bta/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <thread>

#include "bta/synthetic.hpp"

namespace bta {

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (!(learning_rate > 0)) throw std::invalid_argument("train config: learning rate must be > 0");
  if (decay_every < 1) throw std::invalid_argument("train config: decay_every must be >= 1");
  if (!std::isfinite(lambda)) throw std::invalid_argument("train config: lambda must be finite");
}

double lr_schedule(std::size_t epoch, const TrainConfig& config) {
  const auto halvings = static_cast<double>(epoch / config.decay_every);
  return config.learning_rate * std::pow(config.decay_factor, halvings);
}

template <typename T>
void AdamState<T>::reset(const ParamStore<T>& params) {
  step = 0;
  first_moment.clear();
  second_moment.clear();
  for (const auto& e : params.entries()) {
    first_moment.emplace_back(e.value.numel(), T(0));
    second_moment.emplace_back(e.value.numel(), T(0));
  }
}

template <typename T>
void optimizer_step(ParamStore<T>& params, AdamState<T>& state, double learning_rate) {
  auto& entries = params.entries();
  if (state.first_moment.size() != entries.size()) state.reset(params);
  for (const auto& e : entries) {
    if (!e.value.has_grad()) continue;
    for (auto g : e.value.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + e.name + "'");
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t p = 0; p < entries.size(); ++p) {
    auto& value = entries[p].value;
    if (!value.has_grad()) continue;
    auto data = value.mutable_data();
    auto grad = value.grad();
    auto& m = state.first_moment[p];
    auto& v = state.second_moment[p];
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = static_cast<double>(grad[i]);
      const double mi = state.beta1 * static_cast<double>(m[i]) + (1.0 - state.beta1) * g;
      const double vi = state.beta2 * static_cast<double>(v[i]) + (1.0 - state.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = learning_rate * (mi / c1) / (std::sqrt(vi / c2) + state.epsilon);
      data[i] = static_cast<T>(static_cast<double>(data[i]) - update);
    }
  }
}

namespace {

std::vector<std::size_t> epoch_order(std::size_t n, const TrainConfig& config, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (config.shuffle) {
    Rng rng(config.seed * 0x9E3779B97F4A7C15ULL + epoch + 1);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  }
  return order;
}

template <typename T>
void check_task(const Model<T>& model, const Dataset<T>& dataset) {
  if (model.config().task != dataset.task()) {
    throw std::invalid_argument("dataset task " + task_name(dataset.task()) +
                                " does not match model task " + task_name(model.config().task));
  }
  if (dataset.samples.empty()) throw std::invalid_argument("dataset '" + dataset.name + "' is empty");
}

}  // namespace

template <typename T>
double train_epoch(Model<T>& model, const Dataset<T>& dataset, const TrainConfig& config,
                   AdamState<T>& state, std::size_t epoch) {
  check_task(model, dataset);
  const auto forward = config.forward();
  const auto order = epoch_order(dataset.samples.size(), config, epoch);
  const double lr = lr_schedule(epoch, config);
  double total = 0.0;
  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    const std::size_t end = std::min(order.size(), start + config.batch_size);
    const T inv_batch = T(1) / static_cast<T>(end - start);
    model.params().zero_grads();
    for (std::size_t b = start; b < end; ++b) {
      const auto& sample = dataset.samples[order[b]];
      auto ev = run_sample(model, sample, forward, true);
      const double value = static_cast<double>(ev.loss.item());
      if (!std::isfinite(value)) throw NumericError("non-finite loss on sample '" + sample.id + "'");
      total += value;
      backward(scale(ev.loss, inv_batch));
    }
    optimizer_step(model.params(), state, lr);
  }
  return total / static_cast<double>(order.size());
}

template <typename T>
Metric evaluate(const Model<T>& model, const Dataset<T>& dataset, const ForwardConfig& config,
                std::size_t threads) {
  check_task(model, dataset);
  const std::size_t n = dataset.samples.size();
  std::vector<long> answers(n);
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < n; i += stride)
      answers[i] = run_sample(model, dataset.samples[i], config, false).prediction.answer;
  };
  threads = std::clamp<std::size_t>(threads, 1, n);
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          work(t, threads);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  Metric m;
  if (dataset.task() == TaskKind::count) {
    double se = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = static_cast<double>(answers[i] - dataset.samples[i].answer);
      se += d * d;
    }
    m.name = "mse";
    m.value = se / static_cast<double>(n);
  } else {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += answers[i] == dataset.samples[i].answer;
    m.name = "accuracy";
    m.value = static_cast<double>(correct) / static_cast<double>(n);
  }
  return m;
}

std::size_t thread_budget() {
  if (const char* env = std::getenv("BTA_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

template <typename T>
TrainReport train(Model<T>& model, AdamState<T>& state, const Dataset<T>& training,
                  const std::type_identity_t<Dataset<T>>* validation, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (state.first_moment.size() != model.params().size()) state.reset(model.params());
  const auto start = std::chrono::steady_clock::now();
  const auto& eval_set = validation ? *validation : training;
  const auto forward = config.forward();
  const std::size_t threads = thread_budget();

  TrainReport report;
  Metric best;
  std::vector<std::vector<T>> snapshot;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double loss = train_epoch(model, training, config, state, epoch);
    const Metric metric = evaluate(model, eval_set, forward, threads);
    report.epoch_loss.push_back(loss);
    report.epoch_metric.push_back(metric.value);
    report.metric_name = metric.name;
    if (epoch == 0 || best.improved_by(metric)) {
      best = metric;
      report.best_epoch = epoch;
      snapshot.clear();
      for (const auto& e : model.params().entries())
        snapshot.emplace_back(e.value.data().begin(), e.value.data().end());
    }
    if (on_epoch) on_epoch(epoch, loss, metric);
  }
  report.best_metric = best.value;
  if (config.keep_best) {
    auto& entries = model.params().entries();
    for (std::size_t p = 0; p < entries.size(); ++p) {
      auto dst = entries[p].value.mutable_data();
      std::copy(snapshot[p].begin(), snapshot[p].end(), dst.begin());
    }
  }
  report.parameter_checksum = model.params().checksum();
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

GradCheckReport gradient_check_model(TaskKind task, const GradCheckOptions& options) {
  GradCheckReport report;
  report.task = task;
  if (options.frames % options.clips != 0) {
    throw std::invalid_argument("grad check: frames must be a multiple of clips");
  }
  ForwardConfig forward{options.lambda, Pathway::from(options.ablations)};

  for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
    const std::uint64_t seed = options.seed + attempt;
    ModelConfig mc;
    mc.task = task;
    mc.feature_dim = options.feature_dim;
    mc.embed_dim = options.embed_dim;
    mc.model_dim = options.model_dim;
    mc.fused_dim = options.model_dim / 2;
    mc.num_labels = 4;
    mc.num_candidates = options.candidates;
    mc.count_min = 1;
    mc.count_max = static_cast<long>(options.clips);
    Model<double> model(mc, seed);

    SyntheticSpec spec;
    spec.task = task;
    spec.seed = seed;
    spec.samples = 1;
    spec.clips = options.clips;
    spec.frames_per_clip = options.frames / options.clips;
    spec.tokens = options.tokens;
    spec.feature_dim = options.feature_dim;
    spec.embed_dim = options.embed_dim;
    spec.num_labels = mc.num_labels;
    spec.num_candidates = options.candidates;
    spec.candidate_tokens = options.candidate_tokens;
    spec.count_max = mc.count_max;
    spec.noise = 0.5;
    const auto sample = generate_synthetic<double>(spec).samples.at(0);

    Tensor<double> loss;
    double margin = 0.0;
    {
      KinkProbe probe;
      loss = run_sample(model, sample, forward, true).loss;
      margin = probe.min_margin();
    }
    if (margin < options.min_kink_margin) continue;

    model.params().zero_grads();
    backward(loss);
    auto loss_at = [&]() { return run_sample(model, sample, forward, true).loss.item(); };

    report.seed = seed;
    report.kink_margin = margin;
    report.groups.clear();
    report.failures.clear();
    report.max_relative_error = 0.0;
    for (auto& entry : model.params().entries()) {
      const auto analytic = entry.value.grad_tensor();
      const auto numeric = finite_difference_inplace<double>(loss_at, entry.value, options.step);
      GradCheckGroup g{entry.name, 0.0, 0.0};
      for (std::size_t i = 0; i < numeric.size(); ++i) {
        const double a = analytic.at(i), n = numeric[i];
        const double denom = std::max({std::abs(a), std::abs(n), options.relative_floor});
        g.max_relative_error = std::max(g.max_relative_error, std::abs(a - n) / denom);
        g.max_abs_gradient = std::max(g.max_abs_gradient, std::abs(a));
      }
      report.max_relative_error = std::max(report.max_relative_error, g.max_relative_error);
      if (g.max_relative_error > options.tolerance) report.failures.push_back(entry.name);
      report.groups.push_back(g);
    }
    report.passed = report.failures.empty();
    return report;
  }
  report.failures.push_back("no sample point away from relu kinks was found");
  return report;
}

template struct AdamState<float>;
template struct AdamState<double>;
template void optimizer_step(ParamStore<float>&, AdamState<float>&, double);
template void optimizer_step(ParamStore<double>&, AdamState<double>&, double);
template double train_epoch(Model<float>&, const Dataset<float>&, const TrainConfig&,
                            AdamState<float>&, std::size_t);
template double train_epoch(Model<double>&, const Dataset<double>&, const TrainConfig&,
                            AdamState<double>&, std::size_t);
template Metric evaluate(const Model<float>&, const Dataset<float>&, const ForwardConfig&,
                         std::size_t);
template Metric evaluate(const Model<double>&, const Dataset<double>&, const ForwardConfig&,
                         std::size_t);
template TrainReport train(Model<float>&, AdamState<float>&, const Dataset<float>&,
                           const Dataset<float>*, const TrainConfig&, const EpochCallback&);
template TrainReport train(Model<double>&, AdamState<double>&, const Dataset<double>&,
                           const Dataset<double>*, const TrainConfig&, const EpochCallback&);

}  // namespace bta
