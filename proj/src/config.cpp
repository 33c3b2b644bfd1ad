#include "bta/config.hpp"

#include <fstream>
#include <set>

namespace bta {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename V>
void read(const json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

std::string resolve(const std::string& p, const fs::path& base) {
  if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
  return (base / p).lexically_normal().string();
}

}  // namespace

json to_json(const ModelConfig& c) {
  return {{"task", task_name(c.task)},         {"feature_dim", c.feature_dim},
          {"embed_dim", c.embed_dim},          {"model_dim", c.model_dim},
          {"fused_dim", c.fused_dim},          {"gcn_layers", c.gcn_layers},
          {"num_labels", c.num_labels},        {"num_candidates", c.num_candidates},
          {"count_min", c.count_min},          {"count_max", c.count_max}};
}

json to_json(const TrainConfig& c) {
  json ablations = json::array();
  for (auto a : c.ablations) ablations.push_back(ablation_name(a));
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"decay_factor", c.decay_factor},
          {"decay_every", c.decay_every},
          {"lambda", c.lambda},
          {"ablations", ablations},
          {"seed", c.seed},
          {"precision", precision_name(c.precision)},
          {"shuffle", c.shuffle},
          {"keep_best", c.keep_best}};
}

json to_json(const SyntheticSpec& s) {
  return {{"task", task_name(s.task)},
          {"seed", s.seed},
          {"samples", s.samples},
          {"clips", s.clips},
          {"frames_per_clip", s.frames_per_clip},
          {"tokens", s.tokens},
          {"feature_dim", s.feature_dim},
          {"embed_dim", s.embed_dim},
          {"num_labels", s.num_labels},
          {"num_candidates", s.num_candidates},
          {"candidate_tokens", s.candidate_tokens},
          {"count_max", s.count_max},
          {"noise", s.noise}};
}

json to_json(const RunConfig& c) {
  return {{"model", to_json(c.model)},
          {"train", to_json(c.train)},
          {"synthetic", to_json(c.synthetic)},
          {"train_manifest", c.train_manifest},
          {"eval_manifest", c.eval_manifest},
          {"checkpoint", c.checkpoint},
          {"out", c.out}};
}

ModelConfig model_config_from_json(const json& j, ModelConfig c) {
  const std::string where = "model";
  reject_unknown(j, {"task", "feature_dim", "embed_dim", "model_dim", "fused_dim", "gcn_layers", "num_labels",
                     "num_candidates", "count_min", "count_max"},
                 where);
  if (j.contains("task")) {
    std::string task;
    read(j, "task", task, where);
    try {
      c.task = parse_task(task);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  read(j, "feature_dim", c.feature_dim, where);
  read(j, "embed_dim", c.embed_dim, where);
  read(j, "model_dim", c.model_dim, where);
  read(j, "fused_dim", c.fused_dim, where);
  read(j, "gcn_layers", c.gcn_layers, where);
  read(j, "num_labels", c.num_labels, where);
  read(j, "num_candidates", c.num_candidates, where);
  read(j, "count_min", c.count_min, where);
  read(j, "count_max", c.count_max, where);
  return c;
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  const std::string where = "train";
  reject_unknown(j, {"epochs", "batch_size", "learning_rate", "decay_factor", "decay_every", "lambda", "ablations",
                     "seed", "precision", "shuffle", "keep_best"},
                 where);
  read(j, "epochs", c.epochs, where);
  read(j, "batch_size", c.batch_size, where);
  read(j, "learning_rate", c.learning_rate, where);
  read(j, "decay_factor", c.decay_factor, where);
  read(j, "decay_every", c.decay_every, where);
  read(j, "lambda", c.lambda, where);
  read(j, "seed", c.seed, where);
  read(j, "shuffle", c.shuffle, where);
  read(j, "keep_best", c.keep_best, where);
  try {
    if (j.contains("ablations")) {
      std::vector<std::string> names;
      read(j, "ablations", names, where);
      c.ablations.clear();
      for (const auto& n : names) c.ablations.push_back(parse_ablation(n));
    }
    if (j.contains("precision")) {
      std::string p;
      read(j, "precision", p, where);
      c.precision = parse_precision(p);
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

SyntheticSpec synthetic_spec_from_json(const json& j, SyntheticSpec s) {
  const std::string where = "synthetic";
  reject_unknown(j, {"task", "seed", "samples", "clips", "frames_per_clip", "tokens", "feature_dim", "embed_dim",
                     "num_labels", "num_candidates", "candidate_tokens", "count_max", "noise"},
                 where);
  if (j.contains("task")) {
    std::string task;
    read(j, "task", task, where);
    try {
      s.task = parse_task(task);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  read(j, "seed", s.seed, where);
  read(j, "samples", s.samples, where);
  read(j, "clips", s.clips, where);
  read(j, "frames_per_clip", s.frames_per_clip, where);
  read(j, "tokens", s.tokens, where);
  read(j, "feature_dim", s.feature_dim, where);
  read(j, "embed_dim", s.embed_dim, where);
  read(j, "num_labels", s.num_labels, where);
  read(j, "num_candidates", s.num_candidates, where);
  read(j, "candidate_tokens", s.candidate_tokens, where);
  read(j, "count_max", s.count_max, where);
  read(j, "noise", s.noise, where);
  return s;
}

RunConfig run_config_from_json(const json& j, const fs::path& base_dir) {
  reject_unknown(j, {"model", "train", "synthetic", "train_manifest", "eval_manifest", "checkpoint", "out"}, "config");
  RunConfig c;
  if (j.contains("model")) c.model = model_config_from_json(j["model"]);
  if (j.contains("train")) c.train = train_config_from_json(j["train"]);
  if (j.contains("synthetic")) c.synthetic = synthetic_spec_from_json(j["synthetic"]);
  read(j, "train_manifest", c.train_manifest, "config");
  read(j, "eval_manifest", c.eval_manifest, "config");
  read(j, "checkpoint", c.checkpoint, "config");
  read(j, "out", c.out, "config");
  c.train_manifest = resolve(c.train_manifest, base_dir);
  c.eval_manifest = resolve(c.eval_manifest, base_dir);
  c.checkpoint = resolve(c.checkpoint, base_dir);
  c.out = resolve(c.out, base_dir);
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

template <typename T>
void adopt_dataset_shape(ModelConfig& c, const Dataset<T>& ds) {
  c.task = ds.task();
  c.feature_dim = ds.feature_dim;
  c.embed_dim = ds.embed_dim;
  switch (ds.task()) {
    case TaskKind::open_ended: c.num_labels = ds.answers.labels.size(); break;
    case TaskKind::count:
      c.count_min = ds.answers.count_min;
      c.count_max = ds.answers.count_max;
      break;
    case TaskKind::multi_choice: c.num_candidates = ds.answers.num_candidates; break;
  }
}

template void adopt_dataset_shape(ModelConfig&, const Dataset<float>&);
template void adopt_dataset_shape(ModelConfig&, const Dataset<double>&);

}  // namespace bta
