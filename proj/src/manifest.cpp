#include "bta/manifest.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "bta/tensor_file.hpp"

namespace bta {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fault_name(ManifestFault fault) {
  switch (fault) {
    case ManifestFault::syntax: return "syntax";
    case ManifestFault::missing_file: return "missing-file";
    case ManifestFault::shape_mismatch: return "shape-mismatch";
    case ManifestFault::empty_question: return "empty-question";
    case ManifestFault::bad_edge: return "bad-edge";
    case ManifestFault::bad_answer: return "bad-answer";
    case ManifestFault::duplicate_id: return "duplicate-id";
  }
  return "?";
}

ManifestError::ManifestError(ManifestFault fault, std::string sample_id, const std::string& what)
    : std::runtime_error(sample_id.empty() ? fault_name(fault) + ": " + what
                                           : "sample '" + sample_id + "': " + fault_name(fault) +
                                                 ": " + what),
      fault_(fault),
      sample_id_(std::move(sample_id)) {}

namespace {

struct Loader {
  fs::path root;
  std::string sample_id;

  [[noreturn]] void fail(ManifestFault fault, const std::string& what) const {
    throw ManifestError(fault, sample_id, what);
  }

  template <typename V>
  V field(const json& j, const char* key) const {
    if (!j.is_object() || !j.contains(key)) fail(ManifestFault::syntax, std::string("missing field '") + key + "'");
    try {
      return j.at(key).get<V>();
    } catch (const json::exception& e) {
      fail(ManifestFault::syntax, std::string("field '") + key + "': " + e.what());
    }
  }

  template <typename T>
  Tensor<T> tensor(const json& j, const char* key, std::size_t rows, std::size_t cols) const {
    const auto rel = field<std::string>(j, key);
    const auto path = root / rel;
    if (!fs::exists(path)) fail(ManifestFault::missing_file, std::string(key) + " file '" + rel + "' not found");
    Tensor<T> t;
    try {
      t = read_tensor_file<T>(path);
    } catch (const std::exception& e) {
      fail(ManifestFault::missing_file, std::string(key) + " file '" + rel + "': " + e.what());
    }
    if (t.shape() != Shape{rows, cols}) {
      fail(ManifestFault::shape_mismatch, std::string(key) + " is " + shape_str(t.shape()) + ", expected " +
                                              shape_str({rows, cols}));
    }
    return t;
  }

  template <typename T>
  QuestionInput<T> question(const json& j, std::size_t embed_dim, const std::string& what) const {
    QuestionInput<T> q;
    q.tokens = field<std::vector<std::string>>(j, "tokens");
    if (q.tokens.empty()) fail(ManifestFault::empty_question, what + " has no tokens");
    const std::size_t k = q.tokens.size();
    q.embeddings = tensor<T>(j, "embeddings", k, embed_dim);
    const auto edges = field<json>(j, "edges");
    if (!edges.is_array()) fail(ManifestFault::syntax, what + " edges must be an array");
    for (const auto& e : edges) {
      if (!e.is_array() || e.size() != 3 || !e[0].is_number_integer() || !e[1].is_number_integer() ||
          !e[2].is_string()) {
        fail(ManifestFault::syntax, what + " edge must be [head, dependent, relation]");
      }
      const auto head = e[0].get<long long>();
      const auto dep = e[1].get<long long>();
      if (head < 0 || dep < 0 || static_cast<std::size_t>(head) >= k || static_cast<std::size_t>(dep) >= k) {
        fail(ManifestFault::bad_edge, what + " edge (" + std::to_string(head) + ", " + std::to_string(dep) +
                                          ") out of range for K=" + std::to_string(k));
      }
      if (head == dep) fail(ManifestFault::bad_edge, what + " self-edge on token " + std::to_string(head));
      q.edges.push_back({static_cast<std::size_t>(head), static_cast<std::size_t>(dep), e[2].get<std::string>()});
    }
    return q;
  }
};

json edges_json(const std::vector<DependencyEdge>& edges) {
  json out = json::array();
  for (const auto& e : edges) out.push_back({e.head, e.dependent, e.relation});
  return out;
}

}  // namespace

template <typename T>
Dataset<T> load_manifest(const fs::path& path) {
  Loader ld{path.parent_path(), ""};
  json doc;
  {
    std::ifstream is(path);
    if (!is) throw ManifestError(ManifestFault::missing_file, "", "cannot open manifest '" + path.string() + "'");
    try {
      doc = json::parse(is);
    } catch (const json::parse_error& e) {
      throw ManifestError(ManifestFault::syntax, "", e.what());
    }
  }

  Dataset<T> ds;
  ds.name = ld.field<std::string>(doc, "name");
  try {
    ds.answers.task = parse_task(ld.field<std::string>(doc, "task"));
  } catch (const std::invalid_argument& e) {
    ld.fail(ManifestFault::syntax, e.what());
  }
  const auto space = ld.field<json>(doc, "answer_space");
  switch (ds.answers.task) {
    case TaskKind::open_ended:
      ds.answers.labels = ld.field<std::vector<std::string>>(space, "labels");
      if (ds.answers.labels.empty()) ld.fail(ManifestFault::syntax, "empty label vocabulary");
      break;
    case TaskKind::count:
      ds.answers.count_min = ld.field<long>(space, "count_min");
      ds.answers.count_max = ld.field<long>(space, "count_max");
      if (ds.answers.count_min > ds.answers.count_max) ld.fail(ManifestFault::syntax, "count_min > count_max");
      break;
    case TaskKind::multi_choice:
      ds.answers.num_candidates = ld.field<std::size_t>(space, "candidates");
      if (ds.answers.num_candidates == 0) ld.fail(ManifestFault::syntax, "zero candidates per question");
      break;
  }
  ds.clips = ld.field<std::size_t>(doc, "clips");
  ds.frames_per_clip = ld.field<std::size_t>(doc, "frames_per_clip");
  ds.feature_dim = ld.field<std::size_t>(doc, "feature_dim");
  ds.embed_dim = ld.field<std::size_t>(doc, "embed_dim");
  if (ds.clips == 0 || ds.frames_per_clip == 0 || ds.feature_dim == 0 || ds.embed_dim == 0) {
    ld.fail(ManifestFault::syntax, "clips, frames_per_clip, feature_dim and embed_dim must be positive");
  }

  const auto samples = ld.field<json>(doc, "samples");
  if (!samples.is_array()) ld.fail(ManifestFault::syntax, "samples must be an array");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& js = samples[i];
    ld.sample_id = "#" + std::to_string(i);
    QASample<T> s;
    s.id = ld.field<std::string>(js, "id");
    ld.sample_id = s.id;
    if (!seen.insert(s.id).second) ld.fail(ManifestFault::duplicate_id, "id appears twice");
    s.appearance = ld.tensor<T>(js, "appearance", ds.frames(), ds.feature_dim);
    s.motion = ld.tensor<T>(js, "motion", ds.clips, ds.feature_dim);
    s.question = ld.question<T>(js, ds.embed_dim, "question");
    s.answer = ld.field<long>(js, "answer");
    switch (ds.answers.task) {
      case TaskKind::open_ended:
        if (s.answer < 0 || static_cast<std::size_t>(s.answer) >= ds.answers.labels.size()) {
          ld.fail(ManifestFault::bad_answer, "label index " + std::to_string(s.answer) + " outside [0, " +
                                                 std::to_string(ds.answers.labels.size()) + ")");
        }
        break;
      case TaskKind::count:
        if (s.answer < ds.answers.count_min || s.answer > ds.answers.count_max) {
          ld.fail(ManifestFault::bad_answer, "count " + std::to_string(s.answer) + " outside [" +
                                                 std::to_string(ds.answers.count_min) + ", " +
                                                 std::to_string(ds.answers.count_max) + "]");
        }
        break;
      case TaskKind::multi_choice: {
        const auto cands = ld.field<json>(js, "candidates");
        if (!cands.is_array() || cands.size() != ds.answers.num_candidates) {
          ld.fail(ManifestFault::shape_mismatch, "expected " + std::to_string(ds.answers.num_candidates) +
                                                     " candidates");
        }
        for (std::size_t c = 0; c < cands.size(); ++c) {
          s.candidates.push_back(ld.question<T>(cands[c], ds.embed_dim, "candidate " + std::to_string(c)));
        }
        if (s.answer < 0 || static_cast<std::size_t>(s.answer) >= ds.answers.num_candidates) {
          ld.fail(ManifestFault::bad_answer, "candidate index " + std::to_string(s.answer) + " out of range");
        }
        break;
      }
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

template <typename T>
fs::path write_manifest(const Dataset<T>& ds, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "tensors", ec);
  if (ec) throw IoError("cannot create '" + (dir / "tensors").string() + "': " + ec.message());

  json doc;
  doc["name"] = ds.name;
  doc["task"] = task_name(ds.task());
  switch (ds.task()) {
    case TaskKind::open_ended: doc["answer_space"] = {{"labels", ds.answers.labels}}; break;
    case TaskKind::count:
      doc["answer_space"] = {{"count_min", ds.answers.count_min}, {"count_max", ds.answers.count_max}};
      break;
    case TaskKind::multi_choice: doc["answer_space"] = {{"candidates", ds.answers.num_candidates}}; break;
  }
  doc["clips"] = ds.clips;
  doc["frames_per_clip"] = ds.frames_per_clip;
  doc["feature_dim"] = ds.feature_dim;
  doc["embed_dim"] = ds.embed_dim;
  doc["samples"] = json::array();

  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    const std::string stem = "tensors/" + std::to_string(i);
    auto put = [&](const Tensor<T>& t, const std::string& suffix) {
      const std::string rel = stem + "." + suffix + ".btat";
      write_tensor_file(t, dir / rel);
      return rel;
    };
    json js;
    js["id"] = s.id;
    js["appearance"] = put(s.appearance, "appearance");
    js["motion"] = put(s.motion, "motion");
    js["tokens"] = s.question.tokens;
    js["embeddings"] = put(s.question.embeddings, "question");
    js["edges"] = edges_json(s.question.edges);
    js["answer"] = s.answer;
    if (ds.task() == TaskKind::multi_choice) {
      js["candidates"] = json::array();
      for (std::size_t c = 0; c < s.candidates.size(); ++c) {
        const auto& cand = s.candidates[c];
        js["candidates"].push_back({{"tokens", cand.tokens},
                                    {"embeddings", put(cand.embeddings, "candidate" + std::to_string(c))},
                                    {"edges", edges_json(cand.edges)}});
      }
    }
    doc["samples"].push_back(std::move(js));
  }
  const auto path = dir / "manifest.json";
  atomic_write(path, doc.dump(2) + "\n");
  return path;
}

template Dataset<float> load_manifest<float>(const fs::path&);
template Dataset<double> load_manifest<double>(const fs::path&);
template fs::path write_manifest(const Dataset<float>&, const fs::path&);
template fs::path write_manifest(const Dataset<double>&, const fs::path&);

}  // namespace bta
