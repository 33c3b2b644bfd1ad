#include "bta/trace.hpp"

#include <fstream>

#include <json.hpp>

#include "bta/tensor_file.hpp"

namespace bta {

using nlohmann::json;

std::pair<std::string, std::string> trace_node_sets(const std::string& key) {
  if (key == "S^v" || key == "S_b^v") return {"frames", "tokens"};
  if (key == "S^m" || key == "S_b^m") return {"clips", "tokens"};
  if (key == "bridge^m") return {"tokens", "clips"};
  if (key == "bridge^v") return {"tokens", "frames"};
  if (key == "S_wob^v") return {"frames", "clips"};
  if (key == "S_wob^m") return {"clips", "frames"};
  throw std::invalid_argument("unknown interaction key '" + key + "'");
}

template <typename T>
TraceDump summarize_trace(const InteractionTrace<T>& trace, const std::string& sample_id, double lambda) {
  TraceDump d;
  d.sample_id = sample_id;
  d.lambda = lambda;
  d.frames = trace.frame_labels;
  d.clips = trace.clip_labels;
  d.tokens = trace.token_labels;
  for (const auto& [key, t] : trace.matrices) {
    TraceMatrix m;
    m.rows = t.dim(0);
    m.cols = t.dim(1);
    std::tie(m.row_nodes, m.col_nodes) = trace_node_sets(key);
    m.values.assign(t.data().begin(), t.data().end());
    for (std::size_t r = 0; r < m.rows; ++r) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < m.cols; ++c)
        if (m.at(r, c) > m.at(r, best)) best = c;
      m.row_argmax.push_back(best);
      m.row_max.push_back(m.cols ? m.at(r, best) : 0.0);
    }
    d.matrices.emplace(key, std::move(m));
  }
  return d;
}

void write_trace_dump(const TraceDump& d, const std::filesystem::path& path) {
  json doc;
  doc["sample_id"] = d.sample_id;
  doc["lambda"] = d.lambda;
  doc["nodes"] = {{"frames", d.frames}, {"clips", d.clips}, {"tokens", d.tokens}};
  json mats = json::object();
  for (const auto& [key, m] : d.matrices) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows; ++r) {
      rows.push_back(std::vector<double>(m.values.begin() + static_cast<std::ptrdiff_t>(r * m.cols),
                                         m.values.begin() + static_cast<std::ptrdiff_t>((r + 1) * m.cols)));
    }
    mats[key] = {{"rows", m.rows},           {"cols", m.cols},
                 {"row_nodes", m.row_nodes}, {"col_nodes", m.col_nodes},
                 {"values", rows},           {"row_argmax", m.row_argmax},
                 {"row_max", m.row_max}};
  }
  doc["matrices"] = std::move(mats);
  atomic_write(path, doc.dump(1) + "\n");
}

TraceDump load_trace_dump(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open trace '" + path.string() + "'");
  TraceDump d;
  try {
    const auto doc = json::parse(is);
    d.sample_id = doc.at("sample_id").get<std::string>();
    d.lambda = doc.at("lambda").get<double>();
    d.frames = doc.at("nodes").at("frames").get<std::vector<std::string>>();
    d.clips = doc.at("nodes").at("clips").get<std::vector<std::string>>();
    d.tokens = doc.at("nodes").at("tokens").get<std::vector<std::string>>();
    for (const auto& [key, jm] : doc.at("matrices").items()) {
      TraceMatrix m;
      m.rows = jm.at("rows").get<std::size_t>();
      m.cols = jm.at("cols").get<std::size_t>();
      m.row_nodes = jm.at("row_nodes").get<std::string>();
      m.col_nodes = jm.at("col_nodes").get<std::string>();
      for (const auto& row : jm.at("values")) {
        const auto v = row.get<std::vector<double>>();
        if (v.size() != m.cols) throw FormatError("trace matrix '" + key + "' has a ragged row");
        m.values.insert(m.values.end(), v.begin(), v.end());
      }
      if (m.values.size() != m.rows * m.cols) throw FormatError("trace matrix '" + key + "' has the wrong row count");
      m.row_argmax = jm.at("row_argmax").get<std::vector<std::size_t>>();
      m.row_max = jm.at("row_max").get<std::vector<double>>();
      d.matrices.emplace(key, std::move(m));
    }
  } catch (const json::exception& e) {
    throw FormatError("trace '" + path.string() + "': " + e.what());
  }
  return d;
}

template TraceDump summarize_trace(const InteractionTrace<float>&, const std::string&, double);
template TraceDump summarize_trace(const InteractionTrace<double>&, const std::string&, double);

}  // namespace bta
