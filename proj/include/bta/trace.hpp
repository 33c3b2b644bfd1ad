#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "bta/interactions.hpp"

namespace bta {

/// One interaction matrix as written to a trace dump.
struct TraceMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::string row_nodes;  // "frames", "clips" or "tokens"
  std::string col_nodes;
  std::vector<double> values;  // row-major
  std::vector<std::size_t> row_argmax;
  std::vector<double> row_max;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

struct TraceDump {
  std::string sample_id;
  double lambda = 0.0;
  std::vector<std::string> frames;
  std::vector<std::string> clips;
  std::vector<std::string> tokens;
  std::map<std::string, TraceMatrix> matrices;
};

/// Node sets of each trace key as {row set, column set}.
std::pair<std::string, std::string> trace_node_sets(const std::string& key);

/// Row argmax breaks ties toward the lowest column.
template <typename T>
TraceDump summarize_trace(const InteractionTrace<T>& trace, const std::string& sample_id, double lambda);

void write_trace_dump(const TraceDump& dump, const std::filesystem::path& path);
TraceDump load_trace_dump(const std::filesystem::path& path);

template <typename T>
void dump_interaction_trace(const InteractionTrace<T>& trace, const std::string& sample_id, double lambda,
                            const std::filesystem::path& path) {
  write_trace_dump(summarize_trace(trace, sample_id, lambda), path);
}

}  // namespace bta
