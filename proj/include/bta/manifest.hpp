#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "bta/dataset.hpp"

namespace bta {

enum class ManifestFault {
  syntax,          // not JSON, or a required field is missing / mistyped
  missing_file,    // a referenced tensor file does not exist or cannot be read
  shape_mismatch,  // tensor shape disagrees with the declared sizes
  empty_question,  // K = 0
  bad_edge,        // dependency index out of range, or a self-edge
  bad_answer,      // answer outside the declared answer space
  duplicate_id,
};

std::string fault_name(ManifestFault fault);

/// Raised by load_manifest; names the offending sample when there is one.
class ManifestError : public std::runtime_error {
 public:
  ManifestError(ManifestFault fault, std::string sample_id, const std::string& what);

  ManifestFault fault() const { return fault_; }
  const std::string& sample_id() const { return sample_id_; }

 private:
  ManifestFault fault_;
  std::string sample_id_;
};

/// Reads and eagerly validates every sample. Tensor paths are relative to the
/// manifest's directory.
template <typename T>
Dataset<T> load_manifest(const std::filesystem::path& path);

/// Writes the manifest and one tensor file per array under `dir`. Returns the
/// manifest path.
template <typename T>
std::filesystem::path write_manifest(const Dataset<T>& dataset, const std::filesystem::path& dir);

}  // namespace bta
