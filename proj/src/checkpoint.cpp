#include "bta/checkpoint.hpp"

#include <cstring>
#include <unordered_map>

#include "bta/config.hpp"

namespace bta {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Parsed {
  CheckpointHeader header;
  json raw;
  std::size_t tensors_offset = 0;
};

Parsed parse_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw BadMagicError("not a checkpoint (bad magic)");
  }
  std::size_t offset = 4;
  const auto version = get_u16(bytes, offset);
  if (version != kCheckpointVersion) {
    throw VersionMismatchError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto length = get_u64(bytes, offset);
  if (length > bytes.size() - offset) throw TruncatedPayloadError("checkpoint header truncated");
  Parsed p;
  try {
    p.raw = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                        bytes.begin() + static_cast<std::ptrdiff_t>(offset + length));
    p.header.model = model_config_from_json(p.raw.at("model"));
    p.header.train = train_config_from_json(p.raw.at("train"));
    p.header.precision = parse_precision(p.raw.at("precision").get<std::string>());
    p.header.optimizer_step = p.raw.at("optimizer").at("step").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what());
  }
  p.tensors_offset = offset + length;
  return p;
}

}  // namespace

template <typename T>
void save_checkpoint(const fs::path& path, const Model<T>& model, const AdamState<T>& state,
                     const TrainConfig& train) {
  const auto& entries = model.params().entries();
  const bool has_state = state.first_moment.size() == entries.size();

  json header;
  header["model"] = to_json(model.config());
  header["train"] = to_json(train);
  header["precision"] = precision_name(sizeof(T) == 4 ? Precision::f32 : Precision::f64);
  header["optimizer"] = {{"kind", "adam"},
                         {"step", state.step},
                         {"beta1", state.beta1},
                         {"beta2", state.beta2},
                         {"epsilon", state.epsilon}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_u16(out, kCheckpointVersion);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  put_u32(out, static_cast<std::uint32_t>(entries.size() * 3));

  auto put = [&](const std::string& name, const Tensor<T>& t) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    append_tensor_record(out, t);
  };
  for (const auto& e : entries) put(e.name, e.value);
  for (int which = 0; which < 2; ++which) {
    const char* prefix = which == 0 ? "adam.m/" : "adam.v/";
    for (std::size_t p = 0; p < entries.size(); ++p) {
      const auto& shape = entries[p].value.shape();
      if (has_state) {
        const auto& moment = which == 0 ? state.first_moment[p] : state.second_moment[p];
        put(prefix + entries[p].name, Tensor<T>(shape, moment));
      } else {
        put(prefix + entries[p].name, Tensor<T>::zeros(shape));
      }
    }
  }
  atomic_write(path, out);
}

CheckpointHeader read_checkpoint_header(const fs::path& path) {
  return parse_header(read_file_bytes(path)).header;
}

template <typename T>
CheckpointHeader load_checkpoint(const fs::path& path, Model<T>& model, AdamState<T>* state) {
  const auto bytes = read_file_bytes(path);
  const auto parsed = parse_header(bytes);
  if (!(parsed.header.model == model.config())) {
    throw CheckpointMismatchError("checkpoint architecture " + to_json(parsed.header.model).dump() +
                                  " does not match model " + to_json(model.config()).dump());
  }
  std::size_t offset = parsed.tensors_offset;
  const auto count = get_u32(bytes, offset);
  std::unordered_map<std::string, Tensor<T>> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get_u32(bytes, offset);
    if (len > bytes.size() - offset) throw TruncatedPayloadError("checkpoint tensor name truncated");
    std::string name(reinterpret_cast<const char*>(bytes.data() + offset), len);
    offset += len;
    auto t = parse_tensor_record<T>(bytes, offset);
    if (!tensors.emplace(name, std::move(t)).second) {
      throw FormatError("checkpoint lists tensor '" + name + "' twice");
    }
  }
  if (offset != bytes.size()) throw FormatError("checkpoint has trailing bytes");

  auto& entries = model.params().entries();
  if (count != entries.size() * 3) {
    throw CheckpointMismatchError("checkpoint holds " + std::to_string(count) + " tensors, model needs " +
                                  std::to_string(entries.size() * 3));
  }
  auto fetch = [&](const std::string& name, const Shape& shape) -> const Tensor<T>& {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw CheckpointMismatchError("checkpoint is missing '" + name + "'");
    if (it->second.shape() != shape) {
      throw CheckpointMismatchError("'" + name + "' is " + shape_str(it->second.shape()) + " in the checkpoint, " +
                                    shape_str(shape) + " in the model");
    }
    return it->second;
  };
  // Validate everything before touching the model.
  for (const auto& e : entries) {
    fetch(e.name, e.value.shape());
    fetch("adam.m/" + e.name, e.value.shape());
    fetch("adam.v/" + e.name, e.value.shape());
  }
  for (auto& e : entries) {
    const auto& src = fetch(e.name, e.value.shape());
    std::copy(src.data().begin(), src.data().end(), e.value.mutable_data().begin());
  }
  if (state) {
    state->reset(model.params());
    state->step = parsed.header.optimizer_step;
    const auto& opt = parsed.raw.at("optimizer");
    state->beta1 = opt.at("beta1").get<double>();
    state->beta2 = opt.at("beta2").get<double>();
    state->epsilon = opt.at("epsilon").get<double>();
    for (std::size_t p = 0; p < entries.size(); ++p) {
      const auto& m = fetch("adam.m/" + entries[p].name, entries[p].value.shape());
      const auto& v = fetch("adam.v/" + entries[p].name, entries[p].value.shape());
      state->first_moment[p].assign(m.data().begin(), m.data().end());
      state->second_moment[p].assign(v.data().begin(), v.data().end());
    }
  }
  return parsed.header;
}

#define BTA_INSTANTIATE(T)                                                                          \
  template void save_checkpoint(const fs::path&, const Model<T>&, const AdamState<T>&, const TrainConfig&); \
  template CheckpointHeader load_checkpoint(const fs::path&, Model<T>&, AdamState<T>*);

BTA_INSTANTIATE(float)
BTA_INSTANTIATE(double)

#undef BTA_INSTANTIATE

}  // namespace bta
