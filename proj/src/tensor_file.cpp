#include "bta/tensor_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <system_error>

#include <unistd.h>

namespace bta {

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian; big-endian hosts need byte swapping");

namespace {

void need(std::span<const std::uint8_t> bytes, std::size_t offset, std::size_t n, const char* what) {
  if (offset + n > bytes.size()) {
    throw TruncatedPayloadError(std::string("truncated tensor data: need ") + std::to_string(n) +
                                " bytes for " + what + " at offset " + std::to_string(offset) +
                                ", have " + std::to_string(bytes.size() - std::min(offset, bytes.size())));
  }
}

}  // namespace

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  for (int i = 0; i < 2; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint16_t get_u16(std::span<const std::uint8_t> bytes, std::size_t& offset) {
  need(bytes, offset, 2, "u16");
  std::uint16_t v = 0;
  for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(bytes[offset + i]) << (8 * i);
  offset += 2;
  return v;
}
std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t& offset) {
  need(bytes, offset, 4, "u32");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
  offset += 4;
  return v;
}
std::uint64_t get_u64(std::span<const std::uint8_t> bytes, std::size_t& offset) {
  need(bytes, offset, 8, "u64");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[offset + i]) << (8 * i);
  offset += 8;
  return v;
}

std::size_t tensor_header_size(std::size_t rank) { return 4 + 2 + 1 + 1 + 8 * rank; }

template <typename T>
void append_tensor_record(std::vector<std::uint8_t>& out, const Tensor<T>& t) {
  if (t.rank() > 255) throw FormatError("tensor rank exceeds 255");
  out.insert(out.end(), std::begin(kTensorMagic), std::end(kTensorMagic));
  put_u16(out, kTensorFormatVersion);
  out.push_back(static_cast<std::uint8_t>(dtype_of<T>()));
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) put_u64(out, d);
  const auto* raw = reinterpret_cast<const std::uint8_t*>(t.data().data());
  out.insert(out.end(), raw, raw + t.numel() * sizeof(T));
}

DType peek_tensor_dtype(std::span<const std::uint8_t> bytes) {
  std::size_t offset = 0;
  need(bytes, 0, 8, "header");
  if (std::memcmp(bytes.data(), kTensorMagic, 4) != 0) throw BadMagicError("bad tensor magic");
  offset = 4;
  const auto version = get_u16(bytes, offset);
  if (version != kTensorFormatVersion) {
    throw VersionMismatchError("unsupported tensor format version " + std::to_string(version));
  }
  const auto code = bytes[offset];
  if (code != 1 && code != 2) throw BadDTypeError("unknown dtype code " + std::to_string(code));
  return static_cast<DType>(code);
}

template <typename T>
Tensor<T> parse_tensor_record(std::span<const std::uint8_t> bytes, std::size_t& offset) {
  need(bytes, offset, 8, "header");
  if (std::memcmp(bytes.data() + offset, kTensorMagic, 4) != 0) {
    throw BadMagicError("bad tensor magic at offset " + std::to_string(offset));
  }
  offset += 4;
  const auto version = get_u16(bytes, offset);
  if (version != kTensorFormatVersion) {
    throw VersionMismatchError("unsupported tensor format version " + std::to_string(version) +
                               " (expected " + std::to_string(kTensorFormatVersion) + ")");
  }
  const auto code = bytes[offset++];
  if (code != 1 && code != 2) throw BadDTypeError("unknown dtype code " + std::to_string(code));
  const std::size_t rank = bytes[offset++];
  Shape shape(rank);
  for (auto& d : shape) d = get_u64(bytes, offset);
  const std::size_t n = shape_numel(shape);
  const std::size_t width = code == 1 ? 4 : 8;
  need(bytes, offset, n * width, "payload");
  std::vector<T> data(n);
  if (width == sizeof(T)) {
    std::memcpy(data.data(), bytes.data() + offset, n * width);
  } else if (width == 4) {
    std::vector<float> tmp(n);
    std::memcpy(tmp.data(), bytes.data() + offset, n * 4);
    std::copy(tmp.begin(), tmp.end(), data.begin());
  } else {
    std::vector<double> tmp(n);
    std::memcpy(tmp.data(), bytes.data() + offset, n * 8);
    for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<T>(tmp[i]);
  }
  offset += n * width;
  return Tensor<T>(std::move(shape), std::move(data));
}

void atomic_write(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.empty()) throw IoError("cannot write to an empty path");
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + tmp.string() + "' for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    os.flush();
    if (!os) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("write failed for '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "'");
  }
}

void atomic_write(const std::filesystem::path& path, const std::string& text) {
  atomic_write(path, std::span<const std::uint8_t>(
                         reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(is), {});
}

template <typename T>
void write_tensor_file(const Tensor<T>& t, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(tensor_header_size(t.rank()) + t.numel() * sizeof(T));
  append_tensor_record(bytes, t);
  atomic_write(path, bytes);
}

template <typename T>
Tensor<T> read_tensor_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  std::size_t offset = 0;
  auto t = parse_tensor_record<T>(bytes, offset);
  if (offset != bytes.size()) {
    throw FormatError("'" + path.string() + "' has " + std::to_string(bytes.size() - offset) +
                      " trailing bytes");
  }
  return t;
}

DType read_tensor_dtype(const std::filesystem::path& path) {
  return peek_tensor_dtype(read_file_bytes(path));
}

#define BTA_INSTANTIATE(T)                                                               \
  template void append_tensor_record(std::vector<std::uint8_t>&, const Tensor<T>&);      \
  template Tensor<T> parse_tensor_record<T>(std::span<const std::uint8_t>, std::size_t&); \
  template void write_tensor_file(const Tensor<T>&, const std::filesystem::path&);       \
  template Tensor<T> read_tensor_file<T>(const std::filesystem::path&);

BTA_INSTANTIATE(float)
BTA_INSTANTIATE(double)

#undef BTA_INSTANTIATE

}  // namespace bta
