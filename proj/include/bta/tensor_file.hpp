#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bta/tensor.hpp"

namespace bta {

// Binary tensor layout, little-endian:
//   "BTAT" | u16 version (1) | u8 dtype (1 = f32, 2 = f64) | u8 rank |
//   u64 dim × rank | row-major payload
inline constexpr char kTensorMagic[4] = {'B', 'T', 'A', 'T'};
inline constexpr std::uint16_t kTensorFormatVersion = 1;

enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};
class VersionMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};
class TruncatedPayloadError : public FormatError {
 public:
  using FormatError::FormatError;
};
class BadDTypeError : public FormatError {
 public:
  using FormatError::FormatError;
};

template <typename T>
constexpr DType dtype_of() {
  return sizeof(T) == 4 ? DType::f32 : DType::f64;
}

std::size_t tensor_header_size(std::size_t rank);

template <typename T>
void append_tensor_record(std::vector<std::uint8_t>& out, const Tensor<T>& t);

/// Parses one record starting at `offset` and advances it. Payloads of the
/// other float width are converted.
template <typename T>
Tensor<T> parse_tensor_record(std::span<const std::uint8_t> bytes, std::size_t& offset);

DType peek_tensor_dtype(std::span<const std::uint8_t> bytes);

/// Writes through a temporary sibling file and renames it into place.
void atomic_write(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void atomic_write(const std::filesystem::path& path, const std::string& text);
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

template <typename T>
void write_tensor_file(const Tensor<T>& t, const std::filesystem::path& path);

template <typename T>
Tensor<T> read_tensor_file(const std::filesystem::path& path);

DType read_tensor_dtype(const std::filesystem::path& path);

// Little-endian primitives shared with the checkpoint container.
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v);
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
std::uint16_t get_u16(std::span<const std::uint8_t> bytes, std::size_t& offset);
std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t& offset);
std::uint64_t get_u64(std::span<const std::uint8_t> bytes, std::size_t& offset);

}  // namespace bta
