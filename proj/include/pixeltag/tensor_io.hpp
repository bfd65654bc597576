#pragma once

// TTDT container: a minimal little-endian tensor file.
//
//   offset  size        field
//   0       4           magic "TTDT"
//   4       4 (u32)     version = 1
//   8       4 (u32)     ndim
//   12      8*ndim(u64) dims
//   ...     4 (u32)     dtype code (0 = f32, 1 = u8)
//   ...     payload     row-major values, little-endian
//
// Tensors always hold f32 values; masks use dtype 1 with values in {0,1}.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace pixeltag {

enum class DType : std::uint32_t { F32 = 0, U8 = 1 };

class Tensor {
 public:
  Tensor() = default;
  // Throws ShapeError if a dim is zero or the element count disagrees.
  Tensor(std::vector<std::uint64_t> dims, std::vector<float> data);

  const std::vector<std::uint64_t>& dims() const { return dims_; }
  const std::vector<float>& data() const { return data_; }
  std::size_t size() const { return data_.size(); }
  std::size_t ndim() const { return dims_.size(); }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::uint64_t> dims_;
  std::vector<float> data_;
};

class BinaryMask {
 public:
  BinaryMask() = default;
  // Throws ShapeError on bad extents, ValidationError on values outside {0,1}.
  BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> data);
  static BinaryMask zeros(std::size_t height, std::size_t width);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  const std::vector<std::uint8_t>& data() const { return data_; }
  std::uint8_t operator[](std::size_t i) const { return data_[i]; }
  std::size_t count() const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> data_;
};

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
std::vector<std::uint8_t> encode_mask(const BinaryMask& m);

// `context` is prefixed to error messages (usually the source path).
Tensor decode_tensor(std::span<const std::uint8_t> bytes, const std::string& context = "<memory>");
BinaryMask decode_mask(std::span<const std::uint8_t> bytes, const std::string& context = "<memory>");

// Writes go to a sibling temp file which is renamed over the destination, so
// a failed write never leaves a partial file behind.
void write_bytes_atomic(const std::filesystem::path& destination, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& source);

void write_tensor(const Tensor& t, const std::filesystem::path& destination);
Tensor read_tensor(const std::filesystem::path& source);

void write_mask(const BinaryMask& m, const std::filesystem::path& destination);
BinaryMask read_mask(const std::filesystem::path& source);

}  // namespace pixeltag
