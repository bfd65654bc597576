#include "pixeltag/tensor_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

#include "pixeltag/errors.hpp"

namespace pixeltag {

static_assert(std::endian::native == std::endian::little,
              "TTDT encoding assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'T', 'T', 'D', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, const std::string& context)
      : bytes_(bytes), context_(context) {}

  template <typename T>
  T take() {
    if (remaining() < sizeof(T)) {
      throw TruncationError(context_ + ": header truncated at byte " + std::to_string(pos_));
    }
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::uint8_t* cursor() const { return bytes_.data() + pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  const std::string& context_;
  std::size_t pos_ = 0;
};

struct Header {
  std::vector<std::uint64_t> dims;
  DType dtype;
  std::size_t count;
};

std::vector<std::uint8_t> encode_header(std::span<const std::uint64_t> dims, DType dtype) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) put<std::uint64_t>(out, d);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dtype));
  return out;
}

Header decode_header(Reader& in, const std::string& context) {
  if (in.remaining() < 4 || std::memcmp(in.cursor(), kMagic, 4) != 0) {
    throw FormatError(context + ": bad magic (expected \"TTDT\")");
  }
  in.take<std::uint32_t>();
  const auto version = in.take<std::uint32_t>();
  if (version != kVersion) {
    throw FormatError(context + ": unsupported version " + std::to_string(version));
  }
  const auto ndim = in.take<std::uint32_t>();
  if (ndim == 0) throw FormatError(context + ": ndim must be positive");
  Header h;
  h.count = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    const auto d = in.take<std::uint64_t>();
    if (d == 0) throw FormatError(context + ": dim " + std::to_string(i) + " is zero");
    if (h.count > SIZE_MAX / d) throw FormatError(context + ": element count overflows");
    h.count *= d;
    h.dims.push_back(d);
  }
  const auto code = in.take<std::uint32_t>();
  if (code > 1) throw FormatError(context + ": unknown dtype code " + std::to_string(code));
  h.dtype = static_cast<DType>(code);
  return h;
}

void check_payload(const Reader& in, const Header& h, std::size_t elem_size,
                   const std::string& context) {
  const auto expected = h.count * elem_size;
  if (in.remaining() < expected) {
    throw TruncationError(context + ": payload holds " + std::to_string(in.remaining()) +
                          " bytes, dims require " + std::to_string(expected));
  }
  if (in.remaining() > expected) {
    throw TruncationError(context + ": " + std::to_string(in.remaining() - expected) +
                          " trailing bytes after payload");
  }
}

std::size_t product(std::span<const std::uint64_t> dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::uint64_t> dims, std::vector<float> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  if (dims_.empty()) throw ShapeError("tensor needs at least one dim");
  for (auto d : dims_) {
    if (d == 0) throw ShapeError("tensor dims must be positive");
  }
  if (product(dims_) != data_.size()) {
    throw ShapeError("tensor dims hold " + std::to_string(product(dims_)) +
                     " elements but data has " + std::to_string(data_.size()));
  }
}

BinaryMask::BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (height_ == 0 || width_ == 0) throw ShapeError("mask extents must be positive");
  if (data_.size() != height_ * width_) {
    throw ShapeError("mask is " + std::to_string(height_) + "x" + std::to_string(width_) +
                     " but data has " + std::to_string(data_.size()) + " values");
  }
  for (auto v : data_) {
    if (v > 1) throw ValidationError("mask value " + std::to_string(v) + " is not 0 or 1");
  }
}

BinaryMask BinaryMask::zeros(std::size_t height, std::size_t width) {
  return BinaryMask(height, width, std::vector<std::uint8_t>(height * width, 0));
}

std::size_t BinaryMask::count() const {
  std::size_t n = 0;
  for (auto v : data_) n += v;
  return n;
}

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  auto out = encode_header(t.dims(), DType::F32);
  out.reserve(out.size() + t.size() * sizeof(float));
  for (float v : t.data()) put<float>(out, v);
  return out;
}

std::vector<std::uint8_t> encode_mask(const BinaryMask& m) {
  const std::uint64_t dims[2] = {m.height(), m.width()};
  auto out = encode_header(dims, DType::U8);
  out.insert(out.end(), m.data().begin(), m.data().end());
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes, const std::string& context) {
  Reader in(bytes, context);
  Header h = decode_header(in, context);
  if (h.dtype != DType::F32) throw FormatError(context + ": expected f32 tensor (dtype 0)");
  check_payload(in, h, sizeof(float), context);
  std::vector<float> data(h.count);
  std::memcpy(data.data(), in.cursor(), h.count * sizeof(float));
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw ValidationError(context + ": non-finite value at element " + std::to_string(i));
    }
  }
  return Tensor(std::move(h.dims), std::move(data));
}

BinaryMask decode_mask(std::span<const std::uint8_t> bytes, const std::string& context) {
  Reader in(bytes, context);
  Header h = decode_header(in, context);
  if (h.dtype != DType::U8) throw FormatError(context + ": expected u8 mask (dtype 1)");
  if (h.dims.size() != 2) throw FormatError(context + ": mask must be 2-D");
  check_payload(in, h, 1, context);
  std::vector<std::uint8_t> data(in.cursor(), in.cursor() + h.count);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i] > 1) {
      throw ValidationError(context + ": mask value " + std::to_string(data[i]) +
                            " at element " + std::to_string(i) + " is not 0 or 1");
    }
  }
  return BinaryMask(h.dims[0], h.dims[1], std::move(data));
}

void write_bytes_atomic(const std::filesystem::path& destination,
                        std::span<const std::uint8_t> bytes) {
  namespace fs = std::filesystem;
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  auto tmp = destination;
  tmp += ".tmp" + std::to_string(rng() & 0xffffff);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(destination.string() + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError(destination.string() + ": write failed");
    }
  }
  std::error_code ec;
  fs::rename(tmp, destination, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError(destination.string() + ": rename failed: " + ec.message());
  }
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& source) {
  std::ifstream in(source, std::ios::binary);
  if (!in) throw IoError(source.string() + ": cannot open for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError(source.string() + ": read failed");
  return bytes;
}

void write_tensor(const Tensor& t, const std::filesystem::path& destination) {
  write_bytes_atomic(destination, encode_tensor(t));
}

Tensor read_tensor(const std::filesystem::path& source) {
  return decode_tensor(read_bytes(source), source.string());
}

void write_mask(const BinaryMask& m, const std::filesystem::path& destination) {
  write_bytes_atomic(destination, encode_mask(m));
}

BinaryMask read_mask(const std::filesystem::path& source) {
  return decode_mask(read_bytes(source), source.string());
}

}  // namespace pixeltag
