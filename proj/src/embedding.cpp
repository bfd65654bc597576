#include "pixeltag/embedding.hpp"

#include "pixeltag/errors.hpp"

namespace pixeltag {

PixelMap::PixelMap(std::size_t height, std::size_t width, std::size_t channels)
    : PixelMap(height, width, channels, std::vector<double>(height * width * channels, 0.0)) {}

PixelMap::PixelMap(std::size_t height, std::size_t width, std::size_t channels,
                   std::vector<double> values)
    : height_(height), width_(width), channels_(channels), values_(std::move(values)) {
  if (height_ == 0 || width_ == 0 || channels_ == 0) {
    throw ShapeError("pixel map extents must be positive");
  }
  if (values_.size() != height_ * width_ * channels_) {
    throw ShapeError("pixel map data does not match H*W*C");
  }
}

PixelMap PixelMap::from_tensor(const Tensor& t) {
  if (t.ndim() != 3) {
    throw ShapeError("pixel embeddings must be 3-D (H x W x C), got " +
                     std::to_string(t.ndim()) + "-D");
  }
  const auto& d = t.dims();
  return PixelMap(d[0], d[1], d[2], std::vector<double>(t.data().begin(), t.data().end()));
}

Tensor PixelMap::to_tensor() const {
  return Tensor({height_, width_, channels_},
                std::vector<float>(values_.begin(), values_.end()));
}

ScalarMap::ScalarMap(std::size_t h, std::size_t w, std::vector<double> v)
    : height(h), width(w), values(std::move(v)) {
  if (values.size() != h * w) throw ShapeError("map data does not match H*W");
}

Tensor ScalarMap::to_tensor() const {
  return Tensor({height, width}, std::vector<float>(values.begin(), values.end()));
}

Embedding embedding_from_tensor(const Tensor& t) {
  if (t.ndim() != 1) {
    throw ShapeError("embedding must be 1-D, got " + std::to_string(t.ndim()) + "-D");
  }
  return Embedding(t.data().begin(), t.data().end());
}

Tensor embedding_to_tensor(std::span<const double> e) {
  return Tensor({e.size()}, std::vector<float>(e.begin(), e.end()));
}

}  // namespace pixeltag
