#pragma once

// In-engine numeric carriers. Files store f32; all arithmetic here is double.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pixeltag/tensor_io.hpp"

namespace pixeltag {

using Embedding = std::vector<double>;

// H x W x C per-pixel embeddings, row-major with channels innermost.
class PixelMap {
 public:
  PixelMap() = default;
  PixelMap(std::size_t height, std::size_t width, std::size_t channels);
  PixelMap(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> values);

  static PixelMap from_tensor(const Tensor& t);
  Tensor to_tensor() const;

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t channels() const { return channels_; }
  std::size_t positions() const { return height_ * width_; }

  std::span<const double> pixel(std::size_t index) const {
    return {values_.data() + index * channels_, channels_};
  }
  std::span<double> pixel(std::size_t index) {
    return {values_.data() + index * channels_, channels_};
  }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  friend bool operator==(const PixelMap&, const PixelMap&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<double> values_;
};

// H x W real map; similarity maps, normalized targets, union maps.
struct ScalarMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  ScalarMap() = default;
  ScalarMap(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), values(h * w, fill) {}
  ScalarMap(std::size_t h, std::size_t w, std::vector<double> v);

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  bool same_shape(const ScalarMap& other) const {
    return height == other.height && width == other.width;
  }

  Tensor to_tensor() const;

  friend bool operator==(const ScalarMap&, const ScalarMap&) = default;
};

using SimilarityMap = ScalarMap;

struct TagEmbedding {
  std::string tag;
  Embedding embedding;
};

Embedding embedding_from_tensor(const Tensor& t);
Tensor embedding_to_tensor(std::span<const double> e);

}  // namespace pixeltag
