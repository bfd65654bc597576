#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pixeltag/embedding.hpp"
#include "pixeltag/manifest.hpp"

namespace pixeltag {

// image: cosine(pooled pixels, tag)
// text:  cosine(text, tag)
// pixel: max over pixels of cosine(pixel, tag)
// seg:   fraction of pixels whose most similar tag is this one
enum class ScoreMethod { Image, Text, Pixel, Seg };

std::string_view to_string(ScoreMethod m);
// Throws ConfigError listing the valid names.
ScoreMethod parse_score_method(std::string_view name);

struct ScoredTag {
  std::string tag;
  double score = 0.0;

  friend bool operator==(const ScoredTag&, const ScoredTag&) = default;
};

// Entries follow the sample's candidate order.
struct TagScores {
  ScoreMethod method = ScoreMethod::Pixel;
  std::vector<ScoredTag> entries;

  std::vector<double> values() const;
  friend bool operator==(const TagScores&, const TagScores&) = default;
};

double norm(std::span<const double> v);

// <a,b>/(|a||b|), clamped to [-1,1]. Throws DegenerateVectorError on a zero
// vector and ShapeError on a length mismatch.
double cosine(std::span<const double> a, std::span<const double> b);

Embedding global_pool(const PixelMap& pixels);

SimilarityMap simmap(const PixelMap& pixels, std::span<const double> embedding);

double score_image(const PixelMap& pixels, std::span<const double> tag);
double score_pixel(const PixelMap& pixels, std::span<const double> tag);
double score_text(std::span<const double> text, std::span<const double> tag);

// Ties in the per-pixel argmax go to the earliest tag.
TagScores score_seg(const PixelMap& pixels, std::span<const TagEmbedding> tags);

TagScores score_all(const Sample& sample, ScoreMethod method);
TagScores score_all(const SampleManifest& sample, ScoreMethod method);

}  // namespace pixeltag
