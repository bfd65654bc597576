#include "pixeltag/scoring.hpp"

#include <algorithm>
#include <cmath>

#include "pixeltag/errors.hpp"

namespace pixeltag {

namespace {

void check_channels(const PixelMap& pixels, std::span<const double> e) {
  if (pixels.channels() != e.size()) {
    throw ShapeError("channel mismatch: pixel map has " + std::to_string(pixels.channels()) +
                     " channels, embedding has " + std::to_string(e.size()));
  }
}

}  // namespace

std::string_view to_string(ScoreMethod m) {
  switch (m) {
    case ScoreMethod::Image: return "image";
    case ScoreMethod::Text: return "text";
    case ScoreMethod::Pixel: return "pixel";
    case ScoreMethod::Seg: return "seg";
  }
  return "?";
}

ScoreMethod parse_score_method(std::string_view name) {
  if (name == "image") return ScoreMethod::Image;
  if (name == "text") return ScoreMethod::Text;
  if (name == "pixel") return ScoreMethod::Pixel;
  if (name == "seg") return ScoreMethod::Seg;
  throw ConfigError("unknown scoring method \"" + std::string(name) +
                    "\" (valid: image, text, pixel, seg)");
}

std::vector<double> TagScores::values() const {
  std::vector<double> v;
  v.reserve(entries.size());
  for (const auto& e : entries) v.push_back(e.score);
  return v;
}

double norm(std::span<const double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  return std::sqrt(sq);
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("cosine of vectors with lengths " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()));
  }
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw DegenerateVectorError("cosine of a zero-norm vector");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

Embedding global_pool(const PixelMap& pixels) {
  if (pixels.positions() == 0) throw ShapeError("global pool of an empty pixel map");
  Embedding mean(pixels.channels(), 0.0);
  for (std::size_t p = 0; p < pixels.positions(); ++p) {
    auto px = pixels.pixel(p);
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += px[c];
  }
  const double n = static_cast<double>(pixels.positions());
  for (auto& m : mean) m /= n;
  return mean;
}

SimilarityMap simmap(const PixelMap& pixels, std::span<const double> embedding) {
  check_channels(pixels, embedding);
  SimilarityMap out(pixels.height(), pixels.width());
  for (std::size_t p = 0; p < pixels.positions(); ++p) out[p] = cosine(pixels.pixel(p), embedding);
  return out;
}

double score_image(const PixelMap& pixels, std::span<const double> tag) {
  check_channels(pixels, tag);
  return cosine(global_pool(pixels), tag);
}

double score_pixel(const PixelMap& pixels, std::span<const double> tag) {
  const auto map = simmap(pixels, tag);
  return *std::max_element(map.values.begin(), map.values.end());
}

double score_text(std::span<const double> text, std::span<const double> tag) {
  return cosine(text, tag);
}

TagScores score_seg(const PixelMap& pixels, std::span<const TagEmbedding> tags) {
  TagScores out{ScoreMethod::Seg, {}};
  if (tags.empty()) return out;
  std::vector<SimilarityMap> maps;
  maps.reserve(tags.size());
  for (const auto& t : tags) maps.push_back(simmap(pixels, t.embedding));

  std::vector<std::size_t> counts(tags.size(), 0);
  for (std::size_t p = 0; p < pixels.positions(); ++p) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < maps.size(); ++i) {
      if (maps[i][p] > maps[best][p]) best = i;
    }
    ++counts[best];
  }
  const double n = static_cast<double>(pixels.positions());
  for (std::size_t i = 0; i < tags.size(); ++i) {
    out.entries.push_back({tags[i].tag, static_cast<double>(counts[i]) / n});
  }
  return out;
}

TagScores score_all(const Sample& sample, ScoreMethod method) {
  if (method == ScoreMethod::Seg) return score_seg(sample.pixels, sample.candidates);
  TagScores out{method, {}};
  out.entries.reserve(sample.candidates.size());
  for (const auto& c : sample.candidates) {
    double s = 0.0;
    switch (method) {
      case ScoreMethod::Image: s = score_image(sample.pixels, c.embedding); break;
      case ScoreMethod::Text: s = score_text(sample.text_embedding, c.embedding); break;
      case ScoreMethod::Pixel: s = score_pixel(sample.pixels, c.embedding); break;
      case ScoreMethod::Seg: break;
    }
    out.entries.push_back({c.tag, s});
  }
  return out;
}

TagScores score_all(const SampleManifest& sample, ScoreMethod method) {
  return score_all(load_sample(sample), method);
}

}  // namespace pixeltag
