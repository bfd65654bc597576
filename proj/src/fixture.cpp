#include "pixeltag/fixture.hpp"

#include <array>
#include <cmath>
#include <random>

#include "pixeltag/errors.hpp"

namespace pixeltag {

namespace {

constexpr std::array kObjects = {"chair", "dog", "boat", "tree", "car", "lamp", "horse", "table"};
constexpr std::array kAttributes = {"red", "wooden", "striped", "green", "shiny", "small"};
constexpr std::array kDistractors = {"near", "the", "photo", "/", "with", "view", "of", "stock"};

double dot(const Embedding& a, const Embedding& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void normalize(Embedding& v) {
  const double n = std::sqrt(dot(v, v));
  for (auto& x : v) x /= n;
}

// Unit vector supported on channels [begin, end), orthogonal to `avoid`.
Embedding random_direction(std::mt19937_64& rng, std::size_t channels, std::size_t begin,
                           std::size_t end, const std::vector<Embedding>& avoid = {}) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Embedding v(channels, 0.0);
  for (std::size_t i = begin; i < end; ++i) v[i] = normal(rng);
  for (const auto& a : avoid) {
    const double proj = dot(v, a);
    for (std::size_t i = 0; i < channels; ++i) v[i] -= proj * a[i];
  }
  normalize(v);
  return v;
}

}  // namespace

Sample make_bias_sample(std::uint64_t seed, std::size_t index, const FixtureOptions& o) {
  const std::size_t object_dims = o.channels - o.attribute_dims - o.background_dims;
  if (o.channels <= o.attribute_dims + o.background_dims || object_dims < 2 || o.attribute_dims < 2 ||
      o.background_dims < 1 || o.width < 4 || o.height < 1) {
    throw ConfigError("fixture options leave no room for the three channel blocks / regions");
  }
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + index);
  const std::size_t attr_begin = object_dims;
  const std::size_t bg_begin = object_dims + o.attribute_dims;

  const Embedding object = random_direction(rng, o.channels, 0, object_dims);
  const Embedding attribute = random_direction(rng, o.channels, attr_begin, bg_begin);
  const Embedding background = random_direction(rng, o.channels, bg_begin, o.channels);

  // Columns [0, W/2) object, [W/2, 3W/4) attribute, the rest background.
  const std::size_t object_end = o.width / 2;
  const std::size_t attribute_end = (3 * o.width) / 4;

  Sample s;
  s.id = "synth" + std::to_string(seed) + "_" + std::to_string(index);
  s.pixels = PixelMap(o.height, o.width, o.channels);
  std::normal_distribution<double> noise(0.0, o.pixel_noise);
  std::vector<std::uint8_t> object_mask(o.height * o.width, 0);
  std::vector<std::uint8_t> attribute_mask(o.height * o.width, 0);
  for (std::size_t h = 0; h < o.height; ++h) {
    for (std::size_t w = 0; w < o.width; ++w) {
      const std::size_t p = h * o.width + w;
      const Embedding* base = &background;
      if (w < object_end) {
        base = &object;
        object_mask[p] = 1;
      } else if (w < attribute_end) {
        base = &attribute;
        attribute_mask[p] = 1;
      }
      auto px = s.pixels.pixel(p);
      for (std::size_t c = 0; c < o.channels; ++c) px[c] = (*base)[c] + noise(rng);
    }
  }

  s.text_embedding.resize(o.channels);
  for (std::size_t c = 0; c < o.channels; ++c) {
    s.text_embedding[c] = object[c] + o.text_attribute_weight * attribute[c];
  }
  normalize(s.text_embedding);

  const std::string object_word = kObjects[rng() % kObjects.size()];
  const std::string attribute_word = kAttributes[rng() % kAttributes.size()];
  s.candidates.push_back({attribute_word, attribute});
  s.candidates.push_back({object_word, object});

  std::vector<Embedding> used = {object, attribute, background};
  const std::size_t first_distractor = rng() % kDistractors.size();
  for (std::size_t d = 0; d < o.distractors; ++d) {
    // Alternate between the object and attribute blocks.
    const bool in_object_block = d % 2 == 0;
    Embedding e = in_object_block ? random_direction(rng, o.channels, 0, object_dims, used)
                                  : random_direction(rng, o.channels, attr_begin, bg_begin, used);
    used.push_back(e);
    std::string word = kDistractors[(first_distractor + d) % kDistractors.size()];
    if (d >= kDistractors.size()) word += std::to_string(d / kDistractors.size());
    s.candidates.push_back({word, std::move(e)});
  }

  s.text = "a " + attribute_word + " " + object_word;
  for (std::size_t d = 0; d < o.distractors; ++d) s.text += " " + s.candidates[2 + d].tag;

  s.gt_tags = std::vector<std::string>{attribute_word, object_word};
  std::vector<std::uint8_t> union_mask(o.height * o.width, 0);
  for (std::size_t p = 0; p < union_mask.size(); ++p) union_mask[p] = object_mask[p] | attribute_mask[p];
  s.gt_text_mask = BinaryMask(o.height, o.width, std::move(union_mask));
  s.gt_tag_masks.emplace(object_word, BinaryMask(o.height, o.width, std::move(object_mask)));
  s.gt_tag_masks.emplace(attribute_word, BinaryMask(o.height, o.width, std::move(attribute_mask)));
  return s;
}

std::vector<Sample> make_bias_dataset(std::uint64_t seed, std::size_t count, const FixtureOptions& options) {
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(make_bias_sample(seed, i, options));
  return out;
}

std::filesystem::path write_fixture(const std::vector<Sample>& samples, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<SampleManifest> manifests;
  manifests.reserve(samples.size());
  for (const auto& s : samples) manifests.push_back(store_sample(s, dir));
  const auto path = dir / "manifest.jsonl";
  write_manifest(manifests, path);
  return path;
}

}  // namespace pixeltag
