#pragma once

// Deterministic synthetic data with a built-in single tag bias.
//
// Channels are split into three orthogonal blocks: object directions,
// attribute directions, and background directions. Each sample has an
// object region and an attribute region, each aligned with one true tag,
// plus a background region. The text embedding is dominated by the object
// tag and only weakly mentions the attribute, so its similarity map covers
// the object region alone. Distractor tags are orthogonal to everything in
// the image.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pixeltag/manifest.hpp"

namespace pixeltag {

struct FixtureOptions {
  std::size_t height = 4;
  std::size_t width = 4;
  std::size_t channels = 16;
  std::size_t attribute_dims = 4;
  std::size_t background_dims = 4;
  std::size_t distractors = 2;
  double pixel_noise = 0.03;
  // Weight of the attribute direction in the text embedding.
  double text_attribute_weight = 0.15;
};

Sample make_bias_sample(std::uint64_t seed, std::size_t index, const FixtureOptions& options = {});
std::vector<Sample> make_bias_dataset(std::uint64_t seed, std::size_t count,
                                      const FixtureOptions& options = {});

// Writes the tensors and manifest.jsonl under `dir`; returns the manifest path.
std::filesystem::path write_fixture(const std::vector<Sample>& samples, const std::filesystem::path& dir);

}  // namespace pixeltag
