#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pixeltag/embedding.hpp"
#include "pixeltag/tensor_io.hpp"

namespace pixeltag {

struct CandidateTagRef {
  std::string tag;
  std::filesystem::path embedding_path;

  friend bool operator==(const CandidateTagRef&, const CandidateTagRef&) = default;
};

// One image-text pair as listed in a JSON-lines manifest. Relative paths are
// resolved against the manifest's directory when the sample is loaded.
struct SampleManifest {
  std::string sample_id;
  std::filesystem::path pixel_embedding_path;
  std::string text;
  std::filesystem::path text_embedding_path;
  std::vector<CandidateTagRef> candidate_tags;
  std::optional<std::vector<std::string>> gt_tags;
  std::optional<std::filesystem::path> gt_text_mask_path;
  std::optional<std::map<std::string, std::filesystem::path>> gt_tag_mask_paths;

  // Directory the paths above are relative to; not serialized.
  std::filesystem::path base_dir;

  friend bool operator==(const SampleManifest&, const SampleManifest&) = default;
};

// Parses one manifest line. `line_number` is 1-based and only used in errors.
SampleManifest parse_manifest_line(const std::string& line, std::size_t line_number);
std::string manifest_line(const SampleManifest& m);

// Blank lines are skipped; they still count toward line numbers.
std::vector<SampleManifest> load_manifest(const std::filesystem::path& source);
void write_manifest(const std::vector<SampleManifest>& samples,
                    const std::filesystem::path& destination);

// A manifest entry with every referenced tensor loaded and cross-checked.
struct Sample {
  std::string id;
  std::string text;
  PixelMap pixels;
  Embedding text_embedding;
  std::vector<TagEmbedding> candidates;
  std::optional<std::vector<std::string>> gt_tags;
  std::optional<BinaryMask> gt_text_mask;
  std::map<std::string, BinaryMask> gt_tag_masks;

  std::vector<std::string> candidate_names() const;
};

Sample load_sample(const SampleManifest& m);

// Inverse of load_sample: writes every tensor of `s` under `dir` and returns
// the manifest entry (paths relative to `dir`).
SampleManifest store_sample(const Sample& s, const std::filesystem::path& dir);

}  // namespace pixeltag
