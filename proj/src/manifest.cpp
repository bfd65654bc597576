#include "pixeltag/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "pixeltag/errors.hpp"

namespace pixeltag {

using nlohmann::json;

namespace {

std::string where(std::size_t line_number) { return "line " + std::to_string(line_number); }

const json& required(const json& obj, const char* field, std::size_t line_number) {
  auto it = obj.find(field);
  if (it == obj.end()) {
    throw SchemaError(where(line_number) + ": missing required field \"" + field + "\"");
  }
  return *it;
}

std::string as_string(const json& v, const std::string& field, std::size_t line_number) {
  if (!v.is_string()) {
    throw SchemaError(where(line_number) + ": field \"" + field + "\" must be a string");
  }
  return v.get<std::string>();
}

std::filesystem::path resolve(const SampleManifest& m, const std::filesystem::path& p) {
  return p.is_absolute() ? p : m.base_dir / p;
}

}  // namespace

SampleManifest parse_manifest_line(const std::string& line, std::size_t line_number) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(where(line_number) + ": malformed JSON: " + e.what());
  }
  if (!obj.is_object()) throw SchemaError(where(line_number) + ": sample must be a JSON object");

  SampleManifest m;
  m.sample_id = as_string(required(obj, "sample_id", line_number), "sample_id", line_number);
  m.pixel_embedding_path = as_string(required(obj, "pixel_embedding_path", line_number),
                                     "pixel_embedding_path", line_number);
  m.text = as_string(required(obj, "text", line_number), "text", line_number);
  m.text_embedding_path = as_string(required(obj, "text_embedding_path", line_number),
                                    "text_embedding_path", line_number);

  const auto& tags = required(obj, "candidate_tags", line_number);
  if (!tags.is_array()) {
    throw SchemaError(where(line_number) + ": field \"candidate_tags\" must be an array");
  }
  std::set<std::string> names;
  for (const auto& entry : tags) {
    if (!entry.is_object()) {
      throw SchemaError(where(line_number) +
                        ": candidate_tags entries must be objects {\"tag\", \"embedding_path\"}");
    }
    CandidateTagRef ref;
    ref.tag = as_string(required(entry, "tag", line_number), "tag", line_number);
    ref.embedding_path = as_string(required(entry, "embedding_path", line_number),
                                   "embedding_path", line_number);
    if (!names.insert(ref.tag).second) {
      throw SchemaError(where(line_number) + ": duplicate candidate tag \"" + ref.tag + "\"");
    }
    m.candidate_tags.push_back(std::move(ref));
  }

  if (auto it = obj.find("gt_tags"); it != obj.end() && !it->is_null()) {
    if (!it->is_array()) throw SchemaError(where(line_number) + ": field \"gt_tags\" must be an array");
    std::vector<std::string> gt;
    for (const auto& t : *it) {
      auto tag = as_string(t, "gt_tags", line_number);
      if (!names.contains(tag)) {
        throw SchemaError(where(line_number) + ": gt tag \"" + tag + "\" is not a candidate tag");
      }
      gt.push_back(std::move(tag));
    }
    m.gt_tags = std::move(gt);
  }
  if (auto it = obj.find("gt_text_mask_path"); it != obj.end() && !it->is_null()) {
    m.gt_text_mask_path = as_string(*it, "gt_text_mask_path", line_number);
  }
  if (auto it = obj.find("gt_tag_mask_paths"); it != obj.end() && !it->is_null()) {
    if (!it->is_object()) {
      throw SchemaError(where(line_number) + ": field \"gt_tag_mask_paths\" must be an object");
    }
    std::map<std::string, std::filesystem::path> masks;
    for (const auto& [tag, path] : it->items()) {
      masks.emplace(tag, as_string(path, "gt_tag_mask_paths", line_number));
    }
    m.gt_tag_mask_paths = std::move(masks);
  }
  return m;
}

std::string manifest_line(const SampleManifest& m) {
  json obj;
  obj["sample_id"] = m.sample_id;
  obj["pixel_embedding_path"] = m.pixel_embedding_path.generic_string();
  obj["text"] = m.text;
  obj["text_embedding_path"] = m.text_embedding_path.generic_string();
  obj["candidate_tags"] = json::array();
  for (const auto& c : m.candidate_tags) {
    obj["candidate_tags"].push_back({{"tag", c.tag}, {"embedding_path", c.embedding_path.generic_string()}});
  }
  if (m.gt_tags) obj["gt_tags"] = *m.gt_tags;
  if (m.gt_text_mask_path) obj["gt_text_mask_path"] = m.gt_text_mask_path->generic_string();
  if (m.gt_tag_mask_paths) {
    json masks = json::object();
    for (const auto& [tag, path] : *m.gt_tag_mask_paths) masks[tag] = path.generic_string();
    obj["gt_tag_mask_paths"] = masks;
  }
  return obj.dump();
}

std::vector<SampleManifest> load_manifest(const std::filesystem::path& source) {
  std::ifstream in(source);
  if (!in) throw IoError(source.string() + ": cannot open manifest");
  std::vector<SampleManifest> out;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_manifest_line(line, line_number));
    } catch (const ParseError& e) {
      throw ParseError(source.string() + ": " + e.what());
    } catch (const SchemaError& e) {
      throw SchemaError(source.string() + ": " + e.what());
    }
    out.back().base_dir = source.parent_path();
  }
  return out;
}

void write_manifest(const std::vector<SampleManifest>& samples,
                    const std::filesystem::path& destination) {
  std::string text;
  for (const auto& m : samples) text += manifest_line(m) + "\n";
  write_bytes_atomic(destination, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::string> Sample::candidate_names() const {
  std::vector<std::string> names;
  names.reserve(candidates.size());
  for (const auto& c : candidates) names.push_back(c.tag);
  return names;
}

Sample load_sample(const SampleManifest& m) {
  const std::string ctx = "sample \"" + m.sample_id + "\"";
  Sample s;
  s.id = m.sample_id;
  s.text = m.text;
  s.pixels = PixelMap::from_tensor(read_tensor(resolve(m, m.pixel_embedding_path)));
  const auto channels = s.pixels.channels();

  auto load_vector = [&](const std::filesystem::path& p, const std::string& what) {
    auto e = embedding_from_tensor(read_tensor(resolve(m, p)));
    if (e.size() != channels) {
      throw ShapeError(ctx + ": " + what + " has " + std::to_string(e.size()) +
                       " channels, pixel map has " + std::to_string(channels));
    }
    return e;
  };
  s.text_embedding = load_vector(m.text_embedding_path, "text embedding");
  for (const auto& c : m.candidate_tags) {
    s.candidates.push_back({c.tag, load_vector(c.embedding_path, "tag \"" + c.tag + "\"")});
  }
  s.gt_tags = m.gt_tags;

  auto load_gt_mask = [&](const std::filesystem::path& p) {
    auto mask = read_mask(resolve(m, p));
    if (mask.height() != s.pixels.height() || mask.width() != s.pixels.width()) {
      throw ShapeError(ctx + ": mask " + p.string() + " does not match the pixel map extents");
    }
    return mask;
  };
  if (m.gt_text_mask_path) s.gt_text_mask = load_gt_mask(*m.gt_text_mask_path);
  if (m.gt_tag_mask_paths) {
    for (const auto& [tag, path] : *m.gt_tag_mask_paths) s.gt_tag_masks.emplace(tag, load_gt_mask(path));
  }
  return s;
}

SampleManifest store_sample(const Sample& s, const std::filesystem::path& dir) {
  SampleManifest m;
  m.sample_id = s.id;
  m.text = s.text;
  m.base_dir = dir;
  m.pixel_embedding_path = s.id + ".pixels.ttdt";
  write_tensor(s.pixels.to_tensor(), dir / m.pixel_embedding_path);
  m.text_embedding_path = s.id + ".text.ttdt";
  write_tensor(embedding_to_tensor(s.text_embedding), dir / m.text_embedding_path);
  for (std::size_t i = 0; i < s.candidates.size(); ++i) {
    CandidateTagRef ref{s.candidates[i].tag, s.id + ".tag" + std::to_string(i) + ".ttdt"};
    write_tensor(embedding_to_tensor(s.candidates[i].embedding), dir / ref.embedding_path);
    m.candidate_tags.push_back(std::move(ref));
  }
  m.gt_tags = s.gt_tags;
  if (s.gt_text_mask) {
    m.gt_text_mask_path = s.id + ".gt_text.ttdt";
    write_mask(*s.gt_text_mask, dir / *m.gt_text_mask_path);
  }
  if (!s.gt_tag_masks.empty()) {
    std::map<std::string, std::filesystem::path> paths;
    std::size_t i = 0;
    for (const auto& [tag, mask] : s.gt_tag_masks) {
      std::filesystem::path p = s.id + ".gt_tag" + std::to_string(i++) + ".ttdt";
      write_mask(mask, dir / p);
      paths.emplace(tag, p);
    }
    m.gt_tag_mask_paths = std::move(paths);
  }
  return m;
}

}  // namespace pixeltag
