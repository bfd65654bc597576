#include <doctest.h>

#include <fstream>
#include <functional>

#include "pixeltag/errors.hpp"
#include "pixeltag/fixture.hpp"
#include "pixeltag/manifest.hpp"
#include "test_util.hpp"

using namespace pixeltag;

namespace {

const char* kLine =
    R"({"sample_id":"s1","pixel_embedding_path":"p.ttdt","text":"a red chair",)"
    R"("text_embedding_path":"t.ttdt","candidate_tags":[{"tag":"red","embedding_path":"r.ttdt"},)"
    R"({"tag":"chair","embedding_path":"c.ttdt"}],"gt_tags":["chair"],"extra":42})";

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("empty manifest loads as an empty list") {
  testutil::TempDir dir("man");
  write_text(dir.path() / "m.jsonl", "");
  CHECK(load_manifest(dir.path() / "m.jsonl").empty());
}

TEST_CASE("one valid line gives one manifest; unknown fields are ignored") {
  testutil::TempDir dir("man");
  write_text(dir.path() / "m.jsonl", std::string(kLine) + "\n");
  const auto ms = load_manifest(dir.path() / "m.jsonl");
  REQUIRE(ms.size() == 1);
  CHECK(ms[0].sample_id == "s1");
  CHECK(ms[0].text == "a red chair");
  REQUIRE(ms[0].candidate_tags.size() == 2);
  CHECK(ms[0].candidate_tags[1].tag == "chair");
  CHECK(ms[0].gt_tags == std::vector<std::string>{"chair"});
  CHECK_FALSE(ms[0].gt_text_mask_path.has_value());
  CHECK(ms[0].base_dir == dir.path());
}

TEST_CASE("missing required field names the field and the line") {
  testutil::TempDir dir("man");
  write_text(dir.path() / "m.jsonl",
             R"({"sample_id":"s1","pixel_embedding_path":"p","text_embedding_path":"t","candidate_tags":[]})");
  const auto msg = message_of([&] { load_manifest(dir.path() / "m.jsonl"); });
  CHECK_THROWS_AS(load_manifest(dir.path() / "m.jsonl"), SchemaError);
  CHECK(msg.find("\"text\"") != std::string::npos);
  CHECK(msg.find("line 1") != std::string::npos);
}

TEST_CASE("malformed JSON reports its line number") {
  testutil::TempDir dir("man");
  write_text(dir.path() / "m.jsonl", std::string(kLine) + "\n\n{not json\n");
  CHECK_THROWS_AS(load_manifest(dir.path() / "m.jsonl"), ParseError);
  CHECK(message_of([&] { load_manifest(dir.path() / "m.jsonl"); }).find("line 3") != std::string::npos);
}

TEST_CASE("gt_tags must be candidates") {
  std::string line = kLine;
  line.replace(line.find(R"(["chair"])"), 9, R"(["sofa"])");
  CHECK_THROWS_AS(parse_manifest_line(line, 1), SchemaError);
}

TEST_CASE("duplicate candidate tags are rejected") {
  std::string line = kLine;
  line.replace(line.find(R"("tag":"chair")"), 13, R"("tag":"red")");
  CHECK_THROWS_AS(parse_manifest_line(line, 1), SchemaError);
}

TEST_CASE("manifest lines round-trip through the writer") {
  const auto m = parse_manifest_line(kLine, 1);
  CHECK(parse_manifest_line(manifest_line(m), 1) == m);
}

TEST_CASE("store_sample / load_sample round-trip with relative paths") {
  testutil::TempDir dir("man");
  const auto samples = make_bias_dataset(3, 2);
  const auto path = write_fixture(samples, dir.path());
  const auto ms = load_manifest(path);
  REQUIRE(ms.size() == 2);
  for (std::size_t i = 0; i < ms.size(); ++i) {
    CHECK(ms[i].pixel_embedding_path.is_relative());
    const auto s = load_sample(ms[i]);
    CHECK(s.id == samples[i].id);
    CHECK(s.candidate_names() == samples[i].candidate_names());
    CHECK(s.gt_text_mask == samples[i].gt_text_mask);
    CHECK(s.gt_tag_masks == samples[i].gt_tag_masks);
    // f32 storage
    for (std::size_t k = 0; k < s.pixels.values().size(); ++k) {
      CHECK(s.pixels.values()[k] == static_cast<double>(static_cast<float>(samples[i].pixels.values()[k])));
    }
  }
}

TEST_CASE("tensor channel mismatch is a shape error") {
  testutil::TempDir dir("man");
  write_tensor(Tensor({1, 1, 3}, {1, 0, 0}), dir.path() / "p.ttdt");
  write_tensor(Tensor({4}, {1, 0, 0, 0}), dir.path() / "t.ttdt");
  write_text(dir.path() / "m.jsonl",
             R"({"sample_id":"x","pixel_embedding_path":"p.ttdt","text":"x","text_embedding_path":"t.ttdt","candidate_tags":[]})");
  const auto ms = load_manifest(dir.path() / "m.jsonl");
  CHECK_THROWS_AS(load_sample(ms[0]), ShapeError);
}
