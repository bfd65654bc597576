#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "pixeltag/errors.hpp"
#include "pixeltag/metrics.hpp"
#include "test_util.hpp"

using namespace pixeltag;
using doctest::Approx;

namespace {

double pct(double fraction) { return std::round(fraction * 1000.0) / 10.0; }

TagScores scores_of(const std::vector<std::string>& tags, const std::vector<double>& values) {
  TagScores s;
  for (std::size_t i = 0; i < tags.size(); ++i) s.entries.push_back({tags[i], values[i]});
  return s;
}

BinaryMask mask(std::size_t h, std::size_t w, std::vector<std::uint8_t> v) { return BinaryMask(h, w, std::move(v)); }

}  // namespace

TEST_CASE("F1 from fixed precision and recall pairs") {
  CHECK(std::abs(pct(f1_score(0.925, 0.286)) - 43.7) <= 0.05);
  CHECK(std::abs(pct(f1_score(0.829, 0.745)) - 78.5) <= 0.05);
  CHECK(f1_score(0.0, 0.0) == 0.0);
  CHECK(f1_score(1.0, 1.0) == 1.0);
}

TEST_CASE("eval_tags reaches the same F1 through counts") {
  // 925 of 1000 predictions correct, 925 of 3234 true tags found.
  std::vector<std::vector<std::string>> preds, truths;
  std::vector<TagScores> scores;
  auto add = [&](bool p, bool t, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      preds.push_back(p ? std::vector<std::string>{"x"} : std::vector<std::string>{});
      truths.push_back(t ? std::vector<std::string>{"x"} : std::vector<std::string>{});
      scores.push_back(scores_of({"x"}, {0.5}));
    }
  };
  add(true, true, 925);
  add(true, false, 75);
  add(false, true, 2309);
  const auto r = eval_tags(preds, truths, scores);
  CHECK(pct(r.precision) == Approx(92.5));
  CHECK(pct(r.recall) == Approx(28.6));
  CHECK(std::abs(pct(r.f1) - 43.7) <= 0.05);
}

TEST_CASE("average precision by hand") {
  const std::vector<double> s{0.9, 0.8, 0.1};
  CHECK(average_precision(s, {true, true, false}) == Approx(1.0));
  CHECK(average_precision(s, {true, false, true}) == Approx(0.8333333333));
  CHECK(average_precision(s, {false, false, false}) == 0.0);
  // A positive tied with a negative takes the worse rank.
  CHECK(average_precision(std::vector<double>{0.5, 0.5}, {true, false}) == Approx(0.5));
  CHECK_THROWS_AS(average_precision(s, {true}), ShapeError);
}

TEST_CASE("eval_tags counts and contract") {
  const std::vector<std::vector<std::string>> preds{{"a", "b"}, {"c"}};
  const std::vector<std::vector<std::string>> truths{{"a"}, {}};
  const std::vector<TagScores> scores{scores_of({"a", "b", "c"}, {0.9, 0.5, 0.1}),
                                      scores_of({"c", "d"}, {0.3, 0.2})};
  const auto r = eval_tags(preds, truths, scores);
  CHECK(r.counts == ConfusionCounts{1, 2, 2, 0});
  CHECK(r.precision == Approx(1.0 / 3));
  CHECK(r.recall == 1.0);
  CHECK(r.accuracy == Approx(0.6));
  CHECK(r.map == 1.0);
  CHECK(r.map_samples == 1);
  CHECK(report_json(r) ==
        R"({"precision":33.3,"recall":100.0,"f1":50.0,"accuracy":60.0,"map":100.0,"tp":1,"fp":2,"tn":2,"fn":0})");
  const std::vector<std::vector<std::string>> bad{{"zzz"}, {}};
  CHECK_THROWS_AS(eval_tags(bad, truths, scores), ContractError);
  CHECK_THROWS_AS(eval_tags(truths, bad, scores), ContractError);
}

TEST_CASE("binarize is strict") {
  CHECK(binarize(ScalarMap(1, 3, {0.3, 0.45, 0.6}), 0.4).data() == std::vector<std::uint8_t>{0, 1, 1});
  CHECK(binarize(ScalarMap(2, 2, 0.4), 0.4).count() == 0);
  CHECK(binarize(ScalarMap(2, 2, 0.0), 0.5).count() == 0);
}

TEST_CASE("text segmentation rates by hand") {
  // pred: left two columns; gt: top two rows.
  const auto pred = mask(3, 3, {1, 1, 0, 1, 1, 0, 1, 1, 0});
  const auto gt = mask(3, 3, {1, 1, 1, 1, 1, 1, 0, 0, 0});
  const auto m = mask_rates(pred, gt);
  CHECK(m.iou == Approx(0.5));
  CHECK(m.fpr == Approx(2.0 / 3));
  CHECK(m.fnr == Approx(1.0 / 3));

  const auto same = mask_rates(gt, gt);
  CHECK(same.iou == 1.0);
  CHECK(same.fpr == 0.0);
  CHECK(same.fnr == 0.0);
  const auto empty = mask_rates(BinaryMask::zeros(3, 3), gt);
  CHECK(empty.iou == 0.0);
  CHECK(empty.fnr == 1.0);
  CHECK(empty.fpr == 0.0);
  CHECK(mask_rates(BinaryMask::zeros(2, 2), BinaryMask::zeros(2, 2)).iou == 1.0);
  CHECK_THROWS_AS(mask_rates(BinaryMask::zeros(2, 2), gt), ShapeError);

  const std::vector<BinaryMask> preds{pred, gt}, gts{gt, gt};
  const auto r = eval_text_seg(preds, gts);
  CHECK(r.caption_iou == Approx(0.75));
  CHECK(r.mfpr == Approx(1.0 / 3));
  CHECK(r.samples == 2);
  CHECK(report_json(r) == R"({"caption_iou":75.0,"mfpr":33.3,"mfnr":16.7,"samples":2})");
  CHECK(eval_text_seg({}, {}).samples == 0);
}

TEST_CASE("tag-level segmentation by hand") {
  TagSegSample s;
  s.tags = {"A", "B"};
  s.simmaps = {ScalarMap(2, 2, {0.9, 0.9, 0.1, 0.1}), ScalarMap(2, 2, {0.1, 0.2, 0.8, 0.2})};
  s.gt_masks = {{"A", mask(2, 2, {1, 0, 0, 0})}, {"B", mask(2, 2, {0, 1, 1, 0})}};
  const std::vector<TagSegSample> one{s};
  const auto r = eval_tag_seg(one, 0.4);
  CHECK(r.per_class_iou.at("A") == Approx(0.5));
  CHECK(r.per_class_iou.at("B") == Approx(0.5));
  CHECK(r.miou == Approx(0.5));

  TagSegSample single;
  single.tags = {"A"};
  single.simmaps = {ScalarMap(1, 2, {1.0, 0.0})};
  single.gt_masks = {{"A", mask(1, 2, {1, 0})}};
  CHECK(eval_tag_seg(std::vector<TagSegSample>{single}, 0.5).miou == 1.0);
  single.simmaps = {ScalarMap(1, 2, 0.2)};
  CHECK(eval_tag_seg(std::vector<TagSegSample>{single}, 0.5).miou == 0.0);
  single.gt_masks.clear();
  CHECK_THROWS_AS(eval_tag_seg(std::vector<TagSegSample>{single}, 0.5), ContractError);
}

TEST_CASE("property: tag metrics match set-counting oracles") {
  std::mt19937_64 rng(41);
  const double levels[] = {0.1, 0.25, 0.5, 0.75, 0.9};
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t samples = 1 + rng() % 4;
    std::vector<std::vector<std::string>> preds(samples), truths(samples);
    std::vector<TagScores> scores(samples);
    testutil::SetCounts want;
    double ap_sum = 0.0;
    std::size_t ap_n = 0;
    for (std::size_t s = 0; s < samples; ++s) {
      const std::size_t n = 1 + rng() % 8;
      std::set<std::string> cand, p, t;
      std::vector<double> vals;
      std::vector<bool> rel;
      for (std::size_t i = 0; i < n; ++i) {
        const std::string tag = "t" + std::to_string(i);
        cand.insert(tag);
        const double v = levels[rng() % 5];
        scores[s].entries.push_back({tag, v});
        vals.push_back(v);
        if (rng() & 1) p.insert(tag), preds[s].push_back(tag);
        const bool truth = rng() & 1;
        if (truth) t.insert(tag), truths[s].push_back(tag);
        rel.push_back(truth);
      }
      const auto c = testutil::oracle_counts(cand, p, t);
      want.tp += c.tp, want.fp += c.fp, want.tn += c.tn, want.fn += c.fn;
      if (!t.empty()) ap_sum += testutil::oracle_ap(vals, rel), ++ap_n;
      CHECK(average_precision(vals, rel) == Approx(testutil::oracle_ap(vals, rel)).epsilon(1e-12));
    }
    const auto r = eval_tags(preds, truths, scores);
    CHECK(r.counts == ConfusionCounts{want.tp, want.fp, want.tn, want.fn});
    CHECK(r.map == Approx(ap_n ? ap_sum / ap_n : 0.0).epsilon(1e-12));
    for (double v : {r.precision, r.recall, r.f1, r.accuracy, r.map}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK((r.f1 == 0.0) == (r.counts.tp == 0));
  }
}

TEST_CASE("property: AP is 1 exactly when positives outrank negatives") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng() % 8;
    std::vector<double> vals(n);
    std::vector<bool> rel(n);
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      vals[i] = static_cast<double>(rng() % 5);
      rel[i] = rng() & 1;
      any = any || rel[i];
    }
    if (!any) continue;
    bool separated = true;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (rel[i] && !rel[j] && vals[i] <= vals[j]) separated = false;
      }
    }
    CHECK((average_precision(vals, rel) == 1.0) == separated);
  }
}

TEST_CASE("property: mask metrics match set oracles and swap roles") {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t h = 1 + rng() % 5, w = 1 + rng() % 5;
    const auto p = testutil::random_mask(rng, h, w);
    const auto g = testutil::random_mask(rng, h, w);
    const auto m = mask_rates(p, g);
    const auto o = testutil::oracle_mask_rates(p, g);
    CHECK(m.iou == o.iou);
    CHECK(m.fpr == o.fpr);
    CHECK(m.fnr == o.fnr);
    const auto swapped = mask_rates(g, p);
    CHECK(swapped.iou == m.iou);
    // False positives of (p, g) are the false negatives of (g, p).
    const double n = static_cast<double>(h * w);
    CHECK(m.fpr * (n - g.count()) == Approx(swapped.fnr * p.count()));
  }
}

TEST_CASE("property: binarize is monotone in the threshold") {
  std::mt19937_64 rng(44);
  for (int trial = 0; trial < 200; ++trial) {
    const auto map = testutil::random_map(rng, 1 + rng() % 5, 1 + rng() % 5);
    const double lo = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    const double hi = lo + std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const auto a = binarize(map, lo), b = binarize(map, hi);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] <= a[i]);
  }
}

TEST_CASE("property: tag-level mIoU matches the set oracle") {
  std::mt19937_64 rng(45);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t h = 1 + rng() % 5, w = 1 + rng() % 5;
    std::vector<TagSegSample> samples(1 + rng() % 3);
    for (auto& s : samples) {
      const std::size_t n = 1 + rng() % 4;
      for (std::size_t i = 0; i < n; ++i) {
        const std::string tag = "t" + std::to_string(rng() % 6);
        if (std::find(s.tags.begin(), s.tags.end(), tag) != s.tags.end()) continue;
        s.tags.push_back(tag);
        s.simmaps.push_back(testutil::random_map(rng, h, w));
        s.gt_masks.emplace(tag, testutil::random_mask(rng, h, w));
      }
    }
    CHECK(eval_tag_seg(samples, 0.2).miou == Approx(testutil::oracle_tag_miou(samples, 0.2)).epsilon(1e-12));
  }
}
