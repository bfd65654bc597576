#include "pixeltag/metrics.hpp"

#include <algorithm>
#include <set>

#include "pixeltag/errors.hpp"
#include "pixeltag/json_line.hpp"

namespace pixeltag {

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

void check_same_shape(const BinaryMask& a, const BinaryMask& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError("mask shapes differ: " + std::to_string(a.height()) + "x" +
                     std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                     std::to_string(b.width()));
  }
}

}  // namespace

double f1_score(double precision, double recall) {
  const double sum = precision + recall;
  return sum > 0.0 ? 2.0 * precision * recall / sum : 0.0;
}

double average_precision(std::span<const double> scores, const std::vector<bool>& relevant) {
  if (scores.size() != relevant.size()) throw ShapeError("scores and relevance differ in length");
  std::size_t positives = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!relevant[i]) continue;
    ++positives;
    std::size_t rank = 0;
    std::size_t hits = 0;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (scores[j] >= scores[i]) {
        ++rank;
        hits += relevant[j] ? 1 : 0;
      }
    }
    sum += static_cast<double>(hits) / static_cast<double>(rank);
  }
  return positives == 0 ? 0.0 : sum / static_cast<double>(positives);
}

TagEvalReport eval_tags(std::span<const std::vector<std::string>> predictions,
                        std::span<const std::vector<std::string>> truths,
                        std::span<const TagScores> scores) {
  if (predictions.size() != truths.size() || predictions.size() != scores.size()) {
    throw ShapeError("predictions, truths and scores must cover the same samples");
  }
  TagEvalReport r;
  double ap_sum = 0.0;
  for (std::size_t s = 0; s < scores.size(); ++s) {
    std::set<std::string> candidates;
    for (const auto& e : scores[s].entries) candidates.insert(e.tag);
    const std::set<std::string> pred(predictions[s].begin(), predictions[s].end());
    const std::set<std::string> truth(truths[s].begin(), truths[s].end());
    for (const auto& t : pred) {
      if (!candidates.contains(t)) {
        throw ContractError("sample " + std::to_string(s) + ": predicted tag \"" + t +
                            "\" is not a candidate");
      }
    }
    for (const auto& t : truth) {
      if (!candidates.contains(t)) {
        throw ContractError("sample " + std::to_string(s) + ": true tag \"" + t +
                            "\" is not a candidate");
      }
    }

    std::vector<double> values;
    std::vector<bool> relevant;
    for (const auto& e : scores[s].entries) {
      const bool p = pred.contains(e.tag);
      const bool t = truth.contains(e.tag);
      if (p && t) ++r.counts.tp;
      else if (p) ++r.counts.fp;
      else if (t) ++r.counts.fn;
      else ++r.counts.tn;
      values.push_back(e.score);
      relevant.push_back(t);
    }
    if (!truth.empty()) {
      ap_sum += average_precision(values, relevant);
      ++r.map_samples;
    }
  }
  const auto& c = r.counts;
  r.precision = ratio(c.tp, c.tp + c.fp);
  r.recall = ratio(c.tp, c.tp + c.fn);
  r.f1 = f1_score(r.precision, r.recall);
  r.accuracy = ratio(c.tp + c.tn, c.total());
  r.map = r.map_samples == 0 ? 0.0 : ap_sum / static_cast<double>(r.map_samples);
  return r;
}

BinaryMask binarize(const ScalarMap& map, double threshold) {
  std::vector<std::uint8_t> data(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) data[i] = map[i] > threshold ? 1 : 0;
  return BinaryMask(map.height, map.width, std::move(data));
}

MaskRates mask_rates(const BinaryMask& pred, const BinaryMask& gt) {
  check_same_shape(pred, gt);
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0;
    const bool g = gt[i] != 0;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  MaskRates m;
  const std::size_t uni = c.tp + c.fp + c.fn;
  m.iou = uni == 0 ? 1.0 : ratio(c.tp, uni);
  m.fpr = ratio(c.fp, c.fp + c.tn);
  m.fnr = ratio(c.fn, c.fn + c.tp);
  return m;
}

SegEvalReport eval_text_seg(std::span<const BinaryMask> pred_masks, std::span<const BinaryMask> gt_masks) {
  if (pred_masks.size() != gt_masks.size()) throw ShapeError("prediction and ground-truth counts differ");
  SegEvalReport r;
  r.samples = pred_masks.size();
  if (r.samples == 0) return r;
  for (std::size_t i = 0; i < pred_masks.size(); ++i) {
    const auto m = mask_rates(pred_masks[i], gt_masks[i]);
    r.caption_iou += m.iou;
    r.mfpr += m.fpr;
    r.mfnr += m.fnr;
  }
  const double n = static_cast<double>(r.samples);
  r.caption_iou /= n;
  r.mfpr /= n;
  r.mfnr /= n;
  return r;
}

TagSegReport eval_tag_seg(std::span<const TagSegSample> samples, double background_threshold) {
  struct Acc {
    std::size_t inter = 0;
    std::size_t uni = 0;
    std::size_t gt = 0;
  };
  std::map<std::string, Acc> acc;
  for (const auto& s : samples) {
    if (s.simmaps.size() != s.tags.size()) throw ShapeError("one similarity map per tag required");
    if (s.tags.empty()) continue;
    const auto& first = s.simmaps.front();
    for (const auto& m : s.simmaps) {
      if (!m.same_shape(first)) throw ShapeError("tag similarity maps differ in shape");
    }
    for (const auto& [tag, mask] : s.gt_masks) {
      if (mask.height() != first.height || mask.width() != first.width) {
        throw ShapeError("ground-truth mask for \"" + tag + "\" does not match the map shape");
      }
    }
    for (const auto& t : s.tags) {
      if (!s.gt_masks.contains(t)) throw ContractError("tag \"" + t + "\" has no ground-truth mask");
    }

    constexpr std::size_t kBackground = static_cast<std::size_t>(-1);
    std::vector<std::size_t> assigned(first.size(), kBackground);
    for (std::size_t p = 0; p < first.size(); ++p) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < s.simmaps.size(); ++i) {
        if (s.simmaps[i][p] > s.simmaps[best][p]) best = i;
      }
      if (s.simmaps[best][p] > background_threshold) assigned[p] = best;
    }
    for (std::size_t i = 0; i < s.tags.size(); ++i) {
      const auto& gt = s.gt_masks.at(s.tags[i]);
      auto& a = acc[s.tags[i]];
      for (std::size_t p = 0; p < first.size(); ++p) {
        const bool pred = assigned[p] == i;
        const bool truth = gt[p] != 0;
        a.inter += pred && truth;
        a.uni += pred || truth;
        a.gt += truth;
      }
    }
  }
  TagSegReport r;
  double sum = 0.0;
  for (const auto& [tag, a] : acc) {
    if (a.gt == 0) continue;
    const double iou = ratio(a.inter, a.uni);
    r.per_class_iou.emplace(tag, iou);
    sum += iou;
  }
  if (!r.per_class_iou.empty()) r.miou = sum / static_cast<double>(r.per_class_iou.size());
  return r;
}

std::string report_json(const TagEvalReport& r) {
  return JsonLine()
      .num("precision", 100.0 * r.precision, 1)
      .num("recall", 100.0 * r.recall, 1)
      .num("f1", 100.0 * r.f1, 1)
      .num("accuracy", 100.0 * r.accuracy, 1)
      .num("map", 100.0 * r.map, 1)
      .integer("tp", static_cast<long long>(r.counts.tp))
      .integer("fp", static_cast<long long>(r.counts.fp))
      .integer("tn", static_cast<long long>(r.counts.tn))
      .integer("fn", static_cast<long long>(r.counts.fn))
      .done();
}

std::string report_json(const SegEvalReport& r) {
  return JsonLine()
      .num("caption_iou", 100.0 * r.caption_iou, 1)
      .num("mfpr", 100.0 * r.mfpr, 1)
      .num("mfnr", 100.0 * r.mfnr, 1)
      .integer("samples", static_cast<long long>(r.samples))
      .done();
}

}  // namespace pixeltag
