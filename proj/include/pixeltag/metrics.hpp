#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "pixeltag/embedding.hpp"
#include "pixeltag/scoring.hpp"
#include "pixeltag/tensor_io.hpp"

namespace pixeltag {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

// Fractions in [0,1]; rendered as percentages by report_json.
struct TagEvalReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  double map = 0.0;  // sample-wise mean average precision
  ConfusionCounts counts;
  std::size_t map_samples = 0;  // samples with at least one true tag
};

struct SegEvalReport {
  double caption_iou = 0.0;
  double mfpr = 0.0;
  double mfnr = 0.0;
  std::size_t samples = 0;
};

struct TagSegReport {
  double miou = 0.0;
  std::map<std::string, double> per_class_iou;
};

// 2PR/(P+R), or 0 when P+R == 0.
double f1_score(double precision, double recall);

// Mean over relevant items of precision at that item's rank under descending
// score. Tied items all take the worst rank of their tie group. Returns 0
// when nothing is relevant.
double average_precision(std::span<const double> scores, const std::vector<bool>& relevant);

// Counts are micro-aggregated over every (sample, candidate) decision. The
// candidate set of a sample is the tag list of its TagScores. Throws
// ContractError if a predicted or true tag is not a candidate.
TagEvalReport eval_tags(std::span<const std::vector<std::string>> predictions,
                        std::span<const std::vector<std::string>> truths,
                        std::span<const TagScores> scores);

// 1 where value > threshold.
BinaryMask binarize(const ScalarMap& map, double threshold);

struct MaskRates {
  double iou = 0.0;
  double fpr = 0.0;
  double fnr = 0.0;
};

// IoU of two empty masks is 1; FPR without negatives and FNR without
// positives are 0.
MaskRates mask_rates(const BinaryMask& pred, const BinaryMask& gt);

SegEvalReport eval_text_seg(std::span<const BinaryMask> pred_masks, std::span<const BinaryMask> gt_masks);

struct TagSegSample {
  std::vector<std::string> tags;
  std::vector<ScalarMap> simmaps;  // one per tag
  std::map<std::string, BinaryMask> gt_masks;
};

// Pixels take the argmax tag (earliest on ties), or background when the max
// is <= background_threshold. IoU per tag is accumulated over all samples;
// the mean runs over tags with at least one ground-truth pixel.
TagSegReport eval_tag_seg(std::span<const TagSegSample> samples, double background_threshold);

// JSON objects with fraction fields rendered as percentages, one decimal.
std::string report_json(const TagEvalReport& r);
std::string report_json(const SegEvalReport& r);

}  // namespace pixeltag
