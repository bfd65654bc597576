#pragma once

// Self-distillation objective over one image-text sample.
//
//   L_distill = || simmap(text) - U ||^2,   U = max_i norm(simmap(tag_i)), i selected
//   L_tag     = sum_i D(tag_i)
//   D(tag_i)  = || simmap(tag_i) - norm(simmap(tag_i)) ||^2   if selected
//             = || simmap(tag_i) ||^2                         otherwise
//
// U and the normalized per-tag maps are stop-gradient targets: they are
// computed once (DistillTargets) and held constant for differentiation.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pixeltag/embedding.hpp"

namespace pixeltag {

// Sum matches the squared L2 norm as written; Mean divides each norm by H*W.
enum class Reduction { Sum, Mean };

std::string_view to_string(Reduction r);
Reduction parse_reduction(std::string_view name);

// (x - min)/(max - min); a constant map (range < 1e-12) maps to zeros.
ScalarMap minmax_norm(const ScalarMap& map);

// Element-wise maximum. An empty list yields a zero map of the given shape.
ScalarMap union_max(std::span<const ScalarMap> maps, std::size_t height, std::size_t width);

struct PseudoLabel {
  ScalarMap union_map;
  std::vector<std::string> contributors;
};

PseudoLabel build_pseudo_label(const PixelMap& pixels, std::span<const TagEmbedding> selected_tags);

double loss_distill(const PixelMap& pixels, std::span<const double> text, const PseudoLabel& pseudo,
                    Reduction reduction = Reduction::Sum);

struct TagLoss {
  double total = 0.0;
  std::vector<std::pair<std::string, double>> per_tag;  // candidate order
};

TagLoss loss_tag(const PixelMap& pixels, std::span<const TagEmbedding> candidates,
                 std::span<const std::string> selected, Reduction reduction = Reduction::Sum);

struct LossReport {
  double l_distill = 0.0;
  double l_tag = 0.0;
  double total = 0.0;
  std::vector<std::pair<std::string, double>> per_tag;
};

LossReport loss_total(const PixelMap& pixels, std::span<const double> text,
                      std::span<const TagEmbedding> candidates, std::span<const std::string> selected,
                      Reduction reduction = Reduction::Sum);

struct GradientBundle {
  PixelMap d_pixels;
  Embedding d_text;
  std::vector<TagEmbedding> d_tags;  // candidate order
};

// Stop-gradient targets evaluated at one point.
struct DistillTargets {
  ScalarMap union_map;
  // Normalized simmap for selected tags; nullopt (target 0) for the rest.
  std::vector<std::optional<ScalarMap>> tag_targets;
};

// Throws ContractError if a selected tag is not a candidate.
DistillTargets freeze_targets(const PixelMap& pixels, std::span<const TagEmbedding> candidates,
                              std::span<const std::string> selected);

// Which terms contribute to an evaluation.
struct LossTerms {
  bool distill = true;
  bool tag = true;
};

struct Evaluation {
  LossReport loss;
  GradientBundle grad;
};

LossReport evaluate_loss(const PixelMap& pixels, std::span<const double> text,
                         std::span<const TagEmbedding> candidates, const DistillTargets& targets,
                         Reduction reduction = Reduction::Sum, LossTerms terms = {});

Evaluation evaluate(const PixelMap& pixels, std::span<const double> text,
                    std::span<const TagEmbedding> candidates, const DistillTargets& targets,
                    Reduction reduction = Reduction::Sum, LossTerms terms = {});

GradientBundle grad_total(const PixelMap& pixels, std::span<const double> text,
                          std::span<const TagEmbedding> candidates,
                          std::span<const std::string> selected,
                          Reduction reduction = Reduction::Sum);

// Gradient of cosine(a, b) with respect to a, scaled by `weight` and added to `out`:
//   b/(|a||b|) - c*a/|a|^2
void accumulate_cosine_grad(std::span<const double> a, std::span<const double> b, double c,
                            double weight, std::span<double> out);

// Central differences against grad_total with targets frozen at the base point.
// Returns max over coordinates of |analytic - numeric| / max(1, |analytic|).
double finite_diff_check(const PixelMap& pixels, std::span<const double> text,
                         std::span<const TagEmbedding> candidates,
                         std::span<const std::string> selected, double step,
                         Reduction reduction = Reduction::Sum);

}  // namespace pixeltag
