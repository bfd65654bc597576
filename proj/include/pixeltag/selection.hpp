#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pixeltag/scoring.hpp"

namespace pixeltag {

struct SelectionResult {
  // Selected tags, in descending-score order.
  std::vector<std::string> selected;
  // All candidate tags sorted by descending score (stable in candidate order).
  std::vector<std::string> ordering;
  // gaps[k] = score(ordering[k]) - score(ordering[k+1]).
  std::vector<double> gaps;
  // Gap mode: index of the last selected tag in `ordering`. Threshold mode: none.
  std::optional<std::size_t> boundary_index;

  bool contains(std::string_view tag) const;
  friend bool operator==(const SelectionResult&, const SelectionResult&) = default;
};

// Keeps the tags above the largest drop in the descending score sequence.
// The first of several equal largest gaps wins; a single candidate is
// selected on its own. Throws EmptyInputError on no candidates.
SelectionResult select_by_gap(const TagScores& scores);

// Keeps tags scoring strictly above `threshold`; may select nothing.
SelectionResult select_by_threshold(const TagScores& scores, double threshold);

// Selection policy as written on the command line: "gap" or "threshold:<v>".
struct SelectionPolicy {
  enum class Mode { Gap, Threshold } mode = Mode::Gap;
  double threshold = 0.5;

  static SelectionPolicy parse(std::string_view text);
  std::string to_string() const;
  SelectionResult apply(const TagScores& scores) const;
};

// Keeps samples whose similarity exceeds mean + population std. dev.,
// in input order. Throws EmptyInputError on an empty list.
std::vector<std::string> prune_samples(std::span<const std::pair<std::string, double>> pair_sims);

}  // namespace pixeltag
