#include "pixeltag/selection.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pixeltag/errors.hpp"

namespace pixeltag {

namespace {

constexpr double kCutoffTolerance = 1e-12;

std::vector<std::size_t> descending_order(const TagScores& scores) {
  std::vector<std::size_t> idx(scores.entries.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores.entries[a].score > scores.entries[b].score;
  });
  return idx;
}

SelectionResult ordered(const TagScores& scores, const std::vector<std::size_t>& idx) {
  SelectionResult r;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    r.ordering.push_back(scores.entries[idx[k]].tag);
    if (k + 1 < idx.size()) {
      r.gaps.push_back(scores.entries[idx[k]].score - scores.entries[idx[k + 1]].score);
    }
  }
  return r;
}

}  // namespace

bool SelectionResult::contains(std::string_view tag) const {
  return std::find(selected.begin(), selected.end(), tag) != selected.end();
}

SelectionResult select_by_gap(const TagScores& scores) {
  if (scores.entries.empty()) throw EmptyInputError("gap selection over zero candidates");
  const auto idx = descending_order(scores);
  auto r = ordered(scores, idx);
  std::size_t boundary = 0;
  for (std::size_t k = 1; k < r.gaps.size(); ++k) {
    if (r.gaps[k] > r.gaps[boundary]) boundary = k;
  }
  r.boundary_index = boundary;
  r.selected.assign(r.ordering.begin(), r.ordering.begin() + static_cast<std::ptrdiff_t>(boundary + 1));
  return r;
}

SelectionResult select_by_threshold(const TagScores& scores, double threshold) {
  const auto idx = descending_order(scores);
  auto r = ordered(scores, idx);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (scores.entries[idx[k]].score > threshold) r.selected.push_back(r.ordering[k]);
  }
  return r;
}

SelectionPolicy SelectionPolicy::parse(std::string_view text) {
  if (text == "gap") return {};
  constexpr std::string_view prefix = "threshold:";
  if (text.starts_with(prefix)) {
    const std::string value(text.substr(prefix.size()));
    try {
      std::size_t used = 0;
      const double v = std::stod(value, &used);
      if (used == value.size() && std::isfinite(v)) return {Mode::Threshold, v};
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("invalid selection \"" + std::string(text) +
                    "\" (expected \"gap\" or \"threshold:<value>\")");
}

std::string SelectionPolicy::to_string() const {
  if (mode == Mode::Gap) return "gap";
  std::ostringstream os;
  os << "threshold:" << threshold;
  return os.str();
}

SelectionResult SelectionPolicy::apply(const TagScores& scores) const {
  return mode == Mode::Gap ? select_by_gap(scores) : select_by_threshold(scores, threshold);
}

std::vector<std::string> prune_samples(std::span<const std::pair<std::string, double>> pair_sims) {
  if (pair_sims.empty()) throw EmptyInputError("sample pruning over an empty list");
  // A constant list has sigma 0 and nothing strictly above the mean; decide
  // it exactly rather than through a rounded mean.
  const double first = pair_sims.front().second;
  if (std::all_of(pair_sims.begin(), pair_sims.end(), [&](const auto& p) { return p.second == first; })) {
    return {};
  }
  const double n = static_cast<double>(pair_sims.size());
  double mean = 0.0;
  for (const auto& [id, v] : pair_sims) mean += v;
  mean /= n;
  double var = 0.0;
  for (const auto& [id, v] : pair_sims) var += (v - mean) * (v - mean);
  const double cutoff = mean + std::sqrt(var / n);
  // Two equally sized score levels put the upper one exactly on mean + sigma;
  // rounding must not push it over.
  double scale = 1.0;
  for (const auto& [id, v] : pair_sims) scale = std::max(scale, std::abs(v));
  const double tie = kCutoffTolerance * scale;

  std::vector<std::string> kept;
  for (const auto& [id, v] : pair_sims) {
    if (v - cutoff > tie) kept.push_back(id);
  }
  return kept;
}

}  // namespace pixeltag
