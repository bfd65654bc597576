#include "pixeltag/distill.hpp"

#include <algorithm>
#include <cmath>

#include "pixeltag/errors.hpp"
#include "pixeltag/scoring.hpp"

namespace pixeltag {

namespace {

constexpr double kConstantRange = 1e-12;

double reduction_scale(const PixelMap& pixels, Reduction r) {
  return r == Reduction::Mean ? 1.0 / static_cast<double>(pixels.positions()) : 1.0;
}

void check_text(const PixelMap& pixels, std::span<const double> text) {
  if (text.size() != pixels.channels()) {
    throw ShapeError("text embedding has " + std::to_string(text.size()) +
                     " channels, pixel map has " + std::to_string(pixels.channels()));
  }
}

double squared_distance(const ScalarMap& a, const ScalarMap* b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - (b ? (*b)[i] : 0.0);
    sum += d * d;
  }
  return sum;
}

double tag_term(const PixelMap& pixels, std::span<const double> tag,
                const std::optional<ScalarMap>& target, double scale) {
  return scale * squared_distance(simmap(pixels, tag), target ? &*target : nullptr);
}

}  // namespace

std::string_view to_string(Reduction r) { return r == Reduction::Sum ? "sum" : "mean"; }

Reduction parse_reduction(std::string_view name) {
  if (name == "sum") return Reduction::Sum;
  if (name == "mean") return Reduction::Mean;
  throw ConfigError("unknown loss reduction \"" + std::string(name) + "\" (valid: sum, mean)");
}

ScalarMap minmax_norm(const ScalarMap& map) {
  if (map.size() == 0) throw ShapeError("min-max normalization of an empty map");
  const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
  const double min = *lo;
  const double range = *hi - min;
  ScalarMap out(map.height, map.width);
  if (range < kConstantRange) return out;
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = (map[i] - min) / range;
  return out;
}

ScalarMap union_max(std::span<const ScalarMap> maps, std::size_t height, std::size_t width) {
  ScalarMap out(height, width);
  if (maps.empty()) return out;
  for (const auto& m : maps) {
    if (m.height != height || m.width != width) {
      throw ShapeError("union of maps with mismatched shapes");
    }
  }
  out = maps.front();
  for (const auto& m : maps.subspan(1)) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], m[i]);
  }
  return out;
}

PseudoLabel build_pseudo_label(const PixelMap& pixels, std::span<const TagEmbedding> selected_tags) {
  std::vector<ScalarMap> normalized;
  PseudoLabel label;
  for (const auto& t : selected_tags) {
    normalized.push_back(minmax_norm(simmap(pixels, t.embedding)));
    label.contributors.push_back(t.tag);
  }
  label.union_map = union_max(normalized, pixels.height(), pixels.width());
  return label;
}

double loss_distill(const PixelMap& pixels, std::span<const double> text, const PseudoLabel& pseudo,
                    Reduction reduction) {
  check_text(pixels, text);
  if (pseudo.union_map.height != pixels.height() || pseudo.union_map.width != pixels.width()) {
    throw ShapeError("pseudo-label shape does not match the pixel map");
  }
  return reduction_scale(pixels, reduction) * squared_distance(simmap(pixels, text), &pseudo.union_map);
}

DistillTargets freeze_targets(const PixelMap& pixels, std::span<const TagEmbedding> candidates,
                              std::span<const std::string> selected) {
  for (const auto& s : selected) {
    const bool known = std::any_of(candidates.begin(), candidates.end(),
                                   [&](const TagEmbedding& c) { return c.tag == s; });
    if (!known) throw ContractError("selected tag \"" + s + "\" is not a candidate");
  }
  DistillTargets t;
  std::vector<ScalarMap> normalized;
  for (const auto& c : candidates) {
    if (std::find(selected.begin(), selected.end(), c.tag) != selected.end()) {
      normalized.push_back(minmax_norm(simmap(pixels, c.embedding)));
      t.tag_targets.emplace_back(normalized.back());
    } else {
      t.tag_targets.emplace_back(std::nullopt);
    }
  }
  t.union_map = union_max(normalized, pixels.height(), pixels.width());
  return t;
}

TagLoss loss_tag(const PixelMap& pixels, std::span<const TagEmbedding> candidates,
                 std::span<const std::string> selected, Reduction reduction) {
  const auto targets = freeze_targets(pixels, candidates, selected);
  const double scale = reduction_scale(pixels, reduction);
  TagLoss out;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double d = tag_term(pixels, candidates[i].embedding, targets.tag_targets[i], scale);
    out.per_tag.emplace_back(candidates[i].tag, d);
    out.total += d;
  }
  return out;
}

LossReport loss_total(const PixelMap& pixels, std::span<const double> text,
                      std::span<const TagEmbedding> candidates, std::span<const std::string> selected,
                      Reduction reduction) {
  return evaluate_loss(pixels, text, candidates, freeze_targets(pixels, candidates, selected),
                       reduction);
}

LossReport evaluate_loss(const PixelMap& pixels, std::span<const double> text,
                         std::span<const TagEmbedding> candidates, const DistillTargets& targets,
                         Reduction reduction, LossTerms terms) {
  check_text(pixels, text);
  const double scale = reduction_scale(pixels, reduction);
  LossReport r;
  if (terms.distill) {
    r.l_distill = scale * squared_distance(simmap(pixels, text), &targets.union_map);
  }
  if (terms.tag) {
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const double d = tag_term(pixels, candidates[i].embedding, targets.tag_targets.at(i), scale);
      r.per_tag.emplace_back(candidates[i].tag, d);
      r.l_tag += d;
    }
  }
  r.total = r.l_distill + r.l_tag;
  return r;
}

void accumulate_cosine_grad(std::span<const double> a, std::span<const double> b, double c,
                            double weight, std::span<double> out) {
  const double na = norm(a);
  const double nb = norm(b);
  const double k_b = weight / (na * nb);
  const double k_a = weight * c / (na * na);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += k_b * b[i] - k_a * a[i];
}

Evaluation evaluate(const PixelMap& pixels, std::span<const double> text,
                    std::span<const TagEmbedding> candidates, const DistillTargets& targets,
                    Reduction reduction, LossTerms terms) {
  check_text(pixels, text);
  const double scale = reduction_scale(pixels, reduction);
  Evaluation ev;
  auto& g = ev.grad;
  g.d_pixels = PixelMap(pixels.height(), pixels.width(), pixels.channels());
  g.d_text.assign(text.size(), 0.0);
  for (const auto& c : candidates) g.d_tags.push_back({c.tag, Embedding(c.embedding.size(), 0.0)});

  // d/dx of scale * sum_p (c_p - target_p)^2 routes 2*scale*(c_p - target_p)
  // through the cosine at each pixel into both of its arguments.
  auto accumulate_term = [&](std::span<const double> embedding, const ScalarMap& live,
                             const ScalarMap* target, std::span<double> d_embedding) {
    double sum = 0.0;
    for (std::size_t p = 0; p < pixels.positions(); ++p) {
      const double residual = live[p] - (target ? (*target)[p] : 0.0);
      sum += residual * residual;
      if (residual == 0.0) continue;
      const double w = 2.0 * scale * residual;
      const auto px = pixels.pixel(p);
      accumulate_cosine_grad(px, embedding, live[p], w, g.d_pixels.pixel(p));
      accumulate_cosine_grad(embedding, px, live[p], w, d_embedding);
    }
    return scale * sum;
  };

  if (terms.distill) {
    ev.loss.l_distill = accumulate_term(text, simmap(pixels, text), &targets.union_map, g.d_text);
  }
  if (terms.tag) {
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const auto& target = targets.tag_targets.at(i);
      const double d = accumulate_term(candidates[i].embedding, simmap(pixels, candidates[i].embedding),
                                       target ? &*target : nullptr, g.d_tags[i].embedding);
      ev.loss.per_tag.emplace_back(candidates[i].tag, d);
      ev.loss.l_tag += d;
    }
  }
  ev.loss.total = ev.loss.l_distill + ev.loss.l_tag;
  return ev;
}

GradientBundle grad_total(const PixelMap& pixels, std::span<const double> text,
                          std::span<const TagEmbedding> candidates,
                          std::span<const std::string> selected, Reduction reduction) {
  return evaluate(pixels, text, candidates, freeze_targets(pixels, candidates, selected), reduction)
      .grad;
}

double finite_diff_check(const PixelMap& pixels, std::span<const double> text,
                         std::span<const TagEmbedding> candidates,
                         std::span<const std::string> selected, double step, Reduction reduction) {
  if (!(step > 0.0)) throw ConfigError("finite-difference step must be positive");
  const auto targets = freeze_targets(pixels, candidates, selected);
  const auto analytic = evaluate(pixels, text, candidates, targets, reduction).grad;

  PixelMap px = pixels;
  Embedding tx(text.begin(), text.end());
  std::vector<TagEmbedding> tags(candidates.begin(), candidates.end());
  auto loss = [&] { return evaluate_loss(px, tx, tags, targets, reduction).total; };

  double worst = 0.0;
  auto probe = [&](double& coord, double grad) {
    const double saved = coord;
    coord = saved + step;
    const double up = loss();
    coord = saved - step;
    const double down = loss();
    coord = saved;
    const double numeric = (up - down) / (2.0 * step);
    worst = std::max(worst, std::abs(grad - numeric) / std::max(1.0, std::abs(grad)));
  };

  for (std::size_t i = 0; i < px.values().size(); ++i) probe(px.values()[i], analytic.d_pixels.values()[i]);
  for (std::size_t i = 0; i < tx.size(); ++i) probe(tx[i], analytic.d_text[i]);
  for (std::size_t t = 0; t < tags.size(); ++t) {
    for (std::size_t i = 0; i < tags[t].embedding.size(); ++i) {
      probe(tags[t].embedding[i], analytic.d_tags[t].embedding[i]);
    }
  }
  return worst;
}

}  // namespace pixeltag
