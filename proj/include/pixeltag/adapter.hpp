#pragma once

// Low-rank adapter training at toy scale. The adapter maps every embedding
// e -> e + (alpha/r) * B * (A * e) and stands in for LoRA updates of the
// image and text encoders.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pixeltag/distill.hpp"
#include "pixeltag/embedding.hpp"
#include "pixeltag/manifest.hpp"
#include "pixeltag/scoring.hpp"
#include "pixeltag/selection.hpp"

namespace pixeltag {

struct LowRankAdapter {
  std::size_t rank = 0;
  std::size_t dim = 0;
  double alpha = 1.0;
  std::vector<double> down;  // A: rank x dim, row-major
  std::vector<double> up;    // B: dim x rank, row-major

  // A ~ N(0, 1/dim) from `seed`, B = 0, so the adapter starts as the identity.
  static LowRankAdapter init(std::size_t dim, std::size_t rank, double alpha, std::uint64_t seed);

  double scale() const { return alpha / static_cast<double>(rank); }
  void validate() const;

  friend bool operator==(const LowRankAdapter&, const LowRankAdapter&) = default;
};

Embedding apply_adapter(const LowRankAdapter& adapter, std::span<const double> e);
PixelMap apply_adapter(const LowRankAdapter& adapter, const PixelMap& pixels);

struct AdapterGrad {
  std::vector<double> d_down;
  std::vector<double> d_up;

  explicit AdapterGrad(const LowRankAdapter& a) : d_down(a.down.size(), 0.0), d_up(a.up.size(), 0.0) {}
};

// Chains g = dL/d(adapted e) back to the adapter parameters:
//   dL/dB += w * (alpha/r) * g * (A e)^T,  dL/dA += w * (alpha/r) * (B^T g) * e^T
void accumulate_adapter_grad(const LowRankAdapter& adapter, std::span<const double> e,
                             std::span<const double> g, AdapterGrad& grad, double weight = 1.0);

// One adapter for pixels; a second one for text and tags when the branches
// are trained separately.
struct AdapterSet {
  LowRankAdapter visual;
  std::optional<LowRankAdapter> textual;

  const LowRankAdapter& text_side() const { return textual ? *textual : visual; }
  friend bool operator==(const AdapterSet&, const AdapterSet&) = default;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 5e-5;
  int epochs = 1;
  int batch_size = 32;
  std::uint64_t seed = 0;
  SelectionPolicy selection{};
  ScoreMethod selection_scoring = ScoreMethod::Pixel;
  Reduction loss_reduction = Reduction::Sum;
  // How per-sample losses combine within a batch.
  Reduction batch_reduction = Reduction::Sum;
  std::size_t rank = 4;
  double alpha = 1.0;
  bool shared_adapter = true;

  // Throws ConfigError. A learning rate of exactly 0 is accepted.
  void validate() const;
  std::string to_json() const;
  std::string hash() const;  // FNV-1a 64 of to_json(), hex
};

AdapterSet init_adapters(std::size_t dim, const TrainConfig& config);

// Sample with every embedding passed through the adapters.
Sample adapt_sample(const AdapterSet& adapters, const Sample& sample);

struct StepRecord {
  std::size_t step = 0;
  double l_distill = 0.0;
  double l_tag = 0.0;
  double total = 0.0;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  AdapterSet adapters;

  friend bool operator==(const TrainLog&, const TrainLog&) = default;
};

// Tag selection and stop-gradient targets computed on adapted embeddings.
std::vector<DistillTargets> freeze_batch(const AdapterSet& adapters, std::span<const Sample> batch,
                                         const TrainConfig& config);

struct BatchEvaluation {
  double l_distill = 0.0;
  double l_tag = 0.0;
  double total = 0.0;
  AdapterGrad visual;
  std::optional<AdapterGrad> textual;
};

// Loss and adapter gradients for a batch with targets held fixed.
BatchEvaluation evaluate_batch(const AdapterSet& adapters, std::span<const Sample> batch,
                               std::span<const DistillTargets> targets, const TrainConfig& config);

// Loss over all samples at the current adapters, with fresh selection.
StepRecord evaluate_dataset(const AdapterSet& adapters, std::span<const Sample> samples,
                            const TrainConfig& config);

// Plain gradient descent with decoupled weight decay, fixed sample order.
// Throws DivergenceError naming the step if a loss or gradient is non-finite.
TrainLog train(std::span<const Sample> samples, const TrainConfig& config);
TrainLog train(const std::vector<SampleManifest>& samples, const TrainConfig& config);

// Writes adapter.A.ttdt / adapter.B.ttdt (plus text_adapter.* when separate)
// and adapter.json with rank, alpha and the config hash.
void save_checkpoint(const AdapterSet& adapters, const TrainConfig& config,
                     const std::filesystem::path& dir);
AdapterSet load_checkpoint(const std::filesystem::path& dir);

}  // namespace pixeltag
