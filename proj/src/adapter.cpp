#include "pixeltag/adapter.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include <json.hpp>

#include "pixeltag/errors.hpp"

namespace pixeltag {

using nlohmann::json;

LowRankAdapter LowRankAdapter::init(std::size_t dim, std::size_t rank, double alpha,
                                    std::uint64_t seed) {
  LowRankAdapter a;
  a.rank = rank;
  a.dim = dim;
  a.alpha = alpha;
  a.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  a.down.resize(rank * dim);
  for (auto& v : a.down) v = normal(rng);
  a.up.assign(dim * rank, 0.0);
  return a;
}

void LowRankAdapter::validate() const {
  if (rank == 0 || dim == 0) throw ConfigError("adapter rank and dimension must be positive");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("adapter alpha must be positive");
  if (!down.empty() && down.size() != rank * dim) throw ShapeError("adapter A has the wrong size");
  if (!up.empty() && up.size() != dim * rank) throw ShapeError("adapter B has the wrong size");
}

Embedding apply_adapter(const LowRankAdapter& adapter, std::span<const double> e) {
  if (e.size() != adapter.dim) {
    throw ShapeError("adapter expects dimension " + std::to_string(adapter.dim) + ", got " +
                     std::to_string(e.size()));
  }
  const std::size_t r = adapter.rank;
  const std::size_t c = adapter.dim;
  std::vector<double> low(r, 0.0);
  for (std::size_t k = 0; k < r; ++k) {
    for (std::size_t j = 0; j < c; ++j) low[k] += adapter.down[k * c + j] * e[j];
  }
  const double s = adapter.scale();
  Embedding out(e.begin(), e.end());
  for (std::size_t i = 0; i < c; ++i) {
    double delta = 0.0;
    for (std::size_t k = 0; k < r; ++k) delta += adapter.up[i * r + k] * low[k];
    out[i] += s * delta;
  }
  return out;
}

PixelMap apply_adapter(const LowRankAdapter& adapter, const PixelMap& pixels) {
  PixelMap out(pixels.height(), pixels.width(), pixels.channels());
  for (std::size_t p = 0; p < pixels.positions(); ++p) {
    const auto adapted = apply_adapter(adapter, pixels.pixel(p));
    std::copy(adapted.begin(), adapted.end(), out.pixel(p).begin());
  }
  return out;
}

void accumulate_adapter_grad(const LowRankAdapter& adapter, std::span<const double> e,
                             std::span<const double> g, AdapterGrad& grad, double weight) {
  const std::size_t r = adapter.rank;
  const std::size_t c = adapter.dim;
  std::vector<double> low(r, 0.0);   // A e
  std::vector<double> back(r, 0.0);  // B^T g
  for (std::size_t k = 0; k < r; ++k) {
    for (std::size_t j = 0; j < c; ++j) {
      low[k] += adapter.down[k * c + j] * e[j];
      back[k] += adapter.up[j * r + k] * g[j];
    }
  }
  const double s = weight * adapter.scale();
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t k = 0; k < r; ++k) grad.d_up[i * r + k] += s * g[i] * low[k];
  }
  for (std::size_t k = 0; k < r; ++k) {
    for (std::size_t j = 0; j < c; ++j) grad.d_down[k * c + j] += s * back[k] * e[j];
  }
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be a finite value >= 0");
  }
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw ConfigError("weight decay must be a finite value >= 0");
  }
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (rank < 1) throw ConfigError("adapter rank must be >= 1");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("adapter alpha must be positive");
}

std::string TrainConfig::to_json() const {
  json j;
  j["learning_rate"] = learning_rate;
  j["weight_decay"] = weight_decay;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  j["selection"] = selection.to_string();
  j["selection_scoring"] = std::string(to_string(selection_scoring));
  j["loss_reduction"] = std::string(to_string(loss_reduction));
  j["batch_reduction"] = std::string(to_string(batch_reduction));
  j["rank"] = rank;
  j["alpha"] = alpha;
  j["shared_adapter"] = shared_adapter;
  return j.dump();
}

std::string TrainConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_json()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

AdapterSet init_adapters(std::size_t dim, const TrainConfig& config) {
  AdapterSet set{LowRankAdapter::init(dim, config.rank, config.alpha, config.seed), std::nullopt};
  if (!config.shared_adapter) {
    set.textual = LowRankAdapter::init(dim, config.rank, config.alpha, config.seed + 1);
  }
  return set;
}

Sample adapt_sample(const AdapterSet& adapters, const Sample& sample) {
  Sample out = sample;
  out.pixels = apply_adapter(adapters.visual, sample.pixels);
  const auto& text_side = adapters.text_side();
  out.text_embedding = apply_adapter(text_side, sample.text_embedding);
  for (auto& c : out.candidates) c.embedding = apply_adapter(text_side, c.embedding);
  return out;
}

std::vector<DistillTargets> freeze_batch(const AdapterSet& adapters, std::span<const Sample> batch,
                                         const TrainConfig& config) {
  std::vector<DistillTargets> out;
  out.reserve(batch.size());
  for (const auto& sample : batch) {
    const Sample adapted = adapt_sample(adapters, sample);
    std::vector<std::string> selected;
    if (!adapted.candidates.empty()) {
      selected = config.selection.apply(score_all(adapted, config.selection_scoring)).selected;
    }
    out.push_back(freeze_targets(adapted.pixels, adapted.candidates, selected));
  }
  return out;
}

BatchEvaluation evaluate_batch(const AdapterSet& adapters, std::span<const Sample> batch,
                               std::span<const DistillTargets> targets, const TrainConfig& config) {
  if (targets.size() != batch.size()) throw ShapeError("one target set per batch sample required");
  BatchEvaluation be{0.0, 0.0, 0.0, AdapterGrad(adapters.visual), std::nullopt};
  if (adapters.textual) be.textual.emplace(*adapters.textual);
  AdapterGrad& text_grad = be.textual ? *be.textual : be.visual;
  const auto& text_side = adapters.text_side();

  const double weight = config.batch_reduction == Reduction::Mean && !batch.empty()
                            ? 1.0 / static_cast<double>(batch.size())
                            : 1.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Sample& raw = batch[i];
    const Sample adapted = adapt_sample(adapters, raw);
    const auto ev = evaluate(adapted.pixels, adapted.text_embedding, adapted.candidates, targets[i],
                             config.loss_reduction);
    be.l_distill += weight * ev.loss.l_distill;
    be.l_tag += weight * ev.loss.l_tag;

    for (std::size_t p = 0; p < raw.pixels.positions(); ++p) {
      accumulate_adapter_grad(adapters.visual, raw.pixels.pixel(p), ev.grad.d_pixels.pixel(p),
                              be.visual, weight);
    }
    accumulate_adapter_grad(text_side, raw.text_embedding, ev.grad.d_text, text_grad, weight);
    for (std::size_t t = 0; t < raw.candidates.size(); ++t) {
      accumulate_adapter_grad(text_side, raw.candidates[t].embedding, ev.grad.d_tags[t].embedding,
                              text_grad, weight);
    }
  }
  be.total = be.l_distill + be.l_tag;
  return be;
}

StepRecord evaluate_dataset(const AdapterSet& adapters, std::span<const Sample> samples,
                            const TrainConfig& config) {
  const auto targets = freeze_batch(adapters, samples, config);
  const auto be = evaluate_batch(adapters, samples, targets, config);
  return {0, be.l_distill, be.l_tag, be.total};
}

namespace {

bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void descend(LowRankAdapter& a, const AdapterGrad& g, const TrainConfig& config, std::size_t step) {
  if (!all_finite(g.d_down) || !all_finite(g.d_up)) {
    throw DivergenceError("non-finite adapter gradient at step " + std::to_string(step));
  }
  const double lr = config.learning_rate;
  const double decay = lr * config.weight_decay;
  for (std::size_t i = 0; i < a.down.size(); ++i) a.down[i] -= lr * g.d_down[i] + decay * a.down[i];
  for (std::size_t i = 0; i < a.up.size(); ++i) a.up[i] -= lr * g.d_up[i] + decay * a.up[i];
}

}  // namespace

TrainLog train(std::span<const Sample> samples, const TrainConfig& config) {
  config.validate();
  if (samples.empty()) throw EmptyInputError("training needs at least one sample");
  const std::size_t dim = samples.front().pixels.channels();
  for (const auto& s : samples) {
    if (s.pixels.channels() != dim) {
      throw ShapeError("sample \"" + s.id + "\" has " + std::to_string(s.pixels.channels()) +
                       " channels, expected " + std::to_string(dim));
    }
  }

  TrainLog log;
  log.adapters = init_adapters(dim, config);
  const auto batch = static_cast<std::size_t>(config.batch_size);
  std::size_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t start = 0; start < samples.size(); start += batch, ++step) {
      const auto chunk = samples.subspan(start, std::min(batch, samples.size() - start));
      const auto targets = freeze_batch(log.adapters, chunk, config);
      const auto be = evaluate_batch(log.adapters, chunk, targets, config);
      if (!std::isfinite(be.total)) {
        throw DivergenceError("non-finite loss at step " + std::to_string(step));
      }
      log.steps.push_back({step, be.l_distill, be.l_tag, be.total});
      descend(log.adapters.visual, be.visual, config, step);
      if (log.adapters.textual) descend(*log.adapters.textual, *be.textual, config, step);
    }
  }
  return log;
}

TrainLog train(const std::vector<SampleManifest>& samples, const TrainConfig& config) {
  std::vector<Sample> loaded;
  loaded.reserve(samples.size());
  for (const auto& m : samples) loaded.push_back(load_sample(m));
  return train(std::span<const Sample>(loaded), config);
}

namespace {

void save_pair(const LowRankAdapter& a, const std::filesystem::path& dir, const std::string& stem) {
  write_tensor(Tensor({a.rank, a.dim}, std::vector<float>(a.down.begin(), a.down.end())),
               dir / (stem + ".A.ttdt"));
  write_tensor(Tensor({a.dim, a.rank}, std::vector<float>(a.up.begin(), a.up.end())),
               dir / (stem + ".B.ttdt"));
}

LowRankAdapter load_pair(const std::filesystem::path& dir, const std::string& stem,
                         std::size_t rank, double alpha) {
  const auto a = read_tensor(dir / (stem + ".A.ttdt"));
  const auto b = read_tensor(dir / (stem + ".B.ttdt"));
  if (a.ndim() != 2 || b.ndim() != 2 || a.dims()[0] != rank || b.dims()[1] != rank ||
      a.dims()[1] != b.dims()[0]) {
    throw ShapeError(dir.string() + ": adapter tensors disagree with the sidecar rank");
  }
  LowRankAdapter out;
  out.rank = rank;
  out.dim = a.dims()[1];
  out.alpha = alpha;
  out.down.assign(a.data().begin(), a.data().end());
  out.up.assign(b.data().begin(), b.data().end());
  return out;
}

}  // namespace

void save_checkpoint(const AdapterSet& adapters, const TrainConfig& config,
                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_pair(adapters.visual, dir, "adapter");
  if (adapters.textual) save_pair(*adapters.textual, dir, "text_adapter");
  json sidecar;
  sidecar["rank"] = adapters.visual.rank;
  sidecar["alpha"] = adapters.visual.alpha;
  sidecar["dim"] = adapters.visual.dim;
  sidecar["shared"] = !adapters.textual.has_value();
  sidecar["config_hash"] = config.hash();
  sidecar["config"] = json::parse(config.to_json());
  const auto text = sidecar.dump(2) + "\n";
  write_bytes_atomic(dir / "adapter.json",
                     std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

AdapterSet load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "adapter.json");
  if (!in) throw IoError((dir / "adapter.json").string() + ": cannot open");
  json sidecar;
  try {
    sidecar = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError((dir / "adapter.json").string() + ": " + e.what());
  }
  try {
    const auto rank = sidecar.at("rank").get<std::size_t>();
    const auto alpha = sidecar.at("alpha").get<double>();
    AdapterSet set{load_pair(dir, "adapter", rank, alpha), std::nullopt};
    if (!sidecar.at("shared").get<bool>()) set.textual = load_pair(dir, "text_adapter", rank, alpha);
    return set;
  } catch (const json::exception& e) {
    throw SchemaError((dir / "adapter.json").string() + ": " + e.what());
  }
}

}  // namespace pixeltag
