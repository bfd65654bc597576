#include "pixeltag/cli.hpp"

#include <algorithm>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "pixeltag/adapter.hpp"
#include "pixeltag/errors.hpp"
#include "pixeltag/fixture.hpp"
#include "pixeltag/json_line.hpp"
#include "pixeltag/manifest.hpp"
#include "pixeltag/metrics.hpp"

namespace pixeltag::cli {

namespace fs = std::filesystem;

namespace {

constexpr int kScoreDecimals = 6;

struct RunConfig {
  fs::path manifest;
  fs::path out_dir = ".";
  std::string method = "pixel";
  std::string selection = "gap";
  double binarize_threshold = 0.4;
  double background_threshold = 0.4;
  std::string reduction = "sum";
  std::string batch_reduction = "sum";
  double learning_rate = 1e-4;
  double weight_decay = 5e-5;
  int epochs = 1;
  int batch_size = 32;
  std::size_t rank = 4;
  double alpha = 1.0;
  bool separate_adapters = false;
  std::uint64_t seed = 0;
  double step = 1e-4;
  int jobs = 1;
  fs::path predictions;
  fs::path checkpoint;
  std::size_t fixture_samples = 10;
};

// Resolved views of the string flags; parse errors surface as ConfigError.
struct Resolved {
  ScoreMethod method;
  SelectionPolicy selection;
  Reduction reduction;
  std::optional<AdapterSet> adapters;
};

Resolved resolve(const RunConfig& c) {
  Resolved r{parse_score_method(c.method), SelectionPolicy::parse(c.selection),
             parse_reduction(c.reduction), std::nullopt};
  parse_reduction(c.batch_reduction);
  if (c.jobs < 1) throw ConfigError("--jobs must be >= 1");
  return r;
}

TrainConfig train_config(const RunConfig& c, const Resolved& r) {
  TrainConfig t;
  t.learning_rate = c.learning_rate;
  t.weight_decay = c.weight_decay;
  t.epochs = c.epochs;
  t.batch_size = c.batch_size;
  t.seed = c.seed;
  t.selection = r.selection;
  t.selection_scoring = r.method;
  t.loss_reduction = r.reduction;
  t.batch_reduction = parse_reduction(c.batch_reduction);
  t.rank = c.rank;
  t.alpha = c.alpha;
  t.shared_adapter = !c.separate_adapters;
  return t;
}

// A file produced by a subcommand, written only after every sample succeeded.
struct Staged {
  fs::path path;
  std::vector<std::uint8_t> bytes;
};

struct SampleOutput {
  std::string line;
  std::vector<Staged> files;
  double value = 0.0;
};

void commit(const fs::path& dir, const std::vector<SampleOutput>& outputs) {
  bool any = false;
  for (const auto& o : outputs) any = any || !o.files.empty();
  if (!any) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir.string() + ": cannot create output directory: " + ec.message());
  for (const auto& o : outputs) {
    for (const auto& f : o.files) write_bytes_atomic(f.path, f.bytes);
  }
}

std::string tag_array(const std::vector<std::string>& tags) {
  std::string s = "[";
  for (std::size_t i = 0; i < tags.size(); ++i) s += (i ? "," : "") + pixeltag::quoted(tags[i]);
  return s + "]";
}

std::vector<Sample> load_all(const std::vector<SampleManifest>& manifests, const Resolved& r) {
  std::vector<Sample> out;
  out.reserve(manifests.size());
  for (const auto& m : manifests) {
    try {
      out.push_back(r.adapters ? adapt_sample(*r.adapters, load_sample(m)) : load_sample(m));
    } catch (const DataError& e) {
      throw DataError("sample \"" + m.sample_id + "\": " + e.what());
    }
  }
  return out;
}

// Runs `fn` on every sample with up to `jobs` threads; results keep manifest
// order and the earliest failing sample's error is rethrown.
template <typename Fn>
std::vector<SampleOutput> for_each_sample(const std::vector<Sample>& samples, int jobs, Fn fn) {
  std::vector<SampleOutput> results(samples.size());
  std::vector<std::exception_ptr> errors(samples.size());
  auto work = [&](std::size_t worker, std::size_t workers) {
    for (std::size_t i = worker; i < samples.size(); i += workers) {
      try {
        results[i] = fn(samples[i]);
      } catch (const DataError& e) {
        errors[i] = std::make_exception_ptr(DataError("sample \"" + samples[i].id + "\": " + e.what()));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), std::max<std::size_t>(1, samples.size()));
  if (workers <= 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

void emit(std::ostream& out, const std::vector<SampleOutput>& outputs) {
  for (const auto& o : outputs) {
    if (!o.line.empty()) out << o.line << '\n';
  }
}

Staged stage_tensor(const fs::path& path, const Tensor& t) { return {path, encode_tensor(t)}; }
Staged stage_mask(const fs::path& path, const BinaryMask& m) { return {path, encode_mask(m)}; }

std::vector<std::string> selected_tags(const Sample& s, const Resolved& r) {
  if (s.candidates.empty()) return {};
  return r.selection.apply(score_all(s, r.method)).selected;
}

std::vector<TagEmbedding> embeddings_of(const Sample& s, const std::vector<std::string>& tags) {
  std::vector<TagEmbedding> out;
  for (const auto& t : tags) {
    for (const auto& c : s.candidates) {
      if (c.tag == t) out.push_back(c);
    }
  }
  return out;
}

// ---- subcommands ------------------------------------------------------------

int cmd_score(const RunConfig& c, const Resolved& r, std::ostream& out, std::ostream&) {
  const auto samples = load_all(load_manifest(c.manifest), r);
  emit(out, for_each_sample(samples, c.jobs, [&](const Sample& s) {
         return SampleOutput{score_line(s.id, score_all(s, r.method)), {}};
       }));
  return kOk;
}

int cmd_select(const RunConfig& c, const Resolved& r, std::ostream& out, std::ostream&) {
  const auto samples = load_all(load_manifest(c.manifest), r);
  emit(out, for_each_sample(samples, c.jobs, [&](const Sample& s) {
         const auto scores = score_all(s, r.method);
         const auto result = s.candidates.empty() ? SelectionResult{} : r.selection.apply(scores);
         return SampleOutput{selection_line(s.id, scores, r.selection, result), {}};
       }));
  return kOk;
}

int cmd_pseudolabel(const RunConfig& c, const Resolved& r, std::ostream& out, std::ostream&) {
  const auto samples = load_all(load_manifest(c.manifest), r);
  auto outputs = for_each_sample(samples, c.jobs, [&](const Sample& s) {
    const auto label = build_pseudo_label(s.pixels, embeddings_of(s, selected_tags(s, r)));
    const auto name = s.id + ".pseudolabel.ttdt";
    SampleOutput o;
    o.line = JsonLine()
                 .str("sample_id", s.id)
                 .raw("contributors", tag_array(label.contributors))
                 .str("path", name)
                 .done();
    o.files.push_back(stage_tensor(c.out_dir / name, label.union_map.to_tensor()));
    return o;
  });
  commit(c.out_dir, outputs);
  emit(out, outputs);
  return kOk;
}

int cmd_loss(const RunConfig& c, const Resolved& r, std::ostream& out, std::ostream&) {
  const auto samples = load_all(load_manifest(c.manifest), r);
  emit(out, for_each_sample(samples, c.jobs, [&](const Sample& s) {
         const auto selected = selected_tags(s, r);
         const auto report = loss_total(s.pixels, s.text_embedding, s.candidates, selected, r.reduction);
         return SampleOutput{loss_line(s.id, selected, report), {}};
       }));
  return kOk;
}

int cmd_gradcheck(const RunConfig& c, const Resolved& r, std::ostream& out, std::ostream& err) {
  if (!(c.step > 0.0)) throw ConfigError("--step must be positive");
  const auto samples = load_all(load_manifest(c.manifest), r);
  auto outputs = for_each_sample(samples, c.jobs, [&](const Sample& s) {
    const auto selected = selected_tags(s, r);
    const double e = finite_diff_check(s.pixels, s.text_embedding, s.candidates, selected, c.step, r.reduction);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6e", e);
    return SampleOutput{
        JsonLine().str("sample_id", s.id).raw("max_rel_error", buf).done(), {}, e};
  });
  emit(out, outputs);
  double worst = 0.0;
  for (const auto& o : outputs) worst = std::max(worst, o.value);
  err << "gradcheck: " << samples.size() << " samples, max relative error " << worst << "\n";
  return kOk;
}

int cmd_train(const RunConfig& c, const Resolved& r, std::ostream& out, std::ostream& err) {
  const auto config = train_config(c, r);
  config.validate();
  const auto samples = load_all(load_manifest(c.manifest), r);
  if (samples.empty()) throw EmptyInputError("training manifest has no samples");
  const auto log = train(std::span<const Sample>(samples), config);

  std::string csv = "step,l_distill,l_tag,total\n";
  for (const auto& s : log.steps) {
    csv += std::to_string(s.step) + "," + fixed(s.l_distill, 9) + "," + fixed(s.l_tag, 9) + "," +
           fixed(s.total, 9) + "\n";
  }
  save_checkpoint(log.adapters, config, c.out_dir);
  write_bytes_atomic(c.out_dir / "train_log.csv",
                     std::span(reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()));

  const auto& first = log.steps.front();
  const auto& last = log.steps.back();
  out << JsonLine()
             .integer("steps", static_cast<long long>(log.steps.size()))
             .num("initial_total", first.total, kScoreDecimals)
             .num("final_total", last.total, kScoreDecimals)
             .str("config_hash", config.hash())
             .done()
      << '\n';
  err << "train: " << log.steps.size() << " steps, total loss " << first.total << " -> " << last.total
      << "\n";
  return kOk;
}

std::map<std::string, std::vector<std::string>> read_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open predictions");
  std::map<std::string, std::vector<std::string>> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out[j.at("sample_id").get<std::string>()] = j.at("selected").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

int cmd_eval_tags(const RunConfig& c, const Resolved& r, std::ostream& out, std::ostream& err) {
  const auto samples = load_all(load_manifest(c.manifest), r);
  std::optional<std::map<std::string, std::vector<std::string>>> given;
  if (!c.predictions.empty()) given = read_predictions(c.predictions);

  std::vector<std::vector<std::string>> preds;
  std::vector<std::vector<std::string>> truths;
  std::vector<TagScores> scores;
  for (const auto& s : samples) {
    if (!s.gt_tags) throw SchemaError("sample \"" + s.id + "\": gt_tags required for eval-tags");
    scores.push_back(score_all(s, r.method));
    if (given) {
      auto it = given->find(s.id);
      if (it == given->end()) throw SchemaError("sample \"" + s.id + "\": no prediction given");
      preds.push_back(it->second);
    } else {
      preds.push_back(s.candidates.empty() ? std::vector<std::string>{}
                                           : r.selection.apply(scores.back()).selected);
    }
    truths.push_back(*s.gt_tags);
  }
  const auto report = eval_tags(preds, truths, scores);
  out << report_json(report) << '\n';
  err << "eval-tags: " << samples.size() << " samples, F1 " << fixed(100.0 * report.f1, 1) << "\n";
  return kOk;
}

int cmd_eval_seg(const RunConfig& c, const Resolved& r, std::ostream& out, std::ostream& err) {
  const auto samples = load_all(load_manifest(c.manifest), r);
  std::vector<BinaryMask> preds;
  std::vector<BinaryMask> gts;
  std::vector<TagSegSample> tag_samples;
  std::vector<SampleOutput> staged;
  for (const auto& s : samples) {
    if (s.gt_text_mask) {
      const auto mask = binarize(simmap(s.pixels, s.text_embedding), c.binarize_threshold);
      const auto name = s.id + ".textmask.ttdt";
      staged.push_back({"", {stage_mask(c.out_dir / name, mask)}});
      preds.push_back(mask);
      gts.push_back(*s.gt_text_mask);
    }
    TagSegSample ts;
    for (const auto& cand : s.candidates) {
      auto it = s.gt_tag_masks.find(cand.tag);
      if (it == s.gt_tag_masks.end()) continue;
      ts.tags.push_back(cand.tag);
      ts.simmaps.push_back(simmap(s.pixels, cand.embedding));
      ts.gt_masks.emplace(it->first, it->second);
    }
    if (!ts.tags.empty()) tag_samples.push_back(std::move(ts));
  }
  const auto text_report = eval_text_seg(preds, gts);
  const auto tag_report = eval_tag_seg(tag_samples, c.background_threshold);
  commit(c.out_dir, staged);
  out << JsonLine()
             .num("caption_iou", 100.0 * text_report.caption_iou, 1)
             .num("mfpr", 100.0 * text_report.mfpr, 1)
             .num("mfnr", 100.0 * text_report.mfnr, 1)
             .num("miou", 100.0 * tag_report.miou, 1)
             .integer("samples", static_cast<long long>(text_report.samples))
             .done()
      << '\n';
  err << "eval-seg: CaptionIoU " << fixed(100.0 * text_report.caption_iou, 1) << " over "
      << text_report.samples << " samples\n";
  return kOk;
}

int cmd_prune(const RunConfig& c, const Resolved& r, std::ostream& out, std::ostream& err) {
  const auto samples = load_all(load_manifest(c.manifest), r);
  if (samples.empty()) return kOk;
  std::vector<std::pair<std::string, double>> sims;
  for (const auto& s : samples) sims.emplace_back(s.id, cosine(global_pool(s.pixels), s.text_embedding));
  const auto kept = prune_samples(sims);
  for (const auto& [id, v] : sims) {
    if (std::find(kept.begin(), kept.end(), id) == kept.end()) continue;
    out << JsonLine().str("sample_id", id).num("similarity", v, kScoreDecimals).done() << '\n';
  }
  err << "prune: kept " << kept.size() << " of " << samples.size() << " samples\n";
  return kOk;
}

int cmd_fixture(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto samples = make_bias_dataset(c.seed, c.fixture_samples);
  const auto manifest = write_fixture(samples, c.out_dir);
  out << JsonLine().str("manifest", manifest.generic_string()).integer("samples", static_cast<long long>(samples.size())).done() << '\n';
  err << "fixture: wrote " << samples.size() << " samples to " << c.out_dir.string() << "\n";
  return kOk;
}

}  // namespace

std::string score_line(const std::string& sample_id, const TagScores& scores) {
  std::string arr = "[";
  for (std::size_t i = 0; i < scores.entries.size(); ++i) {
    arr += (i ? ",[" : "[") + pixeltag::quoted(scores.entries[i].tag) + "," +
           fixed(scores.entries[i].score, kScoreDecimals) + "]";
  }
  arr += "]";
  return JsonLine()
      .str("sample_id", sample_id)
      .str("method", to_string(scores.method))
      .raw("scores", arr)
      .done();
}

std::string selection_line(const std::string& sample_id, const TagScores& scores,
                           const SelectionPolicy& policy, const SelectionResult& result) {
  std::string gaps = "[";
  for (std::size_t i = 0; i < result.gaps.size(); ++i) {
    gaps += (i ? "," : "") + fixed(result.gaps[i], kScoreDecimals);
  }
  gaps += "]";
  return JsonLine()
      .str("sample_id", sample_id)
      .str("method", to_string(scores.method))
      .str("selection", policy.to_string())
      .raw("selected", tag_array(result.selected))
      .raw("ordering", tag_array(result.ordering))
      .raw("gaps", gaps)
      .raw("boundary_index", result.boundary_index ? std::to_string(*result.boundary_index) : "null")
      .done();
}

std::string loss_line(const std::string& sample_id, const std::vector<std::string>& selected,
                      const LossReport& report) {
  JsonLine per_tag;
  for (const auto& [tag, d] : report.per_tag) per_tag.num(tag, d, kScoreDecimals);
  return JsonLine()
      .str("sample_id", sample_id)
      .raw("selected", tag_array(selected))
      .num("l_distill", report.l_distill, kScoreDecimals)
      .num("l_tag", report.l_tag, kScoreDecimals)
      .num("total", report.total, kScoreDecimals)
      .raw("per_tag", per_tag.done())
      .done();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"pixeltag: pixel-tag scoring, tag selection and self-distillation over embedding tensors"};
  app.require_subcommand(1);
  RunConfig c;

  app.add_option("--manifest", c.manifest, "JSON-lines sample manifest");
  app.add_option("--out", c.out_dir, "Output directory for tensors and checkpoints")->capture_default_str();
  app.add_option("--method", c.method, "Tag scoring: image|text|pixel|seg")->capture_default_str();
  app.add_option("--selection", c.selection, "Tag selection: gap|threshold:<v>")->capture_default_str();
  app.add_option("--binarize-threshold", c.binarize_threshold, "Foreground threshold for text masks")
      ->capture_default_str();
  app.add_option("--background-threshold", c.background_threshold,
                 "Background threshold for tag-level segmentation")
      ->capture_default_str();
  app.add_option("--reduction", c.reduction, "Per-map loss reduction: sum|mean")->capture_default_str();
  app.add_option("--batch-reduction", c.batch_reduction, "Per-batch loss reduction: sum|mean")
      ->capture_default_str();
  app.add_option("--lr", c.learning_rate, "Learning rate")->capture_default_str();
  app.add_option("--weight-decay", c.weight_decay, "Decoupled weight decay")->capture_default_str();
  app.add_option("--epochs", c.epochs, "Training epochs")->capture_default_str();
  app.add_option("--batch-size", c.batch_size, "Samples per step")->capture_default_str();
  app.add_option("--rank", c.rank, "Adapter rank")->capture_default_str();
  app.add_option("--alpha", c.alpha, "Adapter scale numerator")->capture_default_str();
  app.add_flag("--separate-adapters", c.separate_adapters, "Separate adapters for image and text");
  app.add_option("--seed", c.seed, "Seed for adapter init and fixtures")->capture_default_str();
  app.add_option("--step", c.step, "Finite-difference step")->capture_default_str();
  app.add_option("--jobs", c.jobs, "Worker threads across samples")->capture_default_str();
  app.add_option("--predictions", c.predictions, "JSON-lines selections for eval-tags");
  app.add_option("--checkpoint", c.checkpoint, "Apply a trained adapter checkpoint to all embeddings");
  app.add_option("--samples", c.fixture_samples, "Number of fixture samples")->capture_default_str();

  using Handler = int (*)(const RunConfig&, const Resolved&, std::ostream&, std::ostream&);
  const std::vector<std::tuple<const char*, const char*, Handler>> commands = {
      {"score", "Score candidate tags per sample", cmd_score},
      {"select", "Select pseudo-tags per sample", cmd_select},
      {"pseudolabel", "Write union pseudo-label maps", cmd_pseudolabel},
      {"loss", "Report distillation and tag losses", cmd_loss},
      {"gradcheck", "Compare analytic gradients with finite differences", cmd_gradcheck},
      {"train", "Train a low-rank adapter", cmd_train},
      {"eval-tags", "Multi-tag selection metrics", cmd_eval_tags},
      {"eval-seg", "Text- and tag-level segmentation metrics", cmd_eval_seg},
      {"prune", "Keep samples above mean + std of image-text similarity", cmd_prune},
  };
  std::vector<std::pair<CLI::App*, Handler>> subs;
  for (const auto& [name, help, handler] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->fallthrough();
    subs.emplace_back(sub, handler);
  }
  auto* fixture = app.add_subcommand("fixture", "Write the synthetic fixture");
  fixture->fallthrough();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }

  try {
    if (fixture->parsed()) return cmd_fixture(c, out, err);
    Resolved r = resolve(c);
    for (const auto& [sub, handler] : subs) {
      if (!sub->parsed()) continue;
      if (c.manifest.empty()) throw ConfigError("--manifest is required for " + sub->get_name());
      if (!c.checkpoint.empty()) r.adapters = load_checkpoint(c.checkpoint);
      return handler(c, r, out, err);
    }
    throw ConfigError("no subcommand given");
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  }
}

}  // namespace pixeltag::cli
