#pragma once

// annofuse command-line front end. Exit codes: 0 success, 1 I/O failure,
// 2 invalid input or flags. Logs go to `err`; datasets only to files.

#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "annofuse/annofuse.hpp"

namespace annofuse::cli {

enum ExitCode : int { kOk = 0, kIoError = 1, kValidationError = 2 };

class Logger {
 public:
  Logger(std::ostream& err, int verbosity) : err_(err), verbosity_(verbosity) {}

  void info(const std::string& msg) const {
    if (verbosity_ > 0) err_ << "annofuse: " << msg << "\n";
  }
  void warn(const std::string& msg) const {
    if (verbosity_ >= 0) err_ << "annofuse: warning: " << msg << "\n";
  }
  void error(const std::string& msg) const { err_ << "annofuse: error: " << msg << "\n"; }
  void report(const Diagnostics& d) const {
    for (const auto& w : d.warnings) warn(w);
  }

 private:
  std::ostream& err_;
  int verbosity_;
};

struct SimulateArgs {
  std::string out_dir;
  SimConfig config;
  double diag_mean = 0.0;
  double jitter_floor = 0.0;
  unsigned workers = 1;
};

struct FuseArgs {
  std::string input;
  std::string output;
  double iou_thresh = 0.4;
  std::string confidence_mode = "normalized_agreement";
  int num_annotators = 0;
  unsigned workers = 1;
};

struct EvalArgs {
  std::string truth;
  std::string predictions;
  std::vector<std::string> thresholds{"0.4", "0.5:0.95:0.05"};
  std::string annotator;
  std::string output;
};

struct WeightsArgs {
  std::string input;
  std::string output;
};

struct RenderArgs {
  std::string input;
  std::string image;
  std::string output;
};

struct ConvertArgs {
  std::string input;
  std::string output;
  std::string dialect = "corner_form";
  std::string kind;
};

namespace detail {

inline void write_expert_files(const SimulatedDataset& sim, const std::filesystem::path& dir) {
  for (std::size_t k = 0; k < sim.experts.size(); ++k) {
    DatasetFile f;
    f.categories = sim.categories;
    f.annotators = {sim.annotators[k]};
    f.scenes = sim.experts[k];
    write_file(f, (dir / (sim.annotators[k].id + ".json")).string());
  }
}

inline int run_simulate(const SimulateArgs& a, const Logger& log) {
  SimConfig config = a.config;
  if (a.diag_mean > 0.0) config.diagonal_mean = a.diag_mean;
  if (a.jitter_floor > 0.0) config.jitter_iou_floor = a.jitter_floor;
  validate(config);

  const std::filesystem::path dir(a.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + a.out_dir + "': " + ec.message());

  const SimulatedDataset sim = generate_dataset(config, a.workers);
  if (sim.skipped_objects > 0) {
    log.info(std::to_string(sim.skipped_objects) + " objects skipped: no placement met the overlap cap");
  }

  DatasetFile truth;
  truth.categories = sim.categories;
  truth.scenes = sim.truth;
  write_file(truth, (dir / "ground_truth.json").string());

  DatasetFile merged;
  merged.categories = sim.categories;
  merged.annotators = sim.annotators;
  merged.scenes = sim.merged_annotations();
  write_file(merged, (dir / "annotations.json").string());

  write_expert_files(sim, dir);
  write_file(sim.matrices, (dir / "transition_matrices.json").string());
  log.info("wrote " + std::to_string(sim.truth.size()) + " scenes and " +
           std::to_string(sim.experts.size()) + " expert sets to " + a.out_dir);
  return kOk;
}

inline int run_fuse(const FuseArgs& a, const Logger& log) {
  Diagnostics diag;
  const DatasetFile in = parse_file(a.input, DatasetKind::multi_annotator, &diag);
  log.report(diag);
  FusionConfig config;
  config.match_iou_threshold = a.iou_thresh;
  config.confidence_mode = parse_confidence_mode(a.confidence_mode);
  if (a.num_annotators > 0) config.num_annotators = a.num_annotators;

  DatasetFile out;
  out.categories = in.categories;
  out.annotators = in.annotators;
  out.confidence_mode = config.confidence_mode;
  out.scenes = fuse_dataset(in.scenes_as<AnnotatedBox>(), in.annotators, config, a.workers);
  write_file(out, a.output);
  log.info("fused " + std::to_string(out.num_images()) + " images into " + a.output);
  return kOk;
}

inline bool same_categories(std::vector<Category> a, std::vector<Category> b) {
  auto by_id = [](const Category& x, const Category& y) { return x.id < y.id; };
  std::sort(a.begin(), a.end(), by_id);
  std::sort(b.begin(), b.end(), by_id);
  return a == b;
}

/// Views any dataset kind as scored boxes. Multi-annotator files yield one
/// set per annotator.
inline std::vector<std::pair<std::string, SceneSet<ScoredBox>>> as_predictions(
    const DatasetFile& f, const std::string& only_annotator) {
  std::vector<std::pair<std::string, SceneSet<ScoredBox>>> out;
  auto convert = [](const auto& scenes, auto&& keep, auto&& score) {
    SceneSet<ScoredBox> s;
    for (const auto& scene : scenes) {
      Scene<ScoredBox> x{scene.image_id, scene.width, scene.height, {}};
      for (const auto& item : scene.items) {
        if (keep(item)) x.items.push_back({item.box, item.category, score(item)});
      }
      s.push_back(std::move(x));
    }
    return s;
  };
  auto all = [](const auto&) { return true; };
  auto one = [](const auto&) { return 1.0; };
  switch (f.kind()) {
    case DatasetKind::predictions:
      out.emplace_back("predictions", convert(f.scenes_as<ScoredBox>(), all,
                                              [](const ScoredBox& b) { return b.score; }));
      break;
    case DatasetKind::fused:
      if (f.confidence_mode == ConfidenceMode::raw_count) {
        throw ValidationError("raw_count fused files cannot be scored; fuse with normalized_agreement");
      }
      out.emplace_back("fused", convert(f.scenes_as<FusedBox>(), all,
                                        [](const FusedBox& b) { return b.confidence; }));
      break;
    case DatasetKind::ground_truth:
      out.emplace_back("ground_truth", convert(f.scenes_as<LabeledBox>(), all, one));
      break;
    case DatasetKind::multi_annotator:
      for (const auto& ann : f.annotators) {
        if (!only_annotator.empty() && ann.id != only_annotator) continue;
        out.emplace_back(ann.id, convert(f.scenes_as<AnnotatedBox>(),
                                         [&](const AnnotatedBox& b) { return b.annotator == ann.id; }, one));
      }
      if (out.empty()) throw ValidationError("annotator '" + only_annotator + "' not found");
      break;
  }
  return out;
}

inline int run_eval(const EvalArgs& a, std::ostream& out, const Logger& log) {
  Diagnostics diag;
  const DatasetFile truth = parse_file(a.truth, DatasetKind::ground_truth, &diag);
  const DatasetFile pred = parse_file(a.predictions, std::nullopt, &diag);
  log.report(diag);
  if (!same_categories(truth.categories, pred.categories)) {
    throw ValidationError("category tables of '" + a.truth + "' and '" + a.predictions + "' differ");
  }
  std::vector<std::pair<std::string, std::vector<double>>> groups;
  for (const auto& spec : a.thresholds) groups.emplace_back(spec, parse_thresholds(spec));

  std::vector<NamedReport> reports;
  for (const auto& [label, scenes] : as_predictions(pred, a.annotator)) {
    for (const auto& [spec, thresholds] : groups) {
      reports.push_back({label, spec,
                         evaluate(scenes, truth.scenes_as<LabeledBox>(), thresholds, truth.categories)});
    }
  }
  for (const auto& r : reports) {
    char line[160];
    std::snprintf(line, sizeof line, "%-20s mAP@%-16s %.6f\n", r.label.c_str(), r.threshold_spec.c_str(),
                  r.report.mean_map);
    out << line;
  }
  if (!a.output.empty()) {
    annofuse::detail::write_to_path(a.output, [&](std::ostream& o) { write(reports, truth.categories, o); });
    log.info("wrote report to " + a.output);
  }
  return kOk;
}

inline int run_loss_weights(const WeightsArgs& a, const Logger& log) {
  Diagnostics diag;
  const DatasetFile fused = parse_file(a.input, DatasetKind::fused, &diag);
  log.report(diag);
  if (fused.confidence_mode != ConfidenceMode::normalized_agreement) {
    throw ValidationError("loss weights need normalized_agreement confidences");
  }
  const WeightExport w = export_weights(fused.scenes_as<FusedBox>());
  write_file(w, a.output);
  log.info("wrote " + std::to_string(w.rows.size()) + " weights to " + a.output);
  return kOk;
}

inline int run_render(const RenderArgs& a, const Logger& log) {
  Diagnostics diag;
  const DatasetFile f = parse_file(a.input, std::nullopt, &diag);
  log.report(diag);
  const std::string svg = render_svg(f, a.image);
  annofuse::detail::write_to_path(a.output, [&](std::ostream& o) { o << svg; });
  return kOk;
}

inline int run_convert(const ConvertArgs& a, const Logger& log) {
  Diagnostics diag;
  std::optional<DatasetKind> kind;
  if (!a.kind.empty()) {
    kind = dataset_kind_from_string(a.kind);
    if (!kind) throw ValidationError("unknown dataset kind '" + a.kind + "'");
  }
  const DatasetFile f = convert_external_file(a.input, parse_box_dialect(a.dialect), kind, &diag);
  log.report(diag);
  write_file(f, a.output);
  return kOk;
}

}  // namespace detail

/// Entry point. `args` excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fuse multi-annotator bounding boxes, simulate expert annotations, export loss weights "
               "and evaluate mAP.",
               "annofuse"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  int verbose = 0;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "Log progress to stderr");
  app.add_flag("-q,--quiet", quiet, "Suppress warnings");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Generate ground truth and simulated expert annotations");
  simulate->add_option("-o,--out", sim.out_dir, "Output directory")->required();
  simulate->add_option("--scenes", sim.config.num_scenes, "Number of scenes");
  simulate->add_option("--experts", sim.config.num_experts, "Number of simulated experts R");
  simulate->add_option("--proficiency", sim.config.proficiency, "Expert proficiency p, in (0, 1)");
  simulate->add_option("--diag-stddev", sim.config.diag_stddev, "Stddev of the transition-matrix diagonal draw");
  simulate->add_option("--diag-mean", sim.diag_mean, "Mean of the diagonal draw (0 = use proficiency)");
  simulate->add_option("--jitter-floor", sim.jitter_floor,
                       "IoU floor for jittered boxes (0 = use proficiency, 1 = no jitter)");
  simulate->add_option("--categories", sim.config.num_categories, "Number of categories C");
  simulate->add_option("--canvas-width", sim.config.canvas.width, "Scene width");
  simulate->add_option("--canvas-height", sim.config.canvas.height, "Scene height");
  simulate->add_option("--min-objects", sim.config.min_objects, "Minimum objects per scene");
  simulate->add_option("--max-objects", sim.config.max_objects, "Maximum objects per scene");
  simulate->add_option("--min-size", sim.config.min_size, "Minimum object side length");
  simulate->add_option("--max-size", sim.config.max_size, "Maximum object side length");
  simulate->add_option("--max-overlap", sim.config.max_truth_overlap, "Maximum IoU between ground-truth boxes");
  simulate->add_option("--seed", sim.config.seed, "Random seed");
  simulate->add_option("--workers", sim.workers, "Worker threads");

  FuseArgs fuse;
  auto* fuse_cmd = app.add_subcommand("fuse", "Fuse a multi_annotator file into consensus boxes");
  fuse_cmd->add_option("-i,--input", fuse.input, "multi_annotator input file")->required();
  fuse_cmd->add_option("-o,--output", fuse.output, "fused output file")->required();
  fuse_cmd->add_option("--iou-thresh", fuse.iou_thresh, "Boxes match when IoU is strictly above this");
  fuse_cmd->add_option("--confidence-mode", fuse.confidence_mode, "normalized_agreement or raw_count");
  fuse_cmd->add_option("--num-annotators", fuse.num_annotators, "N in the agreement score (0 = declared annotators)");
  fuse_cmd->add_option("--workers", fuse.workers, "Worker threads");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Evaluate boxes against ground truth with 101-point mAP");
  eval->add_option("-t,--truth", ev.truth, "ground_truth file")->required();
  eval->add_option("-p,--pred", ev.predictions, "predictions, fused, ground_truth or multi_annotator file")
      ->required();
  eval->add_option("--thresholds", ev.thresholds,
                   "IoU thresholds: a value, a comma list or start:stop:step; repeatable");
  eval->add_option("--annotator", ev.annotator, "Only evaluate this annotator of a multi_annotator file");
  eval->add_option("-o,--output", ev.output, "Write the JSON report here");

  WeightsArgs lw;
  auto* weights = app.add_subcommand("loss-weights", "Export per-box loss weights from a fused file");
  weights->add_option("-i,--input", lw.input, "fused input file")->required();
  weights->add_option("-o,--output", lw.output, "loss_weights output file")->required();

  RenderArgs rd;
  auto* render = app.add_subcommand("render", "Draw one image's boxes as SVG");
  render->add_option("-i,--input", rd.input, "Any annotation dataset file")->required();
  render->add_option("--image", rd.image, "Image id")->required();
  render->add_option("-o,--output", rd.output, "SVG output file")->required();

  ConvertArgs cv;
  auto* convert = app.add_subcommand("convert", "Import a foreign JSON file into the canonical format");
  convert->add_option("-i,--input", cv.input, "Input file")->required();
  convert->add_option("-o,--output", cv.output, "Canonical output file")->required();
  convert->add_option("--dialect", cv.dialect, "corner_form or width_height_form");
  convert->add_option("--kind", cv.kind, "Dataset kind, if the file lacks one");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kValidationError;
  }

  const Logger log(err, quiet ? -1 : verbose);
  try {
    if (*simulate) return detail::run_simulate(sim, log);
    if (*fuse_cmd) return detail::run_fuse(fuse, log);
    if (*eval) return detail::run_eval(ev, out, log);
    if (*weights) return detail::run_loss_weights(lw, log);
    if (*render) return detail::run_render(rd, log);
    if (*convert) return detail::run_convert(cv, log);
  } catch (const ValidationError& e) {
    log.error(e.what());
    return kValidationError;
  } catch (const IoError& e) {
    log.error(e.what());
    return kIoError;
  } catch (const std::exception& e) {
    log.error(e.what());
    return kIoError;
  }
  return kValidationError;
}

}  // namespace annofuse::cli
