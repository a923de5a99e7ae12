#include "stenokit/cli.hpp"

#include "stenokit/dataset_io.hpp"
#include "stenokit/errors.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <functional>
#include <ostream>
#include <set>

namespace stenokit {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

constexpr const char* kProcessedFile = "processed.json";
constexpr const char* kReportJson = "report.json";
constexpr const char* kReportTable = "report.txt";
constexpr const char* kSweepCsv = "sweep.csv";
constexpr const char* kSynthGt = "gt.json";
constexpr const char* kSynthDt = "detections.json";
constexpr const char* kManifest = "manifest.json";
constexpr const char* kLossJson = "loss.json";

std::string_view to_string(LogLevel l) {
  switch (l) {
    case LogLevel::quiet: return "quiet";
    case LogLevel::info: return "info";
    case LogLevel::debug: return "debug";
  }
  return "info";
}

LogLevel parse_log_level(std::string_view s) {
  if (s == "quiet") return LogLevel::quiet;
  if (s == "info") return LogLevel::info;
  if (s == "debug") return LogLevel::debug;
  throw InputError("unknown log level '" + std::string(s) + "'");
}

// Reads typed values out of one config section, recording every problem.
class Section {
 public:
  Section(const json& j, std::string name, std::vector<std::string>& errs) : j_(j), name_(std::move(name)), errs_(errs) {
    if (!j_.is_object()) errs_.push_back(name_ + ": expected an object");
  }

  void allow(std::initializer_list<const char*> keys) {
    if (!j_.is_object()) return;
    std::set<std::string> known(keys.begin(), keys.end());
    for (const auto& [k, _] : j_.items())
      if (!known.count(k)) errs_.push_back(name_ + "." + k + ": unknown key");
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!j_.is_object()) return;
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw std::invalid_argument("expected true or false");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw std::invalid_argument("expected an integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw std::invalid_argument("expected a number");
      }
      out = it->get<T>();
    } catch (const std::exception& e) {
      errs_.push_back(name_ + "." + key + ": " + e.what());
    }
  }

  void kind(const char* key, IouKind& out) {
    std::string s;
    get(key, s);
    if (s.empty()) return;
    try {
      out = parse_iou_kind(s);
    } catch (const InputError& e) {
      errs_.push_back(name_ + "." + key + ": " + e.what());
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::vector<std::string>& errs_;
};

void log_line(const RunConfig& cfg, std::ostream& log, const std::string& msg) {
  if (cfg.log_level != LogLevel::quiet) log << msg << '\n';
}

void require_path(const std::filesystem::path& p, const char* flag) {
  if (p.empty()) throw InputError(std::string(flag) + " is required for this command");
}

struct LoadedInputs {
  GroundTruthSet gt;
  DetectionsByImage dets;
};

LoadedInputs load_inputs(const RunConfig& cfg) {
  require_path(cfg.gt, "--gt");
  require_path(cfg.dt, "--dt");
  LoadedInputs in;
  in.gt = load_ground_truth(cfg.gt);
  in.dets = to_detections(load_detections(cfg.dt), in.gt);
  return in;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config file

void apply_config_json(RunConfig& cfg, std::string_view text, std::string_view source) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string(source) + ": malformed JSON: " + e.what());
  }
  std::vector<std::string> errs;
  Section top(doc, std::string(source), errs);
  top.allow({"postprocess", "metrics", "sweep", "anchors", "loss_gains", "synth", "threads", "log_level"});
  top.get("threads", cfg.threads);
  if (doc.is_object() && doc.contains("log_level")) {
    std::string lvl;
    top.get("log_level", lvl);
    try {
      cfg.log_level = parse_log_level(lvl);
    } catch (const InputError& e) {
      errs.push_back(e.what());
    }
  }
  if (!doc.is_object()) throw ValidationError(std::move(errs));

  if (doc.contains("postprocess")) {
    Section s(doc["postprocess"], "postprocess", errs);
    s.allow({"nms_iou", "score_threshold", "max_detections", "rpn_nms_iou", "nms_kind", "enabled"});
    s.get("nms_iou", cfg.postprocess.nms_iou);
    s.get("score_threshold", cfg.postprocess.score_threshold);
    s.get("max_detections", cfg.postprocess.max_detections);
    s.get("rpn_nms_iou", cfg.postprocess.rpn_nms_iou);
    s.kind("nms_kind", cfg.nms_kind);
    s.get("enabled", cfg.apply_postprocess);
  }
  if (doc.contains("metrics")) {
    Section s(doc["metrics"], "metrics", errs);
    s.allow({"match_iou", "iou_kind", "seg_map"});
    s.get("match_iou", cfg.match.iou_threshold);
    s.kind("iou_kind", cfg.match.kind);
    s.get("seg_map", cfg.seg_map);
  }
  if (doc.contains("sweep")) {
    Section s(doc["sweep"], "sweep", errs);
    s.allow({"grid"});
    s.get("grid", cfg.sweep_grid);
  }
  if (doc.contains("anchors")) {
    Section s(doc["anchors"], "anchors", errs);
    s.allow({"sizes", "ratios", "strides"});
    s.get("sizes", cfg.anchors.sizes);
    s.get("ratios", cfg.anchors.ratios);
    s.get("strides", cfg.anchors.strides);
  }
  if (doc.contains("loss_gains")) {
    Section s(doc["loss_gains"], "loss_gains", errs);
    s.allow({"cls", "box", "mask"});
    s.get("cls", cfg.gains.cls);
    s.get("box", cfg.gains.box);
    s.get("mask", cfg.gains.mask);
  }
  if (doc.contains("synth")) {
    Section s(doc["synth"], "synth", errs);
    s.allow({"seed", "num_images", "image_size", "min_instances", "max_instances", "num_classes", "box_jitter",
             "score_low", "score_high", "duplicate_rate", "duplicate_shift", "dropout_rate", "false_positive_rate",
             "low_score_rate"});
    auto& y = cfg.synth;
    s.get("seed", y.seed);
    s.get("num_images", y.num_images);
    s.get("image_size", y.image_size);
    s.get("min_instances", y.min_instances);
    s.get("max_instances", y.max_instances);
    s.get("num_classes", y.num_classes);
    s.get("box_jitter", y.box_jitter);
    s.get("score_low", y.score_low);
    s.get("score_high", y.score_high);
    s.get("duplicate_rate", y.duplicate_rate);
    s.get("duplicate_shift", y.duplicate_shift);
    s.get("dropout_rate", y.dropout_rate);
    s.get("false_positive_rate", y.false_positive_rate);
    s.get("low_score_rate", y.low_score_rate);
  }
  if (!errs.empty()) throw ValidationError(std::move(errs));
}

std::string config_to_json(const RunConfig& cfg) {
  ordered_json j;
  j["postprocess"] = {{"nms_iou", cfg.postprocess.nms_iou},
                      {"score_threshold", cfg.postprocess.score_threshold},
                      {"max_detections", cfg.postprocess.max_detections},
                      {"rpn_nms_iou", cfg.postprocess.rpn_nms_iou},
                      {"nms_kind", std::string(to_string(cfg.nms_kind))},
                      {"enabled", cfg.apply_postprocess}};
  j["metrics"] = {{"match_iou", cfg.match.iou_threshold},
                  {"iou_kind", std::string(to_string(cfg.match.kind))},
                  {"seg_map", cfg.seg_map}};
  j["sweep"] = {{"grid", cfg.sweep_grid}};
  j["anchors"] = {{"sizes", cfg.anchors.sizes}, {"ratios", cfg.anchors.ratios}, {"strides", cfg.anchors.strides}};
  j["loss_gains"] = {{"cls", cfg.gains.cls}, {"box", cfg.gains.box}, {"mask", cfg.gains.mask}};
  j["threads"] = cfg.threads;
  j["log_level"] = std::string(to_string(cfg.log_level));
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Commands

void cmd_postprocess(const RunConfig& cfg, std::ostream& log) {
  require_path(cfg.dt, "--dt");
  require_path(cfg.out, "--out");
  const DetectionFile file = load_detections(cfg.dt);
  DetectionsByImage raw;
  if (!cfg.gt.empty()) {
    raw = to_detections(file, load_ground_truth(cfg.gt));
  } else {
    raw = to_detections(file);
  }
  StageCounts counts;
  const DetectionsByImage processed = postprocess_all(raw, cfg.postprocess, cfg.nms_kind, cfg.threads, &counts);
  save_detections(to_detection_file(processed), cfg.out / kProcessedFile);
  log_line(cfg, log,
           "input " + std::to_string(counts.input) + ", score >= " + std::to_string(cfg.postprocess.score_threshold) +
               ": " + std::to_string(counts.after_filter) + ", nms: " + std::to_string(counts.after_nms) +
               ", cap: " + std::to_string(counts.after_cap));
}

EvalReport cmd_evaluate(const RunConfig& cfg, std::ostream& log) {
  const LoadedInputs in = load_inputs(cfg);
  const GroundTruthByImage gts = instances_from(in.gt, cfg.threads);
  const DetectionsByImage dets =
      cfg.apply_postprocess ? postprocess_all(in.dets, cfg.postprocess, cfg.nms_kind, cfg.threads) : in.dets;
  EvalReport report = evaluate(dets, gts, cfg.match, cfg.threads);
  if (cfg.seg_map) report.seg_map = seg_map(dets, gts);
  const std::string table = report_to_table(report);
  if (!cfg.out.empty()) {
    const std::string js = report_to_json(report);
    write_file_atomic(cfg.out / kReportJson, js);
    write_file_atomic(cfg.out / kReportTable, table);
  }
  log_line(cfg, log, table);
  return report;
}

std::vector<SweepRow> cmd_sweep(const RunConfig& cfg, std::ostream& log) {
  const LoadedInputs in = load_inputs(cfg);
  const GroundTruthByImage gts = instances_from(in.gt, cfg.threads);
  const std::vector<SweepRow> rows =
      threshold_sweep(in.dets, gts, cfg.postprocess, cfg.sweep_grid, cfg.match, cfg.nms_kind, cfg.threads);
  const std::string csv = sweep_to_csv(rows);
  if (!cfg.out.empty()) write_file_atomic(cfg.out / kSweepCsv, csv);
  log_line(cfg, log, csv);
  return rows;
}

SynthAnswerKey cmd_synth(const RunConfig& cfg, std::ostream& log) {
  require_path(cfg.out, "--out");
  const SynthOutput s = generate(cfg.synth, cfg.postprocess, cfg.match);
  const std::string gt = serialize_ground_truth(s.ground_truth);
  const std::string dt = serialize_detections(s.detections);
  const std::string manifest = manifest_json(cfg.synth, s.key);
  write_file_atomic(cfg.out / kSynthGt, gt);
  write_file_atomic(cfg.out / kSynthDt, dt);
  write_file_atomic(cfg.out / kManifest, manifest);
  log_line(cfg, log,
           "seed " + std::to_string(cfg.synth.seed) + ": " + std::to_string(s.ground_truth.images.size()) + " images, " +
               std::to_string(s.key.objects) + " objects, planted tp " + std::to_string(s.key.expected.tp) + " fp " +
               std::to_string(s.key.expected.fp) + " fn " + std::to_string(s.key.expected.fn));
  return s.key;
}

std::vector<RoiSample<double>> parse_loss_samples(std::string_view text, std::string_view source) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string(source) + ": malformed JSON: " + e.what());
  }
  if (!doc.is_object() || !doc.contains("samples") || !doc["samples"].is_array()) {
    throw ValidationError({std::string(source) + ": expected {\"samples\": [...]}"});
  }
  auto grid = [](const json& j, const std::string& where) {
    if (!j.is_array() || j.empty() || !j[0].is_array()) throw ValidationError({where + ": expected a 2-D array"});
    const Eigen::Index rows = Eigen::Index(j.size());
    const Eigen::Index cols = Eigen::Index(j[0].size());
    MaskGrid<double> g(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const json& row = j[std::size_t(r)];
      if (!row.is_array() || Eigen::Index(row.size()) != cols) throw ValidationError({where + ": ragged rows"});
      for (Eigen::Index c = 0; c < cols; ++c) g(r, c) = row[std::size_t(c)].get<double>();
    }
    return g;
  };
  std::vector<RoiSample<double>> out;
  std::vector<std::string> errs;
  const json& arr = doc["samples"];
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string where = "samples[" + std::to_string(i) + "]";
    try {
      const json& j = arr[i];
      RoiSample<double> s;
      const auto probs = j.at("class_probs").get<std::vector<double>>();
      s.class_probs = Eigen::Map<const ProbVector<double>>(probs.data(), Eigen::Index(probs.size()));
      s.true_class = j.at("true_class").get<int>();
      s.is_positive = j.value("is_positive", false);
      if (s.is_positive) {
        const auto pb = j.at("predicted_box").get<std::array<double, 4>>();
        const auto tb = j.at("true_box").get<std::array<double, 4>>();
        s.predicted_box = BoxVector<double>(pb[0], pb[1], pb[2], pb[3]);
        s.true_box = BoxVector<double>(tb[0], tb[1], tb[2], tb[3]);
        s.predicted_mask = grid(j.at("predicted_mask"), where + ".predicted_mask");
        s.target_mask = grid(j.at("target_mask"), where + ".target_mask");
      }
      validate_sample(s, i);
      out.push_back(std::move(s));
    } catch (const ValidationError& e) {
      errs.insert(errs.end(), e.violations().begin(), e.violations().end());
    } catch (const std::exception& e) {
      errs.push_back(where + ": " + e.what());
    }
  }
  if (!errs.empty()) throw ValidationError(std::move(errs));
  return out;
}

LossBreakdown<double> cmd_loss_check(const RunConfig& cfg, std::ostream& log) {
  require_path(cfg.samples, "--samples");
  const std::vector<RoiSample<double>> samples = parse_loss_samples(read_file(cfg.samples), cfg.samples.string());
  const LossBreakdown<double> l = total_loss<double>(samples, cfg.gains);
  ordered_json j;
  j["total"] = l.total;
  j["cls"] = l.cls;
  j["box"] = l.box;
  j["mask"] = l.mask;
  j["gains"] = {{"cls", cfg.gains.cls}, {"box", cfg.gains.box}, {"mask", cfg.gains.mask}};
  j["rois"] = samples.size();
  const std::string text = j.dump(2) + "\n";
  if (!cfg.out.empty()) write_file_atomic(cfg.out / kLossJson, text);
  log_line(cfg, log, text);
  return l;
}

// ---------------------------------------------------------------------------
// Entry point

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Post-processing and evaluation toolkit for instance-segmentation stenosis detectors", "stenokit"};
  app.fallthrough();
  app.require_subcommand(1);

  // Flags are applied on top of the config file, so each one queues an edit.
  std::string config;
  std::vector<std::function<void(RunConfig&)>> overrides;
  auto flag = [&]<typename T>(CLI::App* where, const std::string& name, auto setter, const std::string& help) {
    return where->add_option_function<T>(
        name, [&overrides, setter](const T& v) { overrides.push_back([setter, v](RunConfig& c) { setter(c, v); }); },
        help);
  };
  using Path = std::string;

  app.add_option("--config", config, "JSON config file; flags override it");
  flag.operator()<Path>(&app, "--gt", [](RunConfig& c, const Path& v) { c.gt = v; }, "Ground-truth COCO JSON");
  flag.operator()<Path>(&app, "--dt", [](RunConfig& c, const Path& v) { c.dt = v; }, "Detections JSON");
  flag.operator()<Path>(&app, "--out", [](RunConfig& c, const Path& v) { c.out = v; }, "Output directory");
  flag.operator()<double>(&app, "--nms-iou", [](RunConfig& c, double v) { c.postprocess.nms_iou = v; },
                          "NMS IoU threshold (default 0.95)");
  flag.operator()<double>(&app, "--score-thr", [](RunConfig& c, double v) { c.postprocess.score_threshold = v; },
                          "Confidence threshold, inclusive (default 0.8)");
  flag.operator()<int>(&app, "--max-dets", [](RunConfig& c, int v) { c.postprocess.max_detections = v; },
                       "Maximum detections per image (default 3)");
  flag.operator()<double>(&app, "--match-iou", [](RunConfig& c, double v) { c.match.iou_threshold = v; },
                          "Matching IoU threshold (default 0.5)");
  flag.operator()<std::string>(&app, "--iou-kind", [](RunConfig& c, const std::string& v) { c.match.kind = parse_iou_kind(v); },
                               "Matching IoU: box or mask (default mask)");
  flag.operator()<std::string>(&app, "--nms-kind", [](RunConfig& c, const std::string& v) { c.nms_kind = parse_iou_kind(v); },
                               "NMS IoU: box or mask (default box)");
  flag.operator()<int>(&app, "--threads", [](RunConfig& c, int v) { c.threads = v; }, "Worker threads");
  flag.operator()<std::uint64_t>(&app, "--seed", [](RunConfig& c, std::uint64_t v) { c.synth.seed = v; },
                                 "Synthetic fixture seed");
  flag.operator()<std::string>(&app, "--log-level", [](RunConfig& c, const std::string& v) { c.log_level = parse_log_level(v); },
                               "quiet, info or debug");

  auto* post = app.add_subcommand("postprocess", "Apply score filter, NMS and the detection cap");
  auto* eval = app.add_subcommand("evaluate", "Score detections against ground truth");
  eval->add_flag_callback("--seg-map", [&] { overrides.push_back([](RunConfig& c) { c.seg_map = true; }); },
                          "Also compute mask mAP@[.50:.95]");
  eval->add_flag_callback("--no-postprocess",
                          [&] { overrides.push_back([](RunConfig& c) { c.apply_postprocess = false; }); },
                          "Score detections as given");
  auto* sweep = app.add_subcommand("sweep", "F1 across NMS IoU thresholds");
  flag.operator()<std::vector<double>>(sweep, "--grid",
                                       [](RunConfig& c, const std::vector<double>& v) { c.sweep_grid = v; },
                                       "NMS IoU thresholds (default 0.50:0.05:0.95)");
  auto* synth = app.add_subcommand("synth", "Write a synthetic ground-truth/detections pair");
  flag.operator()<int>(synth, "--num-images", [](RunConfig& c, int v) { c.synth.num_images = v; }, "");
  flag.operator()<int>(synth, "--image-size", [](RunConfig& c, int v) { c.synth.image_size = v; }, "");
  flag.operator()<int>(synth, "--min-instances", [](RunConfig& c, int v) { c.synth.min_instances = v; }, "");
  flag.operator()<int>(synth, "--max-instances", [](RunConfig& c, int v) { c.synth.max_instances = v; }, "");
  flag.operator()<int>(synth, "--num-classes", [](RunConfig& c, int v) { c.synth.num_classes = v; }, "");
  flag.operator()<double>(synth, "--jitter", [](RunConfig& c, double v) { c.synth.box_jitter = v; }, "");
  flag.operator()<double>(synth, "--score-low", [](RunConfig& c, double v) { c.synth.score_low = v; }, "");
  flag.operator()<double>(synth, "--score-high", [](RunConfig& c, double v) { c.synth.score_high = v; }, "");
  flag.operator()<double>(synth, "--duplicate-rate", [](RunConfig& c, double v) { c.synth.duplicate_rate = v; }, "");
  flag.operator()<double>(synth, "--duplicate-shift", [](RunConfig& c, double v) { c.synth.duplicate_shift = v; }, "");
  flag.operator()<double>(synth, "--dropout-rate", [](RunConfig& c, double v) { c.synth.dropout_rate = v; }, "");
  flag.operator()<double>(synth, "--fp-rate", [](RunConfig& c, double v) { c.synth.false_positive_rate = v; }, "");
  flag.operator()<double>(synth, "--low-score-rate", [](RunConfig& c, double v) { c.synth.low_score_rate = v; }, "");
  auto* loss = app.add_subcommand("loss-check", "Evaluate the multi-task loss on serialized RoI samples");
  flag.operator()<Path>(loss, "--samples", [](RunConfig& c, const Path& v) { c.samples = v; }, "RoI samples JSON");
  flag.operator()<double>(loss, "--lambda-cls", [](RunConfig& c, double v) { c.gains.cls = v; }, "");
  flag.operator()<double>(loss, "--lambda-box", [](RunConfig& c, double v) { c.gains.box = v; }, "");
  flag.operator()<double>(loss, "--lambda-mask", [](RunConfig& c, double v) { c.gains.mask = v; }, "");
  auto* show = app.add_subcommand("config", "Print the effective configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }

  try {
    RunConfig cfg;
    if (!config.empty()) apply_config_json(cfg, read_file(config), config);
    for (const auto& edit : overrides) edit(cfg);

    if (cfg.threads < 1) throw InputError("--threads must be >= 1");
    cfg.postprocess.validate();
    cfg.anchors.validate();
    if (!(cfg.match.iou_threshold > 0.0 && cfg.match.iou_threshold <= 1.0)) {
      throw InputError("match IoU must lie in (0, 1]");
    }

    if (*post) cmd_postprocess(cfg, out);
    else if (*eval) cmd_evaluate(cfg, out);
    else if (*sweep) cmd_sweep(cfg, out);
    else if (*synth) cmd_synth(cfg, out);
    else if (*loss) cmd_loss_check(cfg, out);
    else if (*show) out << config_to_json(cfg);
    return kExitOk;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

}  // namespace stenokit
