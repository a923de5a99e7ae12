#pragma once

#include "stenokit/anchors.hpp"
#include "stenokit/losses.hpp"
#include "stenokit/metrics.hpp"
#include "stenokit/postprocess.hpp"
#include "stenokit/synth.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace stenokit {

enum class LogLevel { quiet, info, debug };

/// Everything a command needs. The defaults are the tuned inference setup:
/// NMS 0.95, score >= 0.8, at most 3 detections, mask-IoU matching at 0.5.
struct RunConfig {
  std::filesystem::path gt;
  std::filesystem::path dt;
  std::filesystem::path out;
  std::filesystem::path samples;
  PostProcessConfig postprocess;
  IouKind nms_kind = IouKind::box;
  bool apply_postprocess = true;
  MatchConfig match;
  bool seg_map = false;
  std::vector<double> sweep_grid = default_sweep_grid();
  AnchorConfig anchors;
  LossGains gains;
  SynthConfig synth;
  int threads = 1;
  LogLevel log_level = LogLevel::info;
};

/// Merges a JSON config document into `cfg`. Unknown keys are rejected.
void apply_config_json(RunConfig& cfg, std::string_view json, std::string_view source = "<config>");
std::string config_to_json(const RunConfig& cfg);

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitInput = 2;

/// Command implementations. Each throws on failure; `run_cli` maps
/// exceptions to exit codes.
void cmd_postprocess(const RunConfig& cfg, std::ostream& log);
EvalReport cmd_evaluate(const RunConfig& cfg, std::ostream& log);
std::vector<SweepRow> cmd_sweep(const RunConfig& cfg, std::ostream& log);
SynthAnswerKey cmd_synth(const RunConfig& cfg, std::ostream& log);
LossBreakdown<double> cmd_loss_check(const RunConfig& cfg, std::ostream& log);

/// Parses loss-check samples: `{"samples": [{"class_probs": [...],
/// "true_class": k, "predicted_box": [x,y,w,h], "true_box": [x,y,w,h],
/// "predicted_mask": [[...]], "target_mask": [[...]], "is_positive": b}]}`.
std::vector<RoiSample<double>> parse_loss_samples(std::string_view json, std::string_view source = "<samples>");

/// Full command-line entry point: `stenokit <command> [flags]`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace stenokit
