#pragma once

#include "stenokit/dataset_io.hpp"
#include "stenokit/metrics.hpp"
#include "stenokit/postprocess.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace stenokit {

/// Knobs for the synthetic scene generator. The defaults produce detections
/// identical to the ground truth with score 1.0.
///
/// Objects occupy distinct cells of a square grid so that corruptions of one
/// object never interact with another, as long as `box_jitter` stays at or
/// below about 0.1.
struct SynthConfig {
  std::uint64_t seed = 0;
  int num_images = 10;
  int image_size = 512;
  int min_instances = 1;
  int max_instances = 3;
  int num_classes = 1;
  /// Max translation of a detection relative to its object, as a fraction of
  /// the object's width/height.
  double box_jitter = 0.0;
  /// True-positive scores are uniform in [score_low, score_high].
  double score_low = 1.0;
  double score_high = 1.0;
  /// Probability that a detected object also gets a shifted duplicate.
  double duplicate_rate = 0.0;
  /// Horizontal shift of a duplicate as a fraction of the object width.
  double duplicate_shift = 0.15;
  /// Probability that an object gets no detection at all.
  double dropout_rate = 0.0;
  /// Per-image probability of a confident detection on empty background.
  double false_positive_rate = 0.0;
  /// Per-image probability of a detection scored below 0.8 on empty background.
  double low_score_rate = 0.0;

  /// Throws ValidationError listing every bad field.
  void validate() const;
};

enum class PlantedRole { true_positive, duplicate, spurious, low_score };

std::string_view to_string(PlantedRole role);

/// What the generator planted and what the evaluator should therefore count
/// after post-processing with `pipeline` and matching with `match`.
struct SynthAnswerKey {
  PostProcessConfig pipeline;
  MatchConfig match;
  std::vector<PlantedRole> roles;  // parallel to the detection records
  std::size_t objects = 0;
  std::size_t dropped = 0;
  Counts expected;
  /// False when some true-positive detection drifted below the matching IoU.
  bool within_tolerance = true;
};

struct SynthOutput {
  GroundTruthSet ground_truth;
  DetectionFile detections;
  SynthAnswerKey key;
};

SynthOutput generate(const SynthConfig& cfg, const PostProcessConfig& pipeline = {}, const MatchConfig& match = {});

/// Manifest recording the seed, the configuration and the planted counts.
std::string manifest_json(const SynthConfig& cfg, const SynthAnswerKey& key);

}  // namespace stenokit
