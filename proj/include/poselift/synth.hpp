#pragma once

// Synthetic four-corner rig and horse-motion generator used as ground truth
// for end-to-end verification.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "poselift/geometry.hpp"
#include "poselift/pose.hpp"
#include "poselift/tracks.hpp"

namespace poselift {

struct BoxDims {
  double width = 6.0;   // x
  double depth = 5.0;   // y
  double height = 3.0;  // z, cameras mount at this height
};

constexpr ImageSize kCalibrationImageSize{2688, 1520};
constexpr ImageSize kTrackResolution{336, 190};

enum class PainState { healthy, painful };
std::string to_string(PainState s);
PainState pain_state_from_string(const std::string& s);

/// Four cameras at the top corners of the box, each aimed at the box centre.
Rig make_default_rig(const BoxDims& box, ImageSize image_size = kCalibrationImageSize, double focal_px = 900.0);

struct BehaviorInterval {
  std::string behavior;
  std::size_t start = 0;  // inclusive
  std::size_t end = 0;    // exclusive
};

// Labelling constants for generated motion. A frame is "movement" when the
// body centroid moves faster than kMovementSpeed, "standing" otherwise, and
// "eating" when the mean height of the head keypoints drops below
// kEatingHeadFraction of the subject's resting head height.
constexpr double kMovementSpeed = 0.3;  // world units per second
constexpr double kEatingHeadFraction = 0.6;

struct MotionOptions {
  double fps = 20.0;
  PainState pain_state = PainState::healthy;
  std::size_t mode_min_frames = 250;
  std::size_t mode_max_frames = 700;
};

struct SynthTruth {
  PoseSequence3D poses;  // every keypoint present, exact positions
  std::vector<BehaviorInterval> intervals;
  std::vector<double> speed;        // per frame
  std::vector<double> head_height;  // per frame
};

/// Smooth wander-stand-graze motion inside the box. Requires the keypoint
/// names of the bundled horse skeleton (any order). Deterministic in `seed`.
SynthTruth synth_motion(const SkeletonDefinition& skeleton, const BoxDims& box, std::size_t frames,
                        std::uint64_t seed, const MotionOptions& options = {});

struct OutlierSpec {
  std::vector<std::string> cameras;
  double offset_px = 300.0;
  double probability = 0.0;  // per (camera, frame)
};

struct SynthScenario {
  BoxDims box;
  Rig rig;
  ImageSize track_resolution = kTrackResolution;
  double fps = 20.0;
  std::uint64_t seed = 0;
  double noise_sigma = 0.0;         // calibration-resolution px
  double occlusion_prob = 0.0;      // per (camera, keypoint, frame)
  double low_confidence_fraction = 0.5;  // occluded points still emitted, likelihood < 0.6
  OutlierSpec outliers;
};

void validate(const SynthScenario& scenario);

struct SynthObservation {
  std::vector<TrackSet> tracks;  // one per rig camera, at track_resolution
  std::vector<int> visible_views;  // frame-major (frame, keypoint): clean views
  std::vector<std::vector<bool>> outlier_frames;  // [camera][frame]
};

/// Projects the truth into every camera with noise, occlusion and outliers.
/// Points outside the image or behind the camera are never observed.
SynthObservation observe(const SynthTruth& truth, const SynthScenario& scenario);

/// Truth poses annotated with visibility: n_cams = clean views, present when
/// at least two cameras see the point.
PoseSequence3D ground_truth_sequence(const SynthTruth& truth, const SynthObservation& obs);

struct TruthComparison {
  std::optional<double> rms;  // over keypoints present in the estimate
  std::vector<std::optional<double>> keypoint_rms;
  std::size_t true_positive = 0;   // estimated present, truly visible
  std::size_t false_positive = 0;  // estimated present, not visible
  std::size_t false_negative = 0;
  std::size_t true_negative = 0;
};

/// `truth` present flags are read as visibility. Throws ArgumentError on a
/// frame-count or skeleton mismatch.
TruthComparison evaluate_against_truth(const PoseSequence3D& estimate, const PoseSequence3D& truth);

}  // namespace poselift
