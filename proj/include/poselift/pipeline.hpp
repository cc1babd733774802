#pragma once

// Stage orchestration shared by the CLI: resolved configuration, sub-seed
// derivation, and one function per pipeline stage.
//
// Working-directory layout (output_dir):
//   synth     calibration.json skeleton.json annotations.csv
//             <subject>/tracks/<camera>.csv|.json  <subject>/truth.csv
//   lift      <subject>/poses.csv stats.csv stats.txt diagnostics.json
//             (or poses.csv ... directly in output_dir for a single tracks dir)
//   segments  segments.csv segments_summary.json
//   train     models/<behavior>.json
//   eval      eval.csv eval.txt
//   bias      bias.csv bias.txt models/balanced/<behavior>.json
// Every stage also writes config.<stage>.json, which can be fed back through
// --config to repeat the stage.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "poselift/lifting.hpp"
#include "poselift/synth.hpp"
#include "poselift/tracks.hpp"

namespace poselift {

struct SynthSettings {
  int subjects = 4;
  std::size_t frames = 12000;
  double noise_sigma = 2.0;
  double occlusion_prob = 0.02;
  double low_confidence_fraction = 0.5;
  std::vector<std::string> outlier_cameras;
  double outlier_offset_px = 300.0;
  double outlier_probability = 0.0;
  BoxDims box;
  double focal_px = 900.0;
  std::size_t mode_min_frames = 250;
  std::size_t mode_max_frames = 700;
};

struct PipelineConfig {
  std::filesystem::path dataset;      // synth output / dataset root
  std::filesystem::path calibration;  // default <dataset>/calibration.json
  std::filesystem::path tracks_dir;   // single-subject lift
  std::filesystem::path skeleton;     // default <dataset>/skeleton.json, else horse-28
  std::filesystem::path annotations;  // default <dataset>/annotations.csv
  std::filesystem::path poses;        // stats input
  std::filesystem::path output_dir;

  double likelihood_threshold = kDefaultLikelihoodThreshold;
  double reproj_threshold_px = kDefaultReprojThreshold;
  int min_cams = kDefaultMinCams;
  int medfilt_window = kDefaultMedianWindow;
  bool arma = true;
  int arma_p = kDefaultArmaP;
  int arma_q = kDefaultArmaQ;
  std::size_t segment_length = 200;
  int n_trees = 100;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  SynthSettings synth;
};

nlohmann::json config_to_json(const PipelineConfig& config);
/// Missing keys keep their defaults; unknown keys are a ConfigError.
PipelineConfig config_from_json(const nlohmann::json& doc, const std::string& source = "config");
PipelineConfig load_config(const std::filesystem::path& path);

/// Range checks: likelihood in [0, 1], threshold >= 0, min_cams >= 2, odd
/// window, non-negative ARMA orders, positive segment length and tree count.
void validate(const PipelineConfig& config);

/// Fills default paths derived from `dataset`.
PipelineConfig resolve(PipelineConfig config);

/// Sub-seed for a named stream of the master seed.
std::uint64_t stage_seed(const PipelineConfig& config, std::string_view stream);

LiftConfig lift_config(const PipelineConfig& config);

/// Optional ARMA smoothing, likelihood threshold, then rescaling to the
/// camera's calibration resolution.
TrackSet prepare_tracks(TrackSet tracks, const Camera& camera, const PipelineConfig& config);

SkeletonDefinition load_skeleton_or_default(const PipelineConfig& config);

std::vector<std::string> subject_names(const std::filesystem::path& dataset);

struct StageResult {
  std::vector<std::filesystem::path> written;
  std::string summary;  // human-readable, for the log
};

StageResult run_synth(const PipelineConfig& config);
StageResult run_lift(const PipelineConfig& config);
StageResult run_stats(const PipelineConfig& config);
StageResult run_segments(const PipelineConfig& config);
StageResult run_train(const PipelineConfig& config);
StageResult run_eval(const PipelineConfig& config);
StageResult run_bias(const PipelineConfig& config);

}  // namespace poselift
