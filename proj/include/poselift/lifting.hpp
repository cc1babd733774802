#pragma once

// Exhaustive-subset RANSAC triangulation and whole-sequence lifting of 2D
// tracks into 3D poses.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "poselift/geometry.hpp"
#include "poselift/pose.hpp"
#include "poselift/tracks.hpp"
#include "poselift/triangulation.hpp"

namespace poselift {

constexpr double kDefaultReprojThreshold = 200.0;
constexpr int kDefaultMinCams = 2;
/// Candidate scores within this many px of the best count as tied.
constexpr double kScoreTieTolerance = 1e-6;

struct RansacResult {
  Keypoint3D keypoint;
  std::vector<std::size_t> inliers;  // indices into the rig, ascending
  std::size_t candidates = 0;
  std::size_t degenerate_subsets = 0;
};

/// Triangulates every subset of at least `min_cams` cameras that carry an
/// observation (raw, distorted pixels) and keeps the subset with the lowest
/// mean reprojection error over its own cameras. Ties go to the larger subset,
/// then to the lexicographically smallest set of camera names. The result is
/// not present when no subset triangulates.
RansacResult triangulate_ransac(std::span<const std::optional<Eigen::Vector2d>> observations, const Rig& rig,
                                int min_cams = kDefaultMinCams);

/// True when a keypoint with this mean reprojection error is kept.
constexpr bool passes_reprojection_gate(double error_px, double threshold_px) {
  return error_px <= threshold_px;
}

struct LiftConfig {
  int min_cams = kDefaultMinCams;
  double reproj_threshold_px = kDefaultReprojThreshold;
  int median_window = kDefaultMedianWindow;
  unsigned threads = 0;
};

struct LiftDiagnostics {
  std::size_t triangulations = 0;
  std::size_t insufficient_views = 0;
  std::size_t degenerate_subsets = 0;
  std::size_t undistort_failures = 0;
  std::size_t dropped_by_threshold = 0;
};

/// Tracks are matched to rig cameras by name. Per frame and keypoint:
/// undistort, exhaustive RANSAC, then a temporal median over x, y and z,
/// recomputed reprojection error, and the strict `> threshold` drop.
PoseSequence3D lift_sequence(std::span<const TrackSet> tracks, const Rig& rig, const SkeletonDefinition& skeleton,
                             const LiftConfig& config = {}, LiftDiagnostics* diagnostics = nullptr);

/// `frame,keypoint,x,y,z,reproj_error_px,n_cams,present`. Not-present rows
/// leave the numeric fields empty unless `always_write_positions` is set
/// (used for ground truth, which has no reprojection error).
std::string pose_csv(const PoseSequence3D& seq, bool always_write_positions = false);
void write_poses(const PoseSequence3D& seq, const std::filesystem::path& path, bool always_write_positions = false);
PoseSequence3D read_poses(const std::filesystem::path& path, const SkeletonDefinition& skeleton);

}  // namespace poselift
