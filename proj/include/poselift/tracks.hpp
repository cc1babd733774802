#pragma once

// Per-camera 2D keypoint tracks: loading, likelihood gating, ARMA smoothing,
// temporal median filtering and resolution rescaling.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "poselift/geometry.hpp"
#include "poselift/skeleton.hpp"

namespace poselift {

constexpr double kDefaultLikelihoodThreshold = 0.6;
constexpr int kDefaultArmaP = 3;
constexpr int kDefaultArmaQ = 1;
constexpr int kDefaultMedianWindow = 13;

struct Observation2D {
  double x = 0;
  double y = 0;
  double likelihood = 0;
  bool missing = true;
};

struct TrackSet {
  std::string camera;
  ImageSize resolution;
  double fps = 0;
  std::vector<std::string> keypoints;
  std::size_t frames = 0;
  std::vector<Observation2D> observations;  // keypoint-major

  TrackSet() = default;
  TrackSet(std::string cam, ImageSize res, double rate, std::vector<std::string> names, std::size_t n_frames)
      : camera(std::move(cam)),
        resolution(res),
        fps(rate),
        keypoints(std::move(names)),
        frames(n_frames),
        observations(keypoints.size() * n_frames) {}

  Observation2D& at(std::size_t frame, std::size_t kp) { return observations[kp * frames + frame]; }
  const Observation2D& at(std::size_t frame, std::size_t kp) const { return observations[kp * frames + frame]; }
};

using Series = std::vector<std::optional<double>>;

/// Loads a track CSV plus its sidecar JSON (same stem, `.json`). Rows absent
/// from the CSV become missing observations.
TrackSet read_tracks(const std::filesystem::path& csv, const SkeletonDefinition& skeleton);
TrackSet read_tracks(const std::filesystem::path& csv, const std::filesystem::path& sidecar,
                     const SkeletonDefinition& skeleton);
/// Writes the CSV and its sidecar next to it.
void write_tracks(const TrackSet& tracks, const std::filesystem::path& csv);
std::string tracks_csv(const TrackSet& tracks);

/// Marks observations whose likelihood is strictly below `threshold` missing.
TrackSet threshold_likelihood(TrackSet tracks, double threshold = kDefaultLikelihoodThreshold);

/// One-step-ahead ARMA(p, q) predictions of a single run of samples. The run
/// is demeaned and fit by conditional least squares (two-stage long-AR
/// regression); the first `p` samples and runs shorter than p + q + 2 pass
/// through unchanged.
std::vector<double> arma_smooth(std::span<const double> run, int p, int q);

/// Applies arma_smooth to every x and y series, separately on each maximal
/// run of non-missing observations.
TrackSet arma_filter(TrackSet tracks, int p = kDefaultArmaP, int q = kDefaultArmaQ);

/// Median over the non-missing neighbours inside an odd window, truncated at
/// the sequence ends. An even neighbour count takes the lower middle value.
/// Missing elements stay missing.
Series median_filter_series(const Series& series, int window);

TrackSet rescale(TrackSet tracks, ImageSize target);

}  // namespace poselift
