#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <limits>
#include <vector>

#include <json.hpp>

#include "poselift/skeleton.hpp"

namespace poselift {

struct Keypoint3D {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double reproj_error = std::numeric_limits<double>::quiet_NaN();  // mean px over used cameras
  int n_cams = 0;
  bool present = false;
  std::uint32_t inliers = 0;  // bit i set when rig camera i was used
};

/// Dense frame-major grid of 3D keypoints.
struct PoseSequence3D {
  SkeletonDefinition skeleton;
  std::vector<Keypoint3D> keypoints;
  nlohmann::json provenance = nlohmann::json::object();

  PoseSequence3D() = default;
  PoseSequence3D(SkeletonDefinition skel, std::size_t frames)
      : skeleton(std::move(skel)), keypoints(frames * skeleton.size()) {}

  std::size_t frame_count() const { return skeleton.size() ? keypoints.size() / skeleton.size() : 0; }
  Keypoint3D& at(std::size_t frame, std::size_t kp) { return keypoints[frame * skeleton.size() + kp]; }
  const Keypoint3D& at(std::size_t frame, std::size_t kp) const {
    return keypoints[frame * skeleton.size() + kp];
  }
};

}  // namespace poselift
