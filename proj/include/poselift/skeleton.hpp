#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace poselift {

struct PoseSequence3D;

struct SkeletonDefinition {
  std::string name;
  std::vector<std::string> keypoints;
  std::vector<std::string> groups;  // group label of keypoints[i]
  std::vector<std::pair<std::string, std::string>> edges;

  std::size_t size() const { return keypoints.size(); }
  /// Index of a keypoint name, or nullopt.
  std::optional<std::size_t> index_of(std::string_view keypoint) const;
  /// Group labels in order of first appearance.
  std::vector<std::string> group_names() const;
  std::vector<std::size_t> members(std::string_view group) const;
};

/// Group labels and cardinalities of the bundled horse skeleton.
const std::vector<std::pair<std::string, std::size_t>>& horse28_group_sizes();

/// The bundled 28-keypoint horse skeleton.
const SkeletonDefinition& horse28();

SkeletonDefinition skeleton_from_json(const nlohmann::json& doc, const std::string& source = "skeleton");
nlohmann::json skeleton_to_json(const SkeletonDefinition& skel);
SkeletonDefinition load_skeleton(const std::filesystem::path& path);
void save_skeleton(const SkeletonDefinition& skel, const std::filesystem::path& path);

/// Throws ConfigError on duplicate names, dangling groups or edges, or, for a
/// skeleton named "horse-28", group cardinalities that differ from the bundle.
void validate(const SkeletonDefinition& skel);

struct GroupStatistics {
  std::string group;
  std::optional<double> mean_error;  // px, over present member observations
  std::optional<double> std_error;
  double kpp = 0;  // mean over members of the fraction of frames present
  std::size_t keypoint_count = 0;
};

struct PoseStatistics {
  std::size_t frames = 0;
  std::size_t present_observations = 0;
  std::optional<double> mean_error;
  std::optional<double> std_error;
  std::optional<double> median_error;
  double mean_present_per_frame = 0;
  double std_present_per_frame = 0;
  std::vector<GroupStatistics> groups;
};

/// Reprojection-error and presence summary. Standard deviations are population
/// (divide by n). Throws ArgumentError for a sequence with no frames.
PoseStatistics pose_statistics(const PoseSequence3D& seq);

/// `group,mean_err,std_err,kpp,kp_no`, one row per group plus a final `All` row.
std::string statistics_csv(const PoseStatistics& stats);
std::string statistics_table(const PoseStatistics& stats);

}  // namespace poselift
