#include "poselift/lifting.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "poselift/csv.hpp"
#include "poselift/error.hpp"
#include "poselift/parallel.hpp"

namespace poselift {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Per-camera quantities that every triangulation reuses.
struct PreparedRig {
  const Rig* rig = nullptr;
  std::vector<Matrix3<double>> rotations;
  std::vector<Matrix34<double>> projections;

  explicit PreparedRig(const Rig& r) : rig(&r) {
    if (r.cameras.size() > static_cast<std::size_t>(kMaxCameras))
      throw ConfigError("at most " + std::to_string(kMaxCameras) + " cameras are supported");
    for (const auto& cam : r.cameras) {
      rotations.push_back(rodrigues_to_matrix(cam.rotation));
      projections.push_back(projection_matrix(cam));
    }
  }

  double error(const Eigen::Vector3d& p, std::size_t cam, const Eigen::Vector2d& observed) const {
    const auto px = try_project(p, rig->cameras[cam], rotations[cam]);
    return px ? (*px - observed).norm() : kInf;
  }
};

struct View {
  std::size_t camera;
  Eigen::Vector2d raw;
  Eigen::Vector2d undistorted;
};

std::vector<std::string> subset_names(const Rig& rig, const std::vector<View>& views, std::uint32_t mask) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < views.size(); ++i)
    if (mask & (1u << i)) names.push_back(rig.cameras[views[i].camera].name);
  std::sort(names.begin(), names.end());
  return names;
}

RansacResult ransac(const std::vector<View>& views, const PreparedRig& prepared, int min_cams) {
  RansacResult result;
  const int m = static_cast<int>(views.size());
  const int need = std::max(2, min_cams);
  if (m < need) return result;

  struct Candidate {
    double score;
    std::uint32_t mask;
    Eigen::Vector3d point;
  };
  std::vector<Candidate> candidates;
  std::vector<Eigen::Vector2d> pixels;
  std::vector<Matrix34<double>> projections;
  for (std::uint32_t mask = 1; mask < (1u << m); ++mask) {
    if (std::popcount(mask) < need) continue;
    pixels.clear();
    projections.clear();
    for (int i = 0; i < m; ++i) {
      if (!(mask & (1u << i))) continue;
      pixels.push_back(views[i].undistorted);
      projections.push_back(prepared.projections[views[i].camera]);
    }
    Eigen::Vector3d X;
    try {
      X = triangulate_dlt<double>(pixels, projections);
    } catch (const DegenerateGeometryError&) {
      ++result.degenerate_subsets;
      continue;
    }
    double sum = 0;
    for (int i = 0; i < m; ++i)
      if (mask & (1u << i)) sum += prepared.error(X, views[i].camera, views[i].raw);
    const double score = sum / double(std::popcount(mask));
    if (!std::isfinite(score)) continue;
    candidates.push_back({score, mask, X});
  }
  result.candidates = candidates.size();
  if (candidates.empty()) return result;

  double best_score = kInf;
  for (const auto& c : candidates) best_score = std::min(best_score, c.score);
  const Candidate* best = nullptr;
  for (const auto& c : candidates) {
    if (c.score > best_score + kScoreTieTolerance) continue;
    if (!best) {
      best = &c;
      continue;
    }
    const int size_c = std::popcount(c.mask), size_b = std::popcount(best->mask);
    if (size_c > size_b ||
        (size_c == size_b && subset_names(*prepared.rig, views, c.mask) < subset_names(*prepared.rig, views, best->mask)))
      best = &c;
  }

  result.keypoint.position = best->point;
  result.keypoint.reproj_error = best->score;
  result.keypoint.n_cams = std::popcount(best->mask);
  result.keypoint.present = true;
  for (int i = 0; i < m; ++i) {
    if (best->mask & (1u << i)) {
      result.inliers.push_back(views[i].camera);
      result.keypoint.inliers |= 1u << views[i].camera;
    }
  }
  std::sort(result.inliers.begin(), result.inliers.end());
  return result;
}

// Builds views from raw observations; undistortion failures drop the view.
std::vector<View> make_views(std::span<const std::optional<Eigen::Vector2d>> observations, const Rig& rig,
                             std::size_t* undistort_failures) {
  std::vector<View> views;
  for (std::size_t c = 0; c < observations.size(); ++c) {
    if (!observations[c]) continue;
    try {
      views.push_back({c, *observations[c], undistort_point(*observations[c], rig.cameras[c])});
    } catch (const NumericError&) {
      if (undistort_failures) ++*undistort_failures;
    }
  }
  return views;
}

}  // namespace

RansacResult triangulate_ransac(std::span<const std::optional<Eigen::Vector2d>> observations, const Rig& rig,
                                int min_cams) {
  if (observations.size() != rig.cameras.size())
    throw ArgumentError("one observation slot per rig camera is required");
  const PreparedRig prepared(rig);
  return ransac(make_views(observations, rig, nullptr), prepared, min_cams);
}

PoseSequence3D lift_sequence(std::span<const TrackSet> tracks, const Rig& rig, const SkeletonDefinition& skeleton,
                             const LiftConfig& config, LiftDiagnostics* diagnostics) {
  validate(rig);
  if (config.min_cams < 2) throw ConfigError("min_cams must be at least 2");
  if (config.median_window < 1 || config.median_window % 2 == 0)
    throw ConfigError("median window must be odd and >= 1");
  if (!(config.reproj_threshold_px >= 0)) throw ConfigError("reprojection threshold must be non-negative");

  // Match tracks to rig cameras by name.
  const std::size_t ncam = rig.cameras.size();
  std::vector<const TrackSet*> by_camera(ncam, nullptr);
  for (const auto& t : tracks) {
    const auto it = std::find_if(rig.cameras.begin(), rig.cameras.end(),
                                 [&](const Camera& c) { return c.name == t.camera; });
    if (it == rig.cameras.end()) throw ConfigError("tracks for unknown camera '" + t.camera + "'");
    const auto c = static_cast<std::size_t>(it - rig.cameras.begin());
    if (by_camera[c]) throw ConfigError("duplicate tracks for camera '" + t.camera + "'");
    by_camera[c] = &t;
  }
  std::optional<std::size_t> frames;
  for (std::size_t c = 0; c < ncam; ++c) {
    const TrackSet* t = by_camera[c];
    if (!t) throw ConfigError("no tracks for camera '" + rig.cameras[c].name + "'");
    if (frames && t->frames != *frames) throw ConfigError("tracks are not frame-aligned");
    frames = t->frames;
    if (t->keypoints != skeleton.keypoints)
      throw ConfigError("keypoints of camera '" + t->camera + "' do not match the skeleton");
    if (!(t->resolution == rig.cameras[c].image_size))
      throw ConfigError("track resolution of camera '" + t->camera + "' differs from its calibration image size");
  }

  const std::size_t nkp = skeleton.size();
  const std::size_t nframes = frames.value_or(0);
  PoseSequence3D seq(skeleton, nframes);
  const PreparedRig prepared(rig);

  // Triangulation, independent per frame.
  std::vector<LiftDiagnostics> per_frame(nframes);
  parallel_for(nframes, config.threads, [&](std::size_t f) {
    auto& diag = per_frame[f];
    std::vector<std::optional<Eigen::Vector2d>> obs(ncam);
    for (std::size_t k = 0; k < nkp; ++k) {
      for (std::size_t c = 0; c < ncam; ++c) {
        const auto& o = by_camera[c]->at(f, k);
        obs[c] = o.missing ? std::nullopt : std::optional(Eigen::Vector2d(o.x, o.y));
      }
      const auto result = ransac(make_views(obs, rig, &diag.undistort_failures), prepared, config.min_cams);
      ++diag.triangulations;
      diag.degenerate_subsets += result.degenerate_subsets;
      if (!result.keypoint.present) ++diag.insufficient_views;
      seq.at(f, k) = result.keypoint;
    }
  });

  // Temporal median over each coordinate, then the reprojection gate.
  parallel_for(nkp, config.threads, [&](std::size_t k) {
    if (config.median_window > 1) {
      for (int axis = 0; axis < 3; ++axis) {
        Series s(nframes);
        for (std::size_t f = 0; f < nframes; ++f)
          if (seq.at(f, k).present) s[f] = seq.at(f, k).position[axis];
        const Series filtered = median_filter_series(s, config.median_window);
        for (std::size_t f = 0; f < nframes; ++f)
          if (filtered[f]) seq.at(f, k).position[axis] = *filtered[f];
      }
    }
    for (std::size_t f = 0; f < nframes; ++f) {
      auto& kp = seq.at(f, k);
      if (!kp.present) continue;
      double sum = 0;
      for (std::size_t c = 0; c < ncam; ++c) {
        if (!(kp.inliers & (1u << c))) continue;
        const auto& o = by_camera[c]->at(f, k);
        sum += prepared.error(kp.position, c, Eigen::Vector2d(o.x, o.y));
      }
      kp.reproj_error = sum / double(kp.n_cams);
    }
  });

  LiftDiagnostics total;
  for (const auto& d : per_frame) {
    total.triangulations += d.triangulations;
    total.insufficient_views += d.insufficient_views;
    total.degenerate_subsets += d.degenerate_subsets;
    total.undistort_failures += d.undistort_failures;
  }
  for (auto& kp : seq.keypoints) {
    if (kp.present && !(std::isfinite(kp.reproj_error) &&
                        passes_reprojection_gate(kp.reproj_error, config.reproj_threshold_px))) {
      kp.present = false;
      ++total.dropped_by_threshold;
    }
  }

  std::vector<std::string> names;
  for (const auto& c : rig.cameras) names.push_back(c.name);
  seq.provenance = {{"min_cams", config.min_cams},
                    {"reproj_threshold_px", config.reproj_threshold_px},
                    {"median_window", config.median_window},
                    {"cameras", names},
                    {"skeleton", skeleton.name},
                    {"diagnostics",
                     {{"triangulations", total.triangulations},
                      {"insufficient_views", total.insufficient_views},
                      {"degenerate_subsets", total.degenerate_subsets},
                      {"undistort_failures", total.undistort_failures},
                      {"dropped_by_threshold", total.dropped_by_threshold}}}};
  if (diagnostics) *diagnostics = total;
  return seq;
}

namespace {
constexpr std::string_view kPoseHeader = "frame,keypoint,x,y,z,reproj_error_px,n_cams,present";
}

std::string pose_csv(const PoseSequence3D& seq, bool always_write_positions) {
  std::string out(kPoseHeader);
  out += '\n';
  const std::size_t nkp = seq.skeleton.size();
  for (std::size_t f = 0; f < seq.frame_count(); ++f) {
    for (std::size_t k = 0; k < nkp; ++k) {
      const auto& kp = seq.at(f, k);
      out += std::to_string(f) + ',' + seq.skeleton.keypoints[k] + ',';
      if (kp.present || always_write_positions) {
        out += format_double(kp.position.x()) + ',' + format_double(kp.position.y()) + ',' +
               format_double(kp.position.z()) + ',';
      } else {
        out += ",,,";
      }
      out += (kp.present && std::isfinite(kp.reproj_error)) ? format_double(kp.reproj_error) : std::string();
      out += ',';
      out += (kp.present || always_write_positions) ? std::to_string(kp.n_cams) : std::string();
      out += kp.present ? ",1\n" : ",0\n";
    }
  }
  return out;
}

void write_poses(const PoseSequence3D& seq, const std::filesystem::path& path, bool always_write_positions) {
  write_text(path, pose_csv(seq, always_write_positions));
}

PoseSequence3D read_poses(const std::filesystem::path& path, const SkeletonDefinition& skeleton) {
  const auto lines = read_lines(path);
  const std::string src = path.string();
  if (lines.empty() || lines[0] != kPoseHeader)
    throw ParseError(src, 1, "header must be '" + std::string(kPoseHeader) + "'");
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t k = 0; k < skeleton.size(); ++k) index.emplace(skeleton.keypoints[k], k);

  struct Row {
    std::size_t line, frame, kp;
    Keypoint3D value;
  };
  std::vector<Row> rows;
  std::size_t frames = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t row = i + 1;
    if (lines[i].empty()) continue;
    const auto fields = split_fields(lines[i]);
    if (fields.size() != 8) throw ParseError(src, row, "expected 8 fields, got " + std::to_string(fields.size()));
    const long long frame = parse_integer(fields[0], src, row);
    if (frame < 0) throw ParseError(src, row, "negative frame index");
    const auto it = index.find(fields[1]);
    if (it == index.end()) throw ParseError(src, row, "unknown keypoint '" + std::string(fields[1]) + "'");
    Keypoint3D kp;
    if (fields[7] != "0" && fields[7] != "1") throw ParseError(src, row, "present must be 0 or 1");
    kp.present = fields[7] == "1";
    if (!fields[2].empty() || kp.present)
      kp.position = {parse_double(fields[2], src, row), parse_double(fields[3], src, row),
                     parse_double(fields[4], src, row)};
    if (!fields[5].empty()) kp.reproj_error = parse_double(fields[5], src, row);
    if (!fields[6].empty()) kp.n_cams = static_cast<int>(parse_integer(fields[6], src, row));
    if (kp.present && kp.n_cams < 2) throw ParseError(src, row, "present keypoint with fewer than 2 cameras");
    rows.push_back({row, static_cast<std::size_t>(frame), it->second, kp});
    frames = std::max(frames, static_cast<std::size_t>(frame) + 1);
  }
  PoseSequence3D seq(skeleton, frames);
  std::vector<char> seen(seq.keypoints.size(), 0);
  for (const auto& r : rows) {
    const std::size_t slot = r.frame * skeleton.size() + r.kp;
    if (seen[slot]) throw ParseError(src, r.line, "duplicate row");
    seen[slot] = 1;
    seq.keypoints[slot] = r.value;
  }
  return seq;
}

}  // namespace poselift
