#include "poselift/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <unordered_map>

#include "poselift/error.hpp"
#include "poselift/random.hpp"

namespace poselift {

std::string to_string(PainState s) { return s == PainState::healthy ? "healthy" : "painful"; }

PainState pain_state_from_string(const std::string& s) {
  if (s == "healthy") return PainState::healthy;
  if (s == "painful") return PainState::painful;
  throw ArgumentError("unknown pain state '" + s + "'");
}

Rig make_default_rig(const BoxDims& box, ImageSize image_size, double focal_px) {
  if (!(box.width > 0) || !(box.depth > 0) || !(box.height > 0))
    throw ArgumentError("box dimensions must be positive");
  if (!(focal_px > 0) || image_size.width <= 0 || image_size.height <= 0)
    throw ArgumentError("camera intrinsics must be positive");
  const Eigen::Vector3d target(box.width / 2, box.depth / 2, box.height / 2);
  const std::array<Eigen::Vector3d, 4> corners = {Eigen::Vector3d(0, 0, box.height),
                                                  Eigen::Vector3d(box.width, 0, box.height),
                                                  Eigen::Vector3d(box.width, box.depth, box.height),
                                                  Eigen::Vector3d(0, box.depth, box.height)};
  Rig rig;
  for (std::size_t i = 0; i < corners.size(); ++i) {
    const Eigen::Vector3d& center = corners[i];
    // Camera axes: x right, y down, z along the optical axis.
    const Eigen::Vector3d forward = (target - center).normalized();
    const Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitZ()).normalized();
    const Eigen::Vector3d down = forward.cross(right);
    Eigen::Matrix3d R;
    R.row(0) = right;
    R.row(1) = down;
    R.row(2) = forward;
    Camera cam;
    cam.name = "cam" + std::to_string(i + 1);
    cam.image_size = image_size;
    cam.fx = cam.fy = focal_px;
    cam.cx = image_size.width / 2.0;
    cam.cy = image_size.height / 2.0;
    cam.rotation = matrix_to_rodrigues<double>(R);
    cam.translation = -rodrigues_to_matrix<double>(cam.rotation) * center;
    rig.cameras.push_back(std::move(cam));
  }
  return rig;
}

namespace {

using Eigen::Vector3d;

// Neck pitch (radians above horizontal) per motion mode.
constexpr double kNeckStand = 0.9;
constexpr double kNeckWalk = 0.55;
constexpr double kNeckEat = -0.75;
constexpr double kPathMargin = 1.6;
constexpr double kStrideLength = 1.6;
constexpr double kGaitSwing = 0.45;  // radians
constexpr double kHoofLift = 0.15;

enum class Mode { stand, walk, eat };

struct BodyState {
  double heading = 0;
  double neck = kNeckStand;
  double gait_phase = 0;
  double gait_amplitude = 0;
  double tail_sway = 0;
  double scale = 1;
};

// Keypoint positions in the body frame (x forward, y left, z up, ground at 0).
std::unordered_map<std::string, Vector3d> body_pose(const BodyState& s) {
  std::unordered_map<std::string, Vector3d> p;
  p["withers"] = {0.45, 0, 1.55};
  p["croup"] = {-0.55, 0, 1.50};
  p["tail_base"] = {-0.75, 0, 1.42};
  p["tail_mid"] = {-0.88, 0.12 * s.tail_sway, 1.12};
  p["tail_tip"] = {-0.93, 0.25 * s.tail_sway, 0.82};

  const Vector3d neck_base(0.55, 0, 1.45);
  const Vector3d poll = neck_base + 0.75 * Vector3d(std::cos(s.neck), 0, std::sin(s.neck));
  const double head_pitch = s.neck - 0.9;
  const Vector3d fwd(std::cos(head_pitch), 0, std::sin(head_pitch));
  const Vector3d up(-std::sin(head_pitch), 0, std::cos(head_pitch));
  auto head = [&](double f, double lateral, double u) { return Vector3d(poll + f * fwd + u * up + Vector3d(0, lateral, 0)); };
  p["head_top"] = poll;
  p["ear_left"] = head(-0.05, 0.09, 0.13);
  p["ear_right"] = head(-0.05, -0.09, 0.13);
  p["eye_left"] = head(0.12, 0.10, -0.02);
  p["eye_right"] = head(0.12, -0.10, -0.02);
  p["nostril_left"] = head(0.52, 0.035, -0.05);
  p["nostril_right"] = head(0.52, -0.035, -0.05);

  struct Leg {
    const char* name;
    const char* joints[4];
    Vector3d top;
    Vector3d chain[4];
    double phase;  // fraction of a stride
  };
  const std::array<Leg, 4> legs = {{
      {"front_left", {"elbow", "carpus", "fetlock", "hoof"}, {0.38, 0.17, 1.05},
       {{0, 0, 0}, {0.02, 0, -0.50}, {0, 0, -0.85}, {0.05, 0, -1.0}}, 0.25},
      {"front_right", {"elbow", "carpus", "fetlock", "hoof"}, {0.38, -0.17, 1.05},
       {{0, 0, 0}, {0.02, 0, -0.50}, {0, 0, -0.85}, {0.05, 0, -1.0}}, 0.75},
      {"hind_left", {"stifle", "tarsus", "fetlock", "hoof"}, {-0.45, 0.20, 1.05},
       {{0, 0, 0}, {-0.12, 0, -0.45}, {-0.06, 0, -0.85}, {-0.02, 0, -1.0}}, 0.0},
      {"hind_right", {"stifle", "tarsus", "fetlock", "hoof"}, {-0.45, -0.20, 1.05},
       {{0, 0, 0}, {-0.12, 0, -0.45}, {-0.06, 0, -0.85}, {-0.02, 0, -1.0}}, 0.5},
  }};
  for (const auto& leg : legs) {
    const double phase = s.gait_phase + 2 * std::numbers::pi * leg.phase;
    const double swing = s.gait_amplitude * kGaitSwing * std::sin(phase);
    const double lift = s.gait_amplitude * kHoofLift * std::max(0.0, std::cos(phase));
    for (int j = 0; j < 4; ++j) {
      const Vector3d& c = leg.chain[j];
      // Rotation about the lateral axis; positive swing moves the hoof forward.
      Vector3d q(c.x() * std::cos(swing) - c.z() * std::sin(swing), c.y(),
                 c.x() * std::sin(swing) + c.z() * std::cos(swing));
      q.z() += lift * (j >= 2 ? 1.0 : 0.5 * j);
      p[std::string(leg.name) + "_" + leg.joints[j]] = leg.top + q;
    }
  }
  for (auto& [_, v] : p) v *= s.scale;
  return p;
}

const std::array<const char*, 7> kHeadKeypoints = {"nostril_left", "nostril_right", "ear_left", "ear_right",
                                                   "eye_left",     "eye_right",     "head_top"};

double head_height(const std::unordered_map<std::string, Vector3d>& pose) {
  double z = 0;
  for (const char* k : kHeadKeypoints) z += pose.at(k).z();
  return z / double(kHeadKeypoints.size());
}

double approach(double value, double target, double max_step) {
  return value + std::clamp(target - value, -max_step, max_step);
}

void append_runs(const std::vector<char>& flags, const std::string& behavior, std::vector<BehaviorInterval>& out) {
  std::size_t f = 0;
  while (f < flags.size()) {
    if (!flags[f]) {
      ++f;
      continue;
    }
    const std::size_t start = f;
    while (f < flags.size() && flags[f]) ++f;
    out.push_back({behavior, start, f});
  }
}

}  // namespace

SynthTruth synth_motion(const SkeletonDefinition& skeleton, const BoxDims& box, std::size_t frames,
                        std::uint64_t seed, const MotionOptions& options) {
  if (frames < 1) throw ArgumentError("synthetic motion needs at least one frame");
  if (!(options.fps > 0)) throw ArgumentError("fps must be positive");
  if (options.mode_min_frames < 1 || options.mode_max_frames < options.mode_min_frames)
    throw ArgumentError("invalid motion mode durations");
  const double semi_x = box.width / 2 - kPathMargin, semi_y = box.depth / 2 - kPathMargin;
  if (semi_x < 0.05 || semi_y < 0.05 || box.height < 2.5)
    throw ArgumentError("box is too small for the synthetic animal (needs > 3.3 x 3.3 x 2.5)");

  const BodyState rest;
  const auto rest_pose = body_pose(rest);
  for (const auto& kp : skeleton.keypoints)
    if (!rest_pose.count(kp)) throw ArgumentError("synthetic motion has no model for keypoint '" + kp + "'");

  Rng rng(derive_seed(seed, "motion"));
  const double dt = 1.0 / options.fps;
  const double scale = uniform(rng, 0.95, 1.05);
  const double rest_head = head_height(rest_pose) * scale;
  const double path_phase0 = uniform(rng, 0, 2 * std::numbers::pi);
  std::array<double, 3> sway_phase{};
  for (auto& ph : sway_phase) ph = uniform(rng, 0, 2 * std::numbers::pi);

  // Mode schedule; consecutive modes always differ.
  const std::array<double, 3> weights = options.pain_state == PainState::painful ? std::array{0.25, 0.40, 0.35}
                                                                                 : std::array{0.45, 0.25, 0.30};
  std::vector<Mode> mode_of(frames);
  std::vector<double> walk_speed_of(frames, 0.0);
  {
    std::size_t f = 0;
    int previous = -1;
    while (f < frames) {
      int m;
      do {
        const double u = uniform01(rng) * (weights[0] + weights[1] + weights[2]);
        m = u < weights[0] ? 0 : (u < weights[0] + weights[1] ? 1 : 2);
      } while (m == previous);
      previous = m;
      const auto span = options.mode_max_frames - options.mode_min_frames + 1;
      const std::size_t len = options.mode_min_frames + uniform_index(rng, span);
      const double v = uniform(rng, 0.7, 1.1);
      for (std::size_t i = f; i < std::min(frames, f + len); ++i) {
        mode_of[i] = static_cast<Mode>(m);
        walk_speed_of[i] = v;
      }
      f += len;
    }
  }

  SynthTruth truth;
  truth.poses = PoseSequence3D(skeleton, frames);
  truth.speed.resize(frames);
  truth.head_height.resize(frames);
  std::vector<char> moving(frames), standing(frames), eating(frames);

  BodyState s;
  s.scale = scale;
  s.neck = mode_of[0] == Mode::eat ? kNeckEat : (mode_of[0] == Mode::walk ? kNeckWalk : kNeckStand);
  double speed = 0, path = path_phase0;
  const double accel_step = 0.9 * dt;  // reaches walking pace in about a second
  const double neck_step = 2.0 * dt;
  for (std::size_t f = 0; f < frames; ++f) {
    const Mode mode = mode_of[f];
    speed = approach(speed, mode == Mode::walk ? walk_speed_of[f] : 0.0, accel_step);
    s.neck = approach(s.neck, mode == Mode::eat ? kNeckEat : (mode == Mode::walk ? kNeckWalk : kNeckStand), neck_step);
    const double t = double(f) * dt;

    // Counter-clockwise walk around an ellipse centred in the box.
    const Eigen::Vector2d tangent(-semi_x * std::sin(path), semi_y * std::cos(path));
    path += speed * dt / tangent.norm();
    const Eigen::Vector2d centroid(box.width / 2 + semi_x * std::cos(path), box.depth / 2 + semi_y * std::sin(path));
    const Eigen::Vector2d dir(-semi_x * std::sin(path), semi_y * std::cos(path));
    s.heading = std::atan2(dir.y(), dir.x()) + 0.08 * std::sin(0.21 * t + sway_phase[0]);
    s.gait_phase += 2 * std::numbers::pi * speed * dt / kStrideLength;
    s.gait_amplitude = std::min(1.0, speed / 0.5);
    s.tail_sway = std::sin(0.7 * t + sway_phase[1]) * (0.5 + 0.5 * std::sin(0.05 * t + sway_phase[2]));

    const auto pose = body_pose(s);
    const Eigen::Matrix3d Rz = Eigen::AngleAxisd(s.heading, Vector3d::UnitZ()).toRotationMatrix();
    const Vector3d origin(centroid.x(), centroid.y(), 0);
    for (std::size_t k = 0; k < skeleton.size(); ++k) {
      auto& kp = truth.poses.at(f, k);
      kp.position = origin + Rz * pose.at(skeleton.keypoints[k]);
      kp.present = true;
      kp.n_cams = 0;
    }
    truth.speed[f] = speed;
    truth.head_height[f] = head_height(pose);
    moving[f] = speed > kMovementSpeed;
    standing[f] = !moving[f];
    eating[f] = truth.head_height[f] < kEatingHeadFraction * rest_head;
  }
  append_runs(eating, "eating", truth.intervals);
  append_runs(moving, "movement", truth.intervals);
  append_runs(standing, "standing", truth.intervals);
  return truth;
}

void validate(const SynthScenario& sc) {
  validate(sc.rig);
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(sc.occlusion_prob) || !prob(sc.low_confidence_fraction) || !prob(sc.outliers.probability))
    throw ArgumentError("probabilities must lie in [0, 1]");
  if (!(sc.noise_sigma >= 0)) throw ArgumentError("noise sigma must be non-negative");
  if (sc.track_resolution.width <= 0 || sc.track_resolution.height <= 0)
    throw ArgumentError("track resolution must be positive");
  for (const auto& name : sc.outliers.cameras) {
    if (std::none_of(sc.rig.cameras.begin(), sc.rig.cameras.end(), [&](const Camera& c) { return c.name == name; }))
      throw ArgumentError("outlier camera '" + name + "' is not in the rig");
  }
}

SynthObservation observe(const SynthTruth& truth, const SynthScenario& sc) {
  validate(sc);
  const auto& seq = truth.poses;
  const std::size_t frames = seq.frame_count(), nkp = seq.skeleton.size(), ncam = sc.rig.cameras.size();

  SynthObservation out;
  out.visible_views.assign(frames * nkp, 0);
  out.outlier_frames.assign(ncam, std::vector<bool>(frames, false));
  for (std::size_t c = 0; c < ncam; ++c) {
    const Camera& cam = sc.rig.cameras[c];
    const Eigen::Matrix3d R = rodrigues_to_matrix(cam.rotation);
    const double sx = double(sc.track_resolution.width) / cam.image_size.width;
    const double sy = double(sc.track_resolution.height) / cam.image_size.height;
    // Independent streams per camera and per effect; every stream draws a fixed
    // number of values per cell so one effect never shifts another.
    Rng noise(derive_seed(derive_seed(sc.seed, "noise"), c));
    Rng occlusion(derive_seed(derive_seed(sc.seed, "occlusion"), c));
    Rng outlier(derive_seed(derive_seed(sc.seed, "outliers"), c));
    const bool outlier_camera =
        std::find(sc.outliers.cameras.begin(), sc.outliers.cameras.end(), cam.name) != sc.outliers.cameras.end();

    TrackSet t(cam.name, sc.track_resolution, sc.fps, seq.skeleton.keypoints, frames);
    for (std::size_t f = 0; f < frames; ++f) {
      const double u_out = uniform01(outlier);
      const double angle = uniform(outlier, 0, 2 * std::numbers::pi);
      const bool is_outlier = outlier_camera && u_out < sc.outliers.probability;
      out.outlier_frames[c][f] = is_outlier;
      for (std::size_t k = 0; k < nkp; ++k) {
        const double n1 = standard_normal(noise), n2 = standard_normal(noise);
        const double u_occ = uniform01(occlusion), u_emit = uniform01(occlusion), u_lik = uniform01(occlusion);
        const auto px = try_project(seq.at(f, k).position, cam, R);
        if (!px || !in_image(*px, cam)) continue;
        Eigen::Vector2d value;
        double likelihood = 1.0;
        if (u_occ < sc.occlusion_prob) {
          if (u_emit >= sc.low_confidence_fraction) continue;
          // Emitted by the detector but with low confidence and a poor location.
          likelihood = 0.6 * u_lik;
          value = *px + 30.0 * Eigen::Vector2d(n1, n2);
        } else {
          ++out.visible_views[f * nkp + k];
          value = *px + sc.noise_sigma * Eigen::Vector2d(n1, n2);
        }
        if (is_outlier) value += sc.outliers.offset_px * Eigen::Vector2d(std::cos(angle), std::sin(angle));
        t.at(f, k) = {value.x() * sx, value.y() * sy, likelihood, false};
      }
    }
    out.tracks.push_back(std::move(t));
  }
  return out;
}

PoseSequence3D ground_truth_sequence(const SynthTruth& truth, const SynthObservation& obs) {
  PoseSequence3D seq = truth.poses;
  for (std::size_t i = 0; i < seq.keypoints.size(); ++i) {
    auto& kp = seq.keypoints[i];
    kp.n_cams = obs.visible_views[i];
    kp.present = kp.n_cams >= 2;
    kp.reproj_error = std::numeric_limits<double>::quiet_NaN();
  }
  seq.provenance = {{"ground_truth", true}};
  return seq;
}

TruthComparison evaluate_against_truth(const PoseSequence3D& estimate, const PoseSequence3D& truth) {
  if (estimate.frame_count() != truth.frame_count())
    throw ArgumentError("estimate has " + std::to_string(estimate.frame_count()) + " frames, truth has " +
                        std::to_string(truth.frame_count()));
  if (estimate.skeleton.keypoints != truth.skeleton.keypoints)
    throw ArgumentError("estimate and truth use different skeletons");
  const std::size_t nkp = truth.skeleton.size();
  TruthComparison out;
  std::vector<double> sq(nkp, 0.0);
  std::vector<std::size_t> count(nkp, 0);
  double total_sq = 0;
  std::size_t total = 0;
  for (std::size_t f = 0; f < truth.frame_count(); ++f) {
    for (std::size_t k = 0; k < nkp; ++k) {
      const auto& e = estimate.at(f, k);
      const auto& t = truth.at(f, k);
      if (e.present && t.present) ++out.true_positive;
      else if (e.present) ++out.false_positive;
      else if (t.present) ++out.false_negative;
      else ++out.true_negative;
      if (!e.present) continue;
      const double d2 = (e.position - t.position).squaredNorm();
      sq[k] += d2;
      ++count[k];
      total_sq += d2;
      ++total;
    }
  }
  for (std::size_t k = 0; k < nkp; ++k)
    out.keypoint_rms.push_back(count[k] ? std::optional(std::sqrt(sq[k] / double(count[k]))) : std::nullopt);
  if (total) out.rms = std::sqrt(total_sq / double(total));
  return out;
}

}  // namespace poselift
