#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "poselift/error.hpp"
#include "poselift/lifting.hpp"
#include "poselift/random.hpp"
#include "test_util.hpp"

using namespace poselift;

namespace {

// Camera at `eye` looking at `target` with world z up.
Camera look_at(const std::string& name, const Eigen::Vector3d& eye, const Eigen::Vector3d& target) {
  const Eigen::Vector3d fwd = (target - eye).normalized();
  const Eigen::Vector3d right = fwd.cross(Eigen::Vector3d::UnitZ()).normalized();
  const Eigen::Vector3d down = fwd.cross(right);
  Eigen::Matrix3d R;
  R.row(0) = right;
  R.row(1) = down;
  R.row(2) = fwd;
  Camera c;
  c.name = name;
  c.image_size = {2688, 1520};
  c.fx = c.fy = 1200;
  c.cx = 1344;
  c.cy = 760;
  c.rotation = matrix_to_rodrigues(R);
  c.translation = -R * eye;
  return c;
}

Rig corner_rig() {
  const Eigen::Vector3d centre(0, 0, 1);
  Rig rig;
  rig.cameras = {look_at("cam1", {-4, -3, 3}, centre), look_at("cam2", {4, -3, 3}, centre),
                 look_at("cam3", {4, 3, 3}, centre), look_at("cam4", {-4, 3, 3}, centre)};
  rig.cameras[2].dist << -0.05, 0.01, 0.0005, -0.0003, 0.0;
  return rig;
}

std::vector<std::optional<Eigen::Vector2d>> exact_views(const Eigen::Vector3d& p, const Rig& rig) {
  std::vector<std::optional<Eigen::Vector2d>> out;
  for (const auto& c : rig.cameras) out.push_back(project(p, c));
  return out;
}

SkeletonDefinition two_point_skeleton() {
  SkeletonDefinition s;
  s.name = "pair";
  s.keypoints = {"withers", "croup"};
  s.groups = {"Withers", "Croup"};
  return s;
}

// One TrackSet per camera with exact projections of a slowly moving pair of points.
std::vector<TrackSet> moving_tracks(const Rig& rig, std::size_t frames, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TrackSet> out;
  for (const auto& cam : rig.cameras) out.emplace_back(cam.name, cam.image_size, 20.0, two_point_skeleton().keypoints, frames);
  for (std::size_t f = 0; f < frames; ++f) {
    const double t = 0.05 * double(f);
    const Eigen::Vector3d pts[2] = {{std::cos(t), std::sin(t), 1.2}, {0.5 * std::cos(t), 0.8 * std::sin(t), 0.9}};
    for (std::size_t c = 0; c < rig.cameras.size(); ++c)
      for (std::size_t k = 0; k < 2; ++k) {
        const Eigen::Vector2d px = project(pts[k], rig.cameras[c]);
        out[c].at(f, k) = {px.x() + sigma * standard_normal(rng), px.y() + sigma * standard_normal(rng), 1.0, false};
      }
  }
  return out;
}

}  // namespace

TEST_CASE("triangulate_dlt examples") {
  const Rig rig = corner_rig();
  const Eigen::Vector3d truth(0.5, -0.2, 3.0);
  std::vector<Eigen::Vector2d> px;
  std::vector<Camera> cams;
  for (std::size_t c = 0; c < 2; ++c) {
    px.push_back(project(truth, rig.cameras[c]));
    cams.push_back(rig.cameras[c]);
  }
  CHECK((triangulate_dlt<double>(px, cams) - truth).norm() < 1e-9);

  const std::vector<Eigen::Vector2d> dup_px = {px[0], px[0]};
  const std::vector<Camera> dup_cams = {rig.cameras[0], rig.cameras[0]};
  CHECK_THROWS_AS(triangulate_dlt<double>(dup_px, dup_cams), DegenerateGeometryError);

  // Zero-distortion cameras so raw pixels are already undistorted.
  Rig flat = rig;
  for (auto& c : flat.cameras) c.dist.setZero();
  std::vector<Eigen::Vector2d> all_px;
  for (const auto& c : flat.cameras) all_px.push_back(project(truth, c));
  const Eigen::Vector3d all = triangulate_dlt<double>(all_px, flat.cameras);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) {
      const std::vector<Eigen::Vector2d> sp = {all_px[i], all_px[j]};
      const std::vector<Camera> sc = {flat.cameras[i], flat.cameras[j]};
      CHECK((triangulate_dlt<double>(sp, sc) - all).norm() < 1e-6);
    }
}

TEST_CASE("triangulate_dlt noiseless property") {
  Rig flat = corner_rig();
  for (auto& c : flat.cameras) c.dist.setZero();
  Rng rng(17);
  for (int i = 0; i < 300; ++i) {
    const Eigen::Vector3d p(uniform(rng, -2, 2), uniform(rng, -1.5, 1.5), uniform(rng, 0, 2));
    std::vector<Eigen::Vector2d> px;
    for (const auto& c : flat.cameras) px.push_back(project(p, c));
    const Eigen::Vector3d est = triangulate_dlt<double>(px, flat.cameras);
    CHECK((est - p).norm() <= 1e-6);
    const auto err = reprojection_error<double>(est, px, flat.cameras);
    for (double e : err.per_camera) CHECK(e <= 1e-6);
  }
}

TEST_CASE("reprojection_error examples") {
  const Rig rig = corner_rig();
  const Eigen::Vector3d p(0.1, 0.2, 1.0);
  std::vector<Eigen::Vector2d> obs;
  for (const auto& c : rig.cameras) obs.push_back(project(p, c));
  const auto exact = reprojection_error<double>(p, obs, rig.cameras);
  CHECK(exact.mean == 0);
  for (double e : exact.per_camera) CHECK(e == 0);

  obs[1].x() += 3;
  const auto shifted = reprojection_error<double>(p, obs, rig.cameras);
  CHECK(std::abs(shifted.per_camera[1] - 3.0) < 1e-9);
  CHECK(shifted.per_camera[0] == 0);
  CHECK(std::abs(shifted.mean - 0.75) < 1e-9);

  const Eigen::Vector3d behind(-6, -4.5, 4);  // behind cam1
  const auto inf = reprojection_error<double>(behind, obs, rig.cameras);
  CHECK(std::isinf(inf.per_camera[0]));
  CHECK(std::isinf(inf.mean));
}

TEST_CASE("triangulate_ransac examples") {
  const Rig rig = corner_rig();
  const Eigen::Vector3d p(0.3, -0.4, 1.1);

  const auto full = triangulate_ransac(exact_views(p, rig), rig);
  REQUIRE(full.keypoint.present);
  CHECK(full.inliers == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(full.keypoint.n_cams == 4);
  CHECK(full.keypoint.reproj_error < 1e-6);
  CHECK(full.candidates == 11);

  Rng rng(23);
  auto views = exact_views(p, rig);
  for (auto& v : views) *v += Eigen::Vector2d(standard_normal(rng), standard_normal(rng));
  *views[2] += Eigen::Vector2d(300, 0);
  const auto robust = triangulate_ransac(views, rig);
  REQUIRE(robust.keypoint.present);
  CHECK(std::find(robust.inliers.begin(), robust.inliers.end(), 2) == robust.inliers.end());
  CHECK(robust.keypoint.reproj_error < 3.0);

  // Naive all-camera DLT on undistorted pixels.
  std::vector<Eigen::Vector2d> und;
  for (std::size_t c = 0; c < 4; ++c) und.push_back(undistort_point(*views[c], rig.cameras[c]));
  const Eigen::Vector3d naive = triangulate_dlt<double>(und, rig.cameras);
  std::vector<Eigen::Vector2d> raw;
  for (const auto& v : views) raw.push_back(*v);
  CHECK(reprojection_error<double>(naive, raw, rig.cameras).mean > robust.keypoint.reproj_error);
  CHECK((naive - p).norm() > (robust.keypoint.position - p).norm());

  std::vector<std::optional<Eigen::Vector2d>> lonely(4);
  lonely[1] = project(p, rig.cameras[1]);
  const auto none = triangulate_ransac(lonely, rig);
  CHECK_FALSE(none.keypoint.present);
  CHECK(none.candidates == 0);
}

TEST_CASE("ransac score never exceeds the full-set DLT score") {
  const Rig rig = corner_rig();
  Rng rng(31);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector3d p(uniform(rng, -2, 2), uniform(rng, -1.5, 1.5), uniform(rng, 0, 2));
    auto views = exact_views(p, rig);
    for (auto& v : views) *v += 4.0 * Eigen::Vector2d(standard_normal(rng), standard_normal(rng));
    const auto r = triangulate_ransac(views, rig);
    std::vector<Eigen::Vector2d> und, raw;
    for (std::size_t c = 0; c < 4; ++c) {
      und.push_back(undistort_point(*views[c], rig.cameras[c]));
      raw.push_back(*views[c]);
    }
    const Eigen::Vector3d full = triangulate_dlt<double>(und, rig.cameras);
    CHECK(r.keypoint.reproj_error <= reprojection_error<double>(full, raw, rig.cameras).mean + kScoreTieTolerance);
  }
}

TEST_CASE("ransac is invariant to camera order") {
  const Rig rig = corner_rig();
  Rig perm;
  perm.cameras = {rig.cameras[2], rig.cameras[0], rig.cameras[3], rig.cameras[1]};
  const std::size_t map_back[4] = {2, 0, 3, 1};
  Rng rng(77);
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector3d p(uniform(rng, -2, 2), uniform(rng, -1.5, 1.5), uniform(rng, 0, 2));
    auto views = exact_views(p, rig);
    for (auto& v : views) *v += 2.0 * Eigen::Vector2d(standard_normal(rng), standard_normal(rng));
    if (uniform01(rng) < 0.5) *views[uniform_index(rng, 4)] += Eigen::Vector2d(0, 250);
    std::vector<std::optional<Eigen::Vector2d>> pviews;
    for (std::size_t j = 0; j < 4; ++j) pviews.push_back(views[map_back[j]]);
    const auto a = triangulate_ransac(views, rig);
    const auto b = triangulate_ransac(pviews, perm);
    CHECK((a.keypoint.position - b.keypoint.position).norm() < 1e-9);
    std::vector<std::size_t> mapped;
    for (std::size_t j : b.inliers) mapped.push_back(map_back[j]);
    std::sort(mapped.begin(), mapped.end());
    CHECK(mapped == a.inliers);
  }
}

TEST_CASE("reprojection gate boundary") {
  CHECK_FALSE(passes_reprojection_gate(200.1, 200.0));
  CHECK(passes_reprojection_gate(199.9, 200.0));
  CHECK(passes_reprojection_gate(200.0, 200.0));
}

TEST_CASE("lift_sequence noiseless run") {
  const Rig rig = corner_rig();
  const auto tracks = moving_tracks(rig, 80, 0.0, 1);
  LiftConfig cfg;
  cfg.median_window = 1;
  LiftDiagnostics diag;
  const auto seq = lift_sequence(tracks, rig, two_point_skeleton(), cfg, &diag);
  CHECK(seq.frame_count() == 80);
  CHECK(diag.triangulations == 160);
  for (const auto& kp : seq.keypoints) {
    CHECK(kp.present);
    CHECK(kp.reproj_error < 1e-6);
    CHECK(kp.n_cams == 4);
  }
  CHECK(seq.provenance.contains("reproj_threshold_px"));
}

TEST_CASE("lift_sequence gate is strict and monotone") {
  const Rig rig = corner_rig();
  auto tracks = moving_tracks(rig, 60, 3.0, 2);
  LiftConfig open;
  open.reproj_threshold_px = std::numeric_limits<double>::infinity();
  const auto base = lift_sequence(tracks, rig, two_point_skeleton(), open);
  const double e = base.at(30, 1).reproj_error;
  REQUIRE(std::isfinite(e));

  LiftConfig cfg = open;
  cfg.reproj_threshold_px = e;
  CHECK(lift_sequence(tracks, rig, two_point_skeleton(), cfg).at(30, 1).present);
  cfg.reproj_threshold_px = std::nextafter(e, 0.0);
  CHECK_FALSE(lift_sequence(tracks, rig, two_point_skeleton(), cfg).at(30, 1).present);

  std::size_t previous = 0;
  for (double thr : {0.5, 1.0, 2.0, 3.0, 5.0, 200.0}) {
    cfg.reproj_threshold_px = thr;
    const auto seq = lift_sequence(tracks, rig, two_point_skeleton(), cfg);
    const auto n = static_cast<std::size_t>(
        std::count_if(seq.keypoints.begin(), seq.keypoints.end(), [](const Keypoint3D& k) { return k.present; }));
    CHECK(n >= previous);
    previous = n;
  }
}

TEST_CASE("lift_sequence is deterministic across thread counts") {
  const Rig rig = corner_rig();
  const auto tracks = moving_tracks(rig, 50, 2.0, 3);
  LiftConfig a, b;
  a.threads = 1;
  b.threads = 3;
  const auto s1 = lift_sequence(tracks, rig, two_point_skeleton(), a);
  const auto s2 = lift_sequence(tracks, rig, two_point_skeleton(), b);
  CHECK(pose_csv(s1) == pose_csv(s2));
}

TEST_CASE("lift_sequence configuration errors") {
  const Rig rig = corner_rig();
  auto tracks = moving_tracks(rig, 10, 0.0, 4);
  auto misaligned = tracks;
  misaligned[1] = TrackSet(misaligned[1].camera, misaligned[1].resolution, 20, misaligned[1].keypoints, 9);
  CHECK_THROWS_AS(lift_sequence(misaligned, rig, two_point_skeleton()), ConfigError);

  auto lowres = tracks;
  lowres[0] = rescale(lowres[0], {336, 190});
  CHECK_THROWS_AS(lift_sequence(lowres, rig, two_point_skeleton()), ConfigError);

  auto missing_cam = tracks;
  missing_cam.pop_back();
  CHECK_THROWS_AS(lift_sequence(missing_cam, rig, two_point_skeleton()), ConfigError);
}

TEST_CASE("pose CSV format and round trip") {
  const Rig rig = corner_rig();
  auto tracks = moving_tracks(rig, 5, 1.0, 5);
  for (auto& t : tracks) t.at(2, 0).missing = true;
  LiftConfig cfg;
  cfg.median_window = 1;
  const auto seq = lift_sequence(tracks, rig, two_point_skeleton(), cfg);
  const std::string csv = pose_csv(seq);
  CHECK(csv.rfind("frame,keypoint,x,y,z,reproj_error_px,n_cams,present\n", 0) == 0);
  CHECK(csv.find("2,withers,,,,,,0\n") != std::string::npos);

  testutil::TempDir dir;
  write_poses(seq, dir / "poses.csv");
  const auto back = read_poses(dir / "poses.csv", two_point_skeleton());
  CHECK(pose_csv(back) == csv);
}
