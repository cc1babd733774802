#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "poselift/calibration.hpp"
#include "poselift/csv.hpp"
#include "poselift/error.hpp"
#include "poselift/geometry.hpp"
#include "poselift/random.hpp"

using namespace poselift;

namespace {

// Matrix exponential of the skew matrix by its Taylor series.
Eigen::Matrix3d exp_skew(const Eigen::Vector3d& r) {
  Eigen::Matrix3d K;
  K << 0, -r.z(), r.y(), r.z(), 0, -r.x(), -r.y(), r.x(), 0;
  Eigen::Matrix3d sum = Eigen::Matrix3d::Identity(), term = Eigen::Matrix3d::Identity();
  for (int n = 1; n < 40; ++n) {
    term = term * K / double(n);
    sum += term;
  }
  return sum;
}

Camera simple_camera() {
  Camera c;
  c.name = "c";
  c.image_size = {320, 190};
  c.fx = c.fy = 100;
  c.cx = 160;
  c.cy = 95;
  return c;
}

}  // namespace

TEST_CASE("rodrigues_to_matrix examples") {
  CHECK(rodrigues_to_matrix(Eigen::Vector3d::Zero().eval()).isApprox(Eigen::Matrix3d::Identity()));

  const Eigen::Matrix3d Rz = rodrigues_to_matrix(Eigen::Vector3d(0, 0, std::numbers::pi / 2));
  CHECK((Rz * Eigen::Vector3d::UnitX() - Eigen::Vector3d::UnitY()).norm() < 1e-15);

  const Eigen::Vector3d r(0.3, -0.2, 0.1);
  const Eigen::Matrix3d R = rodrigues_to_matrix(r);
  CHECK((R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::abs(R.determinant() - 1) < 1e-12);
  CHECK((R - exp_skew(r)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rodrigues round trip over random rotations") {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    Eigen::Vector3d axis(standard_normal(rng), standard_normal(rng), standard_normal(rng));
    axis.normalize();
    const Eigen::Vector3d r = axis * uniform(rng, 0.0, 3.1);
    const Eigen::Matrix3d R = rodrigues_to_matrix(r);
    CHECK((R - exp_skew(r)).cwiseAbs().maxCoeff() < 1e-11);
    CHECK((matrix_to_rodrigues(R) - r).norm() < 1e-9);
  }
  const Eigen::Vector3d tiny(1e-14, 0, 0);
  CHECK((rodrigues_to_matrix(tiny) - exp_skew(tiny)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("project examples") {
  const Camera cam = simple_camera();
  const Eigen::Vector2d a = project(Eigen::Vector3d(0, 0, 10), cam);
  CHECK(a.x() == 160);
  CHECK(a.y() == 95);
  const Eigen::Vector2d b = project(Eigen::Vector3d(1, 0, 10), cam);
  CHECK(std::abs(b.x() - (100.0 * 1 / 10 + 160)) < 1e-12);
  CHECK(b.y() == 95);

  CHECK_THROWS_AS(project(Eigen::Vector3d(0, 0, -1), cam), UnprojectableError);
  CHECK_THROWS_AS(project(Eigen::Vector3d(1, 1, 0), cam), UnprojectableError);
  CHECK_FALSE(try_project(Eigen::Vector3d(0, 0, -1), cam).has_value());
  try {
    project(Eigen::Vector3d(0, 0, -1), cam);
  } catch (const Error& e) {
    CHECK(e.error_class() == ErrorClass::numeric);
  }
}

TEST_CASE("undistort_point examples") {
  Camera cam = simple_camera();
  const Eigen::Vector2d p(123.4, 56.7);
  CHECK(undistort_point(p, cam) == p);

  cam.dist[0] = -0.1;
  const Eigen::Vector2d pp(cam.cx, cam.cy);
  CHECK((undistort_point(pp, cam) - pp).norm() == 0);

  const Eigen::Vector2d off(250, 20);
  const Eigen::Vector2d u = undistort_point(off, cam);
  const Eigen::Vector2d n((u.x() - cam.cx) / cam.fx, (u.y() - cam.cy) / cam.fy);
  const Eigen::Vector2d redistorted = distort_normalized(n, cam.dist);
  const Eigen::Vector2d back(cam.fx * redistorted.x() + cam.cx, cam.fy * redistorted.y() + cam.cy);
  CHECK((back - off).norm() < 1e-6);
  CHECK((u - off).norm() > 1);
}

TEST_CASE("undistortion reports non-convergence with the iteration count") {
  Eigen::Matrix<double, 5, 1> d;
  d << 5.0, 5.0, 0, 0, 5.0;
  try {
    undistort_normalized(Eigen::Vector2d(3, 3), d);
    FAIL("expected non-convergence");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("50 iterations") != std::string::npos);
  }
}

// Distortion is injective along the ray to p when the radial factor times r
// keeps increasing; only those cases have a unique inverse to recover.
static bool monotone_to(const Eigen::Vector2d& p, const Eigen::Matrix<double, 5, 1>& d) {
  const double rmax = p.norm();
  double prev = -1;
  for (int i = 0; i <= 400; ++i) {
    const Eigen::Vector2d q = p * (double(i) / 400);
    const double v = distort_normalized(q, d).dot(p / std::max(rmax, 1e-300));
    if (i > 0 && !(v > prev)) return false;
    prev = v;
  }
  // Tangential terms must not fold the map either: Jacobian determinant > 0.
  for (int i = 0; i <= 400; ++i) {
    const Eigen::Vector2d q = p * (double(i) / 400);
    const double h = 1e-6;
    const Eigen::Vector2d jx = (distort_normalized<double>(q + Eigen::Vector2d(h, 0), d) -
                                distort_normalized<double>(q - Eigen::Vector2d(h, 0), d)) / (2 * h);
    const Eigen::Vector2d jy = (distort_normalized<double>(q + Eigen::Vector2d(0, h), d) -
                                distort_normalized<double>(q - Eigen::Vector2d(0, h), d)) / (2 * h);
    if (jx.x() * jy.y() - jx.y() * jy.x() <= 0.2) return false;
  }
  return true;
}

TEST_CASE("undistortion round trip property") {
  // |k| <= 0.3, points within 1.5x the image half-diagonal.
  Camera cam;
  cam.image_size = {2688, 1520};
  cam.fx = cam.fy = 2000;
  cam.cx = 1344;
  cam.cy = 760;
  const double radius = 1.5 * std::hypot(1344.0, 760.0);
  Rng rng(5);
  int checked = 0;
  for (int i = 0; i < 2000; ++i) {
    for (int j = 0; j < 5; ++j) cam.dist[j] = uniform(rng, -0.3, 0.3);
    cam.dist[2] *= 0.1;  // tangential terms are small in practice
    cam.dist[3] *= 0.1;
    const double ang = uniform(rng, 0, 2 * std::numbers::pi), rad = radius * std::sqrt(uniform01(rng));
    const Eigen::Vector2d px(cam.cx + rad * std::cos(ang), cam.cy + rad * std::sin(ang));
    const Eigen::Vector2d n((px.x() - cam.cx) / cam.fx, (px.y() - cam.cy) / cam.fy);
    if (!monotone_to(n, cam.dist)) continue;
    const Eigen::Vector2d dn = distort_normalized(n, cam.dist);
    const Eigen::Vector2d distorted(cam.fx * dn.x() + cam.cx, cam.fy * dn.y() + cam.cy);
    Eigen::Vector2d recovered;
    try {
      recovered = undistort_point(distorted, cam);
    } catch (const NumericError&) {
      continue;  // counted below
    }
    CHECK((recovered - px).norm() < 1e-6);
    ++checked;
  }
  INFO("converged cases: " << checked);
  CHECK(checked > 1000);
}

TEST_CASE("projection_matrix examples") {
  Camera unit;
  unit.image_size = {10, 10};
  Eigen::Matrix<double, 3, 4> expected = Eigen::Matrix<double, 3, 4>::Zero();
  expected.leftCols<3>().setIdentity();
  CHECK(projection_matrix(unit) == expected);

  Camera cam = simple_camera();
  cam.rotation = Eigen::Vector3d(0.1, -0.3, 0.2);
  cam.translation = Eigen::Vector3d(0.5, 0.2, 4.0);
  const auto P = projection_matrix(cam);
  Rng rng(3);
  int n = 0;
  while (n < 100) {
    const Eigen::Vector3d p(uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -2, 2));
    const auto proj = try_project(p, cam);
    if (!proj) continue;
    const Eigen::Vector3d h = P * p.homogeneous();
    CHECK((h.hnormalized() - *proj).norm() <= 1e-9);
    ++n;
  }

  Camera moved = simple_camera();
  moved.translation = Eigen::Vector3d(0, 0, -5);
  const Eigen::Vector3d h = projection_matrix(moved) * Eigen::Vector4d(0, 0, 0, 1);
  CHECK((h.hnormalized() - Eigen::Vector2d(160, 95)).norm() < 1e-12);
}

TEST_CASE("camera and rig validation") {
  Camera c = simple_camera();
  CHECK_NOTHROW(validate(c));
  c.fx = 0;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = simple_camera();
  c.image_size = {0, 10};
  CHECK_THROWS_AS(validate(c), ConfigError);

  Rig rig;
  rig.cameras = {simple_camera()};
  CHECK_THROWS_AS(validate(rig), ConfigError);
  rig.cameras.push_back(simple_camera());
  CHECK_THROWS_AS(validate(rig), ConfigError);  // duplicate names
  rig.cameras[1].name = "d";
  CHECK_NOTHROW(validate(rig));
}

TEST_CASE("calibration JSON round trip and strictness") {
  Rig rig;
  rig.cameras = {simple_camera(), simple_camera()};
  rig.cameras[1].name = "other";
  rig.cameras[1].rotation = Eigen::Vector3d(0.1, 0.2, 0.3);
  rig.cameras[1].dist << -0.1, 0.01, 0.001, -0.002, 0.0;
  const Rig back = rig_from_json(rig_to_json(rig));
  REQUIRE(back.cameras.size() == 2);
  CHECK(back.cameras[1].rotation == rig.cameras[1].rotation);
  CHECK(back.cameras[1].dist == rig.cameras[1].dist);
  CHECK(back.cameras[1].image_size == rig.cameras[1].image_size);

  auto doc = rig_to_json(rig);
  doc["cameras"][0]["skew"] = 0.0;
  CHECK_THROWS_AS(rig_from_json(doc), ParseError);
  doc = rig_to_json(rig);
  doc["cameras"][0].erase("fx");
  CHECK_THROWS_AS(rig_from_json(doc), ParseError);

  try {
    load_rig("/nonexistent/calibration.json");
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.error_class() == ErrorClass::config);
  }
}
