#pragma once

// Pinhole camera with the 5-coefficient radial-tangential distortion model
// (k1, k2, p1, p2, k3). Everything here is templated on the scalar type and
// free of state; Camera / Rig are the double-precision instantiations used by
// the pipeline.

#include <Eigen/Geometry>

#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "poselift/error.hpp"

namespace poselift {

template <typename Scalar> using Vector2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar> using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar> using Vector5 = Eigen::Matrix<Scalar, 5, 1>;
template <typename Scalar> using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar> using Matrix34 = Eigen::Matrix<Scalar, 3, 4>;

struct ImageSize {
  int width = 0;
  int height = 0;
  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

template <typename Scalar>
struct CameraModel {
  std::string name;
  ImageSize image_size;
  Scalar fx = 1, fy = 1, cx = 0, cy = 0;
  Vector5<Scalar> dist = Vector5<Scalar>::Zero();
  Vector3<Scalar> rotation = Vector3<Scalar>::Zero();  // Rodrigues, radians * axis
  Vector3<Scalar> translation = Vector3<Scalar>::Zero();
};

using Camera = CameraModel<double>;

struct Rig {
  std::vector<Camera> cameras;
};

constexpr int kUndistortMaxIterations = 50;
constexpr double kUndistortTolerance = 1e-10;

template <typename Scalar>
Matrix3<Scalar> rodrigues_to_matrix(const Vector3<Scalar>& r) {
  using std::sqrt;
  const Scalar theta = r.norm();
  if (theta < Scalar(1e-12)) {
    // First-order expansion I + [r]x, exact at zero.
    Matrix3<Scalar> R;
    R << Scalar(1), -r.z(), r.y(),
         r.z(), Scalar(1), -r.x(),
         -r.y(), r.x(), Scalar(1);
    return R;
  }
  return Eigen::AngleAxis<Scalar>(theta, r / theta).toRotationMatrix();
}

template <typename Scalar>
Vector3<Scalar> matrix_to_rodrigues(const Matrix3<Scalar>& R) {
  const Eigen::AngleAxis<Scalar> aa(R);
  return aa.axis() * aa.angle();
}

/// Applies the distortion polynomial to normalized image coordinates.
template <typename Scalar>
Vector2<Scalar> distort_normalized(const Vector2<Scalar>& xy, const Vector5<Scalar>& d) {
  const Scalar x = xy.x(), y = xy.y();
  const Scalar r2 = x * x + y * y;
  const Scalar radial = Scalar(1) + r2 * (d[0] + r2 * (d[1] + r2 * d[4]));
  return {x * radial + Scalar(2) * d[2] * x * y + d[3] * (r2 + Scalar(2) * x * x),
          y * radial + d[2] * (r2 + Scalar(2) * y * y) + Scalar(2) * d[3] * x * y};
}

/// Inverts distort_normalized by fixed-point iteration. Throws NumericError
/// when the residual is still above tolerance after the iteration cap.
template <typename Scalar>
Vector2<Scalar> undistort_normalized(const Vector2<Scalar>& distorted, const Vector5<Scalar>& d,
                                     Scalar tolerance = Scalar(kUndistortTolerance),
                                     int max_iterations = kUndistortMaxIterations) {
  if (d.isZero()) return distorted;
  Vector2<Scalar> xy = distorted;
  for (int it = 0; it < max_iterations; ++it) {
    const Scalar x = xy.x(), y = xy.y();
    const Scalar r2 = x * x + y * y;
    const Scalar radial = Scalar(1) + r2 * (d[0] + r2 * (d[1] + r2 * d[4]));
    const Scalar dx = Scalar(2) * d[2] * x * y + d[3] * (r2 + Scalar(2) * x * x);
    const Scalar dy = d[2] * (r2 + Scalar(2) * y * y) + Scalar(2) * d[3] * x * y;
    xy = Vector2<Scalar>((distorted.x() - dx) / radial, (distorted.y() - dy) / radial);
    if ((distort_normalized(xy, d) - distorted).norm() <= tolerance) return xy;
  }
  throw NumericError("undistortion did not converge after " + std::to_string(max_iterations) +
                     " iterations");
}

/// Same as try_project(p, cam) with the camera rotation matrix supplied by the
/// caller.
template <typename Scalar>
std::optional<Vector2<Scalar>> try_project(const Vector3<Scalar>& p, const CameraModel<Scalar>& cam,
                                           const Matrix3<Scalar>& R) {
  const Vector3<Scalar> pc = R * p + cam.translation;
  if (!(pc.z() > Scalar(1e-12))) return std::nullopt;
  const Vector2<Scalar> xy = distort_normalized(Vector2<Scalar>(pc.x() / pc.z(), pc.y() / pc.z()), cam.dist);
  return Vector2<Scalar>(cam.fx * xy.x() + cam.cx, cam.fy * xy.y() + cam.cy);
}

/// Projects a world point, or returns nullopt when it is not strictly in front
/// of the camera.
template <typename Scalar>
std::optional<Vector2<Scalar>> try_project(const Vector3<Scalar>& p, const CameraModel<Scalar>& cam) {
  return try_project(p, cam, rodrigues_to_matrix(cam.rotation));
}

template <typename Scalar>
Vector2<Scalar> project(const Vector3<Scalar>& p, const CameraModel<Scalar>& cam) {
  if (auto px = try_project(p, cam)) return *px;
  throw UnprojectableError("point is behind camera '" + cam.name + "'");
}

/// Removes lens distortion from a pixel, returning the ideal pinhole pixel
/// under the same intrinsics.
template <typename Scalar>
Vector2<Scalar> undistort_point(const Vector2<Scalar>& px, const CameraModel<Scalar>& cam) {
  const Vector2<Scalar> distorted((px.x() - cam.cx) / cam.fx, (px.y() - cam.cy) / cam.fy);
  const Vector2<Scalar> xy = undistort_normalized(distorted, cam.dist);
  return {cam.fx * xy.x() + cam.cx, cam.fy * xy.y() + cam.cy};
}

template <typename Scalar>
Matrix3<Scalar> intrinsic_matrix(const CameraModel<Scalar>& cam) {
  Matrix3<Scalar> K;
  K << cam.fx, Scalar(0), cam.cx,
       Scalar(0), cam.fy, cam.cy,
       Scalar(0), Scalar(0), Scalar(1);
  return K;
}

/// K [R | t]; valid for undistorted pixels.
template <typename Scalar>
Matrix34<Scalar> projection_matrix(const CameraModel<Scalar>& cam) {
  Matrix34<Scalar> Rt;
  Rt.template leftCols<3>() = rodrigues_to_matrix(cam.rotation);
  Rt.col(3) = cam.translation;
  return intrinsic_matrix(cam) * Rt;
}

/// World position of the camera centre, -R^T t.
template <typename Scalar>
Vector3<Scalar> camera_center(const CameraModel<Scalar>& cam) {
  return -rodrigues_to_matrix(cam.rotation).transpose() * cam.translation;
}

template <typename Scalar>
bool in_image(const Vector2<Scalar>& px, const CameraModel<Scalar>& cam) {
  return px.x() >= Scalar(0) && px.y() >= Scalar(0) && px.x() < Scalar(cam.image_size.width) &&
         px.y() < Scalar(cam.image_size.height);
}

/// Throws ConfigError when a camera violates its invariants.
template <typename Scalar>
void validate(const CameraModel<Scalar>& cam) {
  const std::string who = "camera '" + cam.name + "': ";
  if (cam.name.empty()) throw ConfigError("camera with empty name");
  if (!(cam.fx > Scalar(0)) || !(cam.fy > Scalar(0))) throw ConfigError(who + "focal lengths must be positive");
  if (cam.image_size.width <= 0 || cam.image_size.height <= 0)
    throw ConfigError(who + "image size must be positive");
  if (!cam.dist.allFinite() || !cam.rotation.allFinite() || !cam.translation.allFinite() ||
      !std::isfinite(static_cast<double>(cam.cx)) || !std::isfinite(static_cast<double>(cam.cy)))
    throw ConfigError(who + "non-finite parameter");
  const Matrix3<Scalar> R = rodrigues_to_matrix(cam.rotation);
  using std::abs;
  if (!(R.transpose() * R).isApprox(Matrix3<Scalar>::Identity(), Scalar(1e-9)) ||
      abs(R.determinant() - Scalar(1)) > Scalar(1e-9))
    throw ConfigError(who + "rotation is not orthonormal");
}

inline void validate(const Rig& rig) {
  if (rig.cameras.size() < 2) throw ConfigError("rig needs at least 2 cameras");
  std::set<std::string> names;
  for (const auto& cam : rig.cameras) {
    validate(cam);
    if (!names.insert(cam.name).second) throw ConfigError("duplicate camera name '" + cam.name + "'");
  }
}

}  // namespace poselift
