#pragma once

// Linear multi-view triangulation and reprojection error.

#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "poselift/geometry.hpp"

namespace poselift {

constexpr int kMaxCameras = 16;
constexpr double kDegenerateGap = 1e-12;

/// Homogeneous least-squares triangulation from undistorted pixels and the
/// matching 3x4 projection matrices. Each camera contributes the rows
/// u*P3 - P1 and v*P3 - P2 (scaled to unit norm); the solution is the right
/// singular vector of the smallest singular value. Throws
/// DegenerateGeometryError when the null space is not one-dimensional.
template <typename Scalar>
Vector3<Scalar> triangulate_dlt(std::span<const Vector2<Scalar>> pixels,
                                std::span<const Matrix34<Scalar>> projections) {
  using Design = Eigen::Matrix<Scalar, Eigen::Dynamic, 4, 0, 2 * kMaxCameras, 4>;
  const auto n = static_cast<Eigen::Index>(pixels.size());
  if (n < 2 || projections.size() != pixels.size())
    throw DegenerateGeometryError("triangulation needs at least two matching views");
  if (n > kMaxCameras) throw DegenerateGeometryError("too many views");

  Design A(2 * n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& P = projections[static_cast<std::size_t>(i)];
    const auto& uv = pixels[static_cast<std::size_t>(i)];
    A.row(2 * i) = uv.x() * P.row(2) - P.row(0);
    A.row(2 * i + 1) = uv.y() * P.row(2) - P.row(1);
  }
  for (Eigen::Index r = 0; r < A.rows(); ++r) {
    const Scalar norm = A.row(r).norm();
    if (norm > Scalar(0)) A.row(r) /= norm;
  }

  Eigen::JacobiSVD<Design> svd(A, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  if (s.size() < 4 || !(s[0] > Scalar(0)) || (s[2] - s[3]) / s[0] < Scalar(kDegenerateGap))
    throw DegenerateGeometryError("rank-deficient triangulation system (near-parallel rays)");
  const Eigen::Matrix<Scalar, 4, 1> X = svd.matrixV().col(3);
  using std::abs;
  if (abs(X[3]) < Scalar(1e-14) * X.template head<3>().norm())
    throw DegenerateGeometryError("triangulated point at infinity");
  return X.template head<3>() / X[3];
}

template <typename Scalar>
Vector3<Scalar> triangulate_dlt(std::span<const Vector2<Scalar>> pixels,
                                std::span<const CameraModel<Scalar>> cameras) {
  std::vector<Matrix34<Scalar>> P;
  P.reserve(cameras.size());
  for (const auto& cam : cameras) P.push_back(projection_matrix(cam));
  return triangulate_dlt<Scalar>(pixels, std::span<const Matrix34<Scalar>>(P));
}

template <typename Scalar>
struct ReprojectionError {
  std::vector<Scalar> per_camera;  // +inf where the point is unprojectable
  Scalar mean = 0;
};

/// Pixel distance between project(p, cam) and each observation, plus their
/// mean. An unprojectable camera contributes +inf (so the mean is +inf too).
template <typename Scalar>
ReprojectionError<Scalar> reprojection_error(const Vector3<Scalar>& p, std::span<const Vector2<Scalar>> observed,
                                             std::span<const CameraModel<Scalar>> cameras) {
  ReprojectionError<Scalar> out;
  out.per_camera.reserve(observed.size());
  Scalar sum = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const auto px = try_project(p, cameras[i]);
    const Scalar err = px ? (*px - observed[i]).norm() : std::numeric_limits<Scalar>::infinity();
    out.per_camera.push_back(err);
    sum += err;
  }
  out.mean = observed.empty() ? Scalar(0) : sum / Scalar(observed.size());
  return out;
}

}  // namespace poselift
