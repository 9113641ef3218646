#pragma once

#include <optional>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace hiloc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat26 = Eigen::Matrix<double, 2, 6>;
using Mat36 = Eigen::Matrix<double, 3, 6>;

/// Tangent-space perturbation ordered (translation, rotation).
using Twist = Vec6;

/// Points closer than this along the optical axis are not projected.
inline constexpr double kMinDepth = 0.01;

/// Rigid transform x -> R x + t. Poses of cameras are stored
/// world-to-camera unless a name says otherwise.
class Pose {
 public:
  Pose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}

  /// Throws kInvalidArgument if the rotation is not orthonormal with
  /// determinant +1 (tolerance 1e-9) or anything is non-finite.
  Pose(const Mat3& rotation, const Vec3& translation);

  static Pose Identity() { return Pose(); }
  static Pose FromQuaternion(const Eigen::Quaterniond& q, const Vec3& t);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Eigen::Quaterniond quaternion() const;

  Pose inverse() const;
  Pose operator*(const Pose& other) const;
  Vec3 operator*(const Vec3& point) const {
    return rotation_ * point + translation_;
  }

  /// Camera center for a world-to-camera pose.
  Vec3 center() const { return -rotation_.transpose() * translation_; }

 private:
  struct Unchecked {};
  Pose(const Mat3& r, const Vec3& t, Unchecked)
      : rotation_(r), translation_(t) {}

  Mat3 rotation_;
  Vec3 translation_;
  // The quaternion a pose was read from, so that writing it back is
  // bit-exact. Dropped by every operation producing a new pose.
  std::optional<Eigen::Quaterniond> source_quaternion_;
};

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  /// Throws kInvalidArgument when the invariants do not hold.
  void Validate() const;

  bool Contains(const Vec2& pixel) const {
    return pixel.x() >= 0.0 && pixel.y() >= 0.0 && pixel.x() < width &&
           pixel.y() < height;
  }
};

Mat3 Skew(const Vec3& v);

Mat3 So3Exp(const Vec3& phi);
Vec3 So3Log(const Mat3& rotation);

Pose Se3Exp(const Twist& xi);
/// Throws kIllConditioned when the rotation angle is within 1e-6 of pi.
Twist Se3Log(const Pose& pose);

/// Pinhole projection of a camera-frame point. Throws kBehindCamera when
/// z <= kMinDepth. No bounds clipping.
Vec2 ProjectCameraPoint(const Vec3& camera_point, const CameraIntrinsics& k);
Vec2 Project(const Pose& pose, const CameraIntrinsics& k, const Vec3& point);

/// Camera-frame point at the given depth along the ray through pixel.
Vec3 Backproject(const Vec2& pixel, double depth, const CameraIntrinsics& k);

/// d(pi)/d(X') for a camera-frame point, without the residual sign.
Mat23 ProjectionDerivative(const Vec3& camera_point, const CameraIntrinsics& k);

// Jacobians of the residual e = z - pi(...) (note the leading minus).
// All pose perturbations are left multiplications T <- Exp(delta) T.

/// de/d(delta T) for e = z - pi(T X), evaluated at X' = T X.
Mat26 JacobianWrtPose(const Vec3& camera_point, const CameraIntrinsics& k);

/// de/dX for e = z - pi(T X); camera_point = T X.
Mat23 JacobianWrtPoint(const Vec3& camera_point, const Pose& pose,
                       const CameraIntrinsics& k);

/// Prior-map residual e = z - pi(T_j * T_map * X_prior), with T_j the
/// world-to-camera keyframe pose in the local (drifting) frame and T_map
/// the prior-to-local accumulated error. de/d(delta T_map).
Mat26 JacobianWrtTmap(const Vec3& prior_point, const Pose& keyframe_pose,
                      const Pose& t_map, const CameraIntrinsics& k);

/// Same residual, de/d(delta T_j).
Mat26 JacobianWrtPosePrior(const Vec3& prior_point, const Pose& keyframe_pose,
                           const Pose& t_map, const CameraIntrinsics& k);

}  // namespace hiloc
