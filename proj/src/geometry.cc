#include "hiloc/geometry.h"

#include <cmath>
#include <numbers>
#include <string>

#include "hiloc/error.h"

namespace hiloc {

const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kBehindCamera: return "behind-camera";
    case ErrorCode::kIllConditioned: return "ill-conditioned";
    case ErrorCode::kDegeneratePoint: return "degenerate-point";
    case ErrorCode::kUnderdetermined: return "underdetermined";
    case ErrorCode::kNoValidResiduals: return "no-valid-residuals";
    case ErrorCode::kUnreliableDisparity: return "unreliable-disparity";
    case ErrorCode::kInsufficientParallax: return "insufficient-parallax";
    case ErrorCode::kParse: return "parse-error";
    case ErrorCode::kIntegrity: return "integrity-error";
    case ErrorCode::kNoOverlap: return "no-overlap";
    case ErrorCode::kDegenerateConfiguration: return "degenerate-configuration";
    case ErrorCode::kInsufficientData: return "insufficient-data";
    case ErrorCode::kIo: return "io-error";
    case ErrorCode::kConfig: return "config-error";
  }
  return "unknown";
}

namespace {

constexpr double kSmallAngle = 1e-8;
constexpr double kSeriesAngle = 1e-3;

}  // namespace

Pose::Pose(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, "pose has non-finite entries");
  }
  const double ortho =
      (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho > 1e-9 || rotation.determinant() < 0.0) {
    throw Error(ErrorCode::kInvalidArgument,
                "rotation is not orthonormal (deviation " +
                    std::to_string(ortho) + ")");
  }
}

Pose Pose::FromQuaternion(const Eigen::Quaterniond& q, const Vec3& t) {
  if (!q.coeffs().allFinite() || q.norm() < 1e-12) {
    throw Error(ErrorCode::kInvalidArgument, "invalid quaternion");
  }
  Pose p(q.normalized().toRotationMatrix(), t);
  p.source_quaternion_ = q;
  return p;
}

Eigen::Quaterniond Pose::quaternion() const {
  if (source_quaternion_ && std::abs(source_quaternion_->norm() - 1.0) < 1e-12) {
    return *source_quaternion_;
  }
  Eigen::Quaterniond q(rotation_);
  q.normalize();
  return q;
}

Pose Pose::inverse() const {
  const Mat3 rt = rotation_.transpose();
  return Pose(rt, -rt * translation_, Unchecked{});
}

Pose Pose::operator*(const Pose& other) const {
  return Pose(rotation_ * other.rotation_,
              rotation_ * other.translation_ + translation_, Unchecked{});
}

void CameraIntrinsics::Validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "image size must be positive");
  }
  if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
    throw Error(ErrorCode::kInvalidArgument,
                "principal point outside the image");
  }
}

Mat3 Skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Mat3 So3Exp(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 w = Skew(phi);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + w + 0.5 * w * w;
  }
  return Eigen::AngleAxisd(theta, phi / theta).toRotationMatrix();
}

Vec3 So3Log(const Mat3& rotation) {
  Eigen::Quaterniond q(rotation);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  const Vec3 v = q.vec();
  const double s = v.norm();
  if (s < kSmallAngle) {
    // atan2(s, w) / s -> 1 / w as s -> 0
    return 2.0 * v / q.w();
  }
  const double theta = 2.0 * std::atan2(s, q.w());
  return theta / s * v;
}

Pose Se3Exp(const Twist& xi) {
  if (!xi.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, "twist has non-finite entries");
  }
  const Vec3 rho = xi.head<3>();
  const Vec3 phi = xi.tail<3>();
  const double theta = phi.norm();
  const Mat3 w = Skew(phi);
  const double t2 = theta * theta;
  // (1 - cos t) / t^2 in half-angle form avoids cancellation; the cubic
  // coefficient needs a series below 1e-3 rad.
  const double half_sinc = theta < kSmallAngle ? 0.5 : std::sin(0.5 * theta) / theta;
  const double a = 2.0 * half_sinc * half_sinc;
  const double b = theta < kSeriesAngle ? 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
                                        : (theta - std::sin(theta)) / (t2 * theta);
  const Mat3 v = Mat3::Identity() + a * w + b * w * w;
  Mat3 r = So3Exp(phi);
  // Re-orthonormalize so Pose's checked constructor never trips on
  // accumulated rounding for large angles.
  Eigen::Quaterniond q(r);
  q.normalize();
  return Pose(q.toRotationMatrix(), v * rho);
}

Twist Se3Log(const Pose& pose) {
  const Vec3 phi = So3Log(pose.rotation());
  const double theta = phi.norm();
  if (theta >= std::numbers::pi - 1e-6) {
    throw Error(ErrorCode::kIllConditioned,
                "rotation angle too close to pi for a stable logarithm");
  }
  const Mat3 w = Skew(phi);
  const double t2 = theta * theta;
  double coef;
  if (theta < kSeriesAngle) {
    coef = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
  } else {
    const double half = 0.5 * theta;
    coef = (1.0 - half * std::cos(half) / std::sin(half)) / t2;
  }
  const Mat3 v_inv = Mat3::Identity() - 0.5 * w + coef * w * w;
  Twist xi;
  xi.head<3>() = v_inv * pose.translation();
  xi.tail<3>() = phi;
  return xi;
}

Vec2 ProjectCameraPoint(const Vec3& camera_point, const CameraIntrinsics& k) {
  const double z = camera_point.z();
  if (!(z > kMinDepth)) {
    throw Error(ErrorCode::kBehindCamera, "point behind the near plane");
  }
  return {k.fx * camera_point.x() / z + k.cx, k.fy * camera_point.y() / z + k.cy};
}

Vec2 Project(const Pose& pose, const CameraIntrinsics& k, const Vec3& point) {
  return ProjectCameraPoint(pose * point, k);
}

Vec3 Backproject(const Vec2& pixel, double depth, const CameraIntrinsics& k) {
  return {(pixel.x() - k.cx) / k.fx * depth, (pixel.y() - k.cy) / k.fy * depth,
          depth};
}

Mat23 ProjectionDerivative(const Vec3& camera_point,
                           const CameraIntrinsics& k) {
  const double z = camera_point.z();
  if (!(z > kMinDepth)) {
    throw Error(ErrorCode::kDegeneratePoint, "point behind the near plane");
  }
  const double inv_z = 1.0 / z;
  const double inv_z2 = inv_z * inv_z;
  Mat23 d;
  d << k.fx * inv_z, 0.0, -k.fx * camera_point.x() * inv_z2,
       0.0, k.fy * inv_z, -k.fy * camera_point.y() * inv_z2;
  return d;
}

Mat26 JacobianWrtPose(const Vec3& camera_point, const CameraIntrinsics& k) {
  Mat36 dx;
  dx.leftCols<3>().setIdentity();
  dx.rightCols<3>() = -Skew(camera_point);
  return -ProjectionDerivative(camera_point, k) * dx;
}

Mat23 JacobianWrtPoint(const Vec3& camera_point, const Pose& pose,
                       const CameraIntrinsics& k) {
  return -ProjectionDerivative(camera_point, k) * pose.rotation();
}

Mat26 JacobianWrtTmap(const Vec3& prior_point, const Pose& keyframe_pose,
                      const Pose& t_map, const CameraIntrinsics& k) {
  // The skew block acts on the point in the local frame (T_map X), which
  // is where the left perturbation of T_map is applied.
  const Vec3 local_point = t_map * prior_point;
  const Vec3 camera_point = keyframe_pose * local_point;
  Mat36 dx;
  dx.leftCols<3>().setIdentity();
  dx.rightCols<3>() = -Skew(local_point);
  return -ProjectionDerivative(camera_point, k) * keyframe_pose.rotation() * dx;
}

Mat26 JacobianWrtPosePrior(const Vec3& prior_point, const Pose& keyframe_pose,
                           const Pose& t_map, const CameraIntrinsics& k) {
  return JacobianWrtPose(keyframe_pose * (t_map * prior_point), k);
}

}  // namespace hiloc
