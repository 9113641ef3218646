#include "hiloc/geometry.h"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hiloc/error.h"
#include "test_util.h"

namespace hiloc {
namespace {

using testing::NumericJacobian;
using testing::PointInView;
using testing::RandomPose;
using testing::RandomTwist;
using testing::RelErr;
using testing::TestCamera;

constexpr double kPi = std::numbers::pi;

TEST(PoseTest, RejectsNonOrthonormalRotation) {
  Mat3 r = Mat3::Identity();
  r(0, 0) = 1.0 + 1e-6;
  EXPECT_THROW(Pose(r, Vec3::Zero()), Error);
  EXPECT_THROW(Pose(-Mat3::Identity(), Vec3::Zero()), Error);
  EXPECT_THROW(Pose(Mat3::Identity(), Vec3(NAN, 0, 0)), Error);
}

TEST(PoseTest, ComposeWithInverseIsIdentity) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const Pose p = RandomPose(rng, 10.0, 3.0);
    const Pose id = p * p.inverse();
    EXPECT_LT((id.rotation() - Mat3::Identity()).norm(), 1e-9);
    EXPECT_LT(id.translation().norm(), 1e-9);
  }
}

TEST(PoseTest, CompositionIsAssociative) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const Pose a = RandomPose(rng), b = RandomPose(rng), c = RandomPose(rng);
    const Pose l = (a * b) * c, r = a * (b * c);
    EXPECT_LT((l.rotation() - r.rotation()).norm(), 1e-12);
    EXPECT_LT((l.translation() - r.translation()).norm(), 1e-12);
  }
}

TEST(Se3Test, ZeroTwistIsIdentity) {
  const Pose p = Se3Exp(Twist::Zero());
  EXPECT_EQ(p.rotation(), Mat3::Identity());
  EXPECT_EQ(p.translation(), Vec3::Zero());
}

TEST(Se3Test, PureTranslation) {
  const Pose p = Se3Exp((Twist() << 1, 2, 3, 0, 0, 0).finished());
  EXPECT_EQ(p.rotation(), Mat3::Identity());
  EXPECT_LT((p.translation() - Vec3(1, 2, 3)).norm(), 1e-15);
  const Twist xi = Se3Log(p);
  EXPECT_EQ(xi.tail<3>(), Vec3::Zero());
}

TEST(Se3Test, QuarterTurnAboutZ) {
  const Pose p = Se3Exp((Twist() << 0, 0, 0, 0, 0, kPi / 2).finished());
  EXPECT_LT((p * Vec3(1, 0, 0) - Vec3(0, 1, 0)).norm(), 1e-15);
}

TEST(Se3Test, LogOfIdentityIsZero) { EXPECT_EQ(Se3Log(Pose::Identity()), Twist::Zero()); }

TEST(Se3Test, LogExpRoundTrip) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> angle(0.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    Twist xi = RandomTwist(rng, 5.0, 1.0);
    xi.tail<3>() = xi.tail<3>().normalized() * angle(rng);
    EXPECT_LT((Se3Log(Se3Exp(xi)) - xi).norm(), 1e-9) << xi.transpose();
  }
}

TEST(Se3Test, ExpLogRoundTripOnPoses) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 200; ++i) {
    const Pose p = RandomPose(rng, 5.0, 1.5);
    const Pose q = Se3Exp(Se3Log(p));
    EXPECT_LT((p.rotation() - q.rotation()).norm(), 1e-9);
    EXPECT_LT((p.translation() - q.translation()).norm(), 1e-9);
  }
}

TEST(Se3Test, SmallAngleBranchIsContinuous) {
  const Twist a = (Twist() << 0.3, -0.2, 0.1, 1e-9, -2e-9, 5e-10).finished();
  const Twist b = (Twist() << 0.3, -0.2, 0.1, 2e-8, -4e-8, 1e-8).finished();
  EXPECT_LT((Se3Log(Se3Exp(a)) - a).norm(), 1e-12);
  EXPECT_LT((Se3Log(Se3Exp(b)) - b).norm(), 1e-12);
}

TEST(Se3Test, LogNearPiIsIllConditioned) {
  const Pose p = Se3Exp((Twist() << 0, 0, 0, 0, 0, kPi - 1e-8).finished());
  try {
    Se3Log(p);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIllConditioned);
  }
}

TEST(Se3Test, NonFiniteTwistRejected) {
  EXPECT_THROW(Se3Exp((Twist() << 0, 0, 0, NAN, 0, 0).finished()), Error);
}

TEST(ProjectTest, OpticalAxisMapsToPrincipalPoint) {
  const CameraIntrinsics k = TestCamera();
  for (double z : {0.5, 3.0, 100.0}) {
    const Vec2 px = Project(Pose::Identity(), k, Vec3(0, 0, z));
    EXPECT_DOUBLE_EQ(px.x(), k.cx);
    EXPECT_DOUBLE_EQ(px.y(), k.cy);
  }
}

TEST(ProjectTest, DirectSubstitution) {
  const CameraIntrinsics k{100, 100, 64, 64, 128, 128};
  const Vec2 px = Project(Pose::Identity(), k, Vec3(0.5, -0.25, 2.0));
  EXPECT_DOUBLE_EQ(px.x(), 89.0);
  EXPECT_DOUBLE_EQ(px.y(), 51.5);
}

TEST(ProjectTest, BehindCamera) {
  try {
    Project(Pose::Identity(), TestCamera(), Vec3(0, 0, -1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBehindCamera);
  }
  EXPECT_THROW(Project(Pose::Identity(), TestCamera(), Vec3(0, 0, kMinDepth)), Error);
}

TEST(ProjectTest, BackprojectRoundTrip) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const CameraIntrinsics k = TestCamera();
  for (int i = 0; i < 1000; ++i) {
    const Vec2 px(640 * u(rng), 480 * u(rng));
    const double d = 0.02 + 50 * u(rng);
    EXPECT_LT((ProjectCameraPoint(Backproject(px, d, k), k) - px).norm(), 1e-9);
  }
}

TEST(IntrinsicsTest, Validation) {
  EXPECT_NO_THROW(TestCamera().Validate());
  EXPECT_THROW((CameraIntrinsics{0, 1, 1, 1, 4, 4}.Validate()), Error);
  EXPECT_THROW((CameraIntrinsics{1, 1, 5, 1, 4, 4}.Validate()), Error);
  EXPECT_THROW((CameraIntrinsics{1, 1, 1, 0, 4, 4}.Validate()), Error);
}

TEST(SkewTest, Identities) {
  EXPECT_EQ(Skew(Vec3::Zero()), Mat3::Zero());
  EXPECT_EQ(Skew(Vec3(1, 0, 0)) * Vec3(0, 1, 0), Vec3(0, 0, 1));
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n;
  for (int i = 0; i < 100; ++i) {
    const Vec3 v(n(rng), n(rng), n(rng)), w(n(rng), n(rng), n(rng));
    EXPECT_EQ(Skew(v).transpose(), -Skew(v));
    EXPECT_LT((Skew(v) * w - v.cross(w)).norm(), 1e-14);
  }
}

// Finite-difference oracles for the four reprojection Jacobians.

TEST(JacobianTest, PoseMatchesFiniteDifferences) {
  std::mt19937_64 rng(10);
  const CameraIntrinsics k = TestCamera();
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const Pose tj = RandomPose(rng);
    const Vec3 x = PointInView(rng, tj, k);
    const Vec2 z = Project(tj, k, x);
    const auto fd = NumericJacobian<2, 6>(
        [&](const Vec6& d) -> Vec2 { return z - Project(Se3Exp(d) * tj, k, x); });
    worst = std::max(worst, RelErr(JacobianWrtPose(tj * x, k), fd));
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(JacobianTest, PointMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  const CameraIntrinsics k = TestCamera();
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const Pose tj = RandomPose(rng);
    const Vec3 x = PointInView(rng, tj, k);
    const Vec2 z = Project(tj, k, x);
    const auto fd = NumericJacobian<2, 3>(
        [&](const Vec3& d) -> Vec2 { return z - Project(tj, k, Vec3(x + d)); });
    worst = std::max(worst, RelErr(JacobianWrtPoint(tj * x, tj, k), fd));
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(JacobianTest, TmapMatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  const CameraIntrinsics k = TestCamera();
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const Pose tj = RandomPose(rng);
    const Pose t_map = RandomPose(rng, 1.0, 0.3);
    const Vec3 prior = t_map.inverse() * PointInView(rng, tj, k);
    const Vec2 z = Project(tj * t_map, k, prior);
    const auto fd = NumericJacobian<2, 6>([&](const Vec6& d) -> Vec2 {
      return z - Project(tj * (Se3Exp(d) * t_map), k, prior);
    });
    worst = std::max(worst, RelErr(JacobianWrtTmap(prior, tj, t_map, k), fd));
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(JacobianTest, PriorPoseMatchesFiniteDifferences) {
  std::mt19937_64 rng(13);
  const CameraIntrinsics k = TestCamera();
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const Pose tj = RandomPose(rng);
    const Pose t_map = RandomPose(rng, 1.0, 0.3);
    const Vec3 prior = t_map.inverse() * PointInView(rng, tj, k);
    const Vec2 z = Project(tj * t_map, k, prior);
    const auto fd = NumericJacobian<2, 6>([&](const Vec6& d) -> Vec2 {
      return z - Project((Se3Exp(d) * tj) * t_map, k, prior);
    });
    worst = std::max(worst, RelErr(JacobianWrtPosePrior(prior, tj, t_map, k), fd));
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(JacobianTest, OpticalAxisTranslationBlock) {
  const CameraIntrinsics k = TestCamera();
  const Mat26 j = JacobianWrtPose(Vec3(0, 0, 4), k);
  Eigen::Matrix<double, 2, 3> expected;
  expected << -k.fx / 4, 0, 0, 0, -k.fy / 4, 0;
  EXPECT_LT((j.leftCols<3>() - expected).norm(), 1e-15);
}

TEST(JacobianTest, DoublingDepthHalvesFocalTerm) {
  const CameraIntrinsics k = TestCamera();
  const Mat26 a = JacobianWrtPose(Vec3(0.3, 0.2, 2), k);
  const Mat26 b = JacobianWrtPose(Vec3(0.6, 0.4, 4), k);
  EXPECT_DOUBLE_EQ(a(0, 0), 2.0 * b(0, 0));
  EXPECT_DOUBLE_EQ(a(1, 1), 2.0 * b(1, 1));
}

TEST(JacobianTest, PointJacobianWithIdentityRotationIsProjectionDerivative) {
  const CameraIntrinsics k = TestCamera();
  const Vec3 pc(0.4, -0.3, 5.0);
  const Pose t(Mat3::Identity(), Vec3(1, 2, 3));
  EXPECT_LT((JacobianWrtPoint(pc, t, k) + ProjectionDerivative(pc, k)).norm(), 1e-15);
}

TEST(JacobianTest, ResidualInvariantUnderJointRotation) {
  std::mt19937_64 rng(14);
  const CameraIntrinsics k = TestCamera();
  for (int i = 0; i < 100; ++i) {
    const Pose tj = RandomPose(rng);
    const Vec3 x = PointInView(rng, tj, k);
    const Pose r(So3Exp(RandomTwist(rng, 0, 1).tail<3>()), Vec3::Zero());
    // Camera rotated by R, point rotated by R^-1: T R^-1 (R x) = T x.
    const Vec2 a = Project(tj, k, x);
    const Vec2 b = Project(tj * r.inverse(), k, r * x);
    EXPECT_LT((a - b).norm(), 1e-9);
  }
}

TEST(JacobianTest, DegeneratePointRejected) {
  try {
    JacobianWrtPose(Vec3(0, 0, 0.001), TestCamera());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegeneratePoint);
  }
}

}  // namespace
}  // namespace hiloc
