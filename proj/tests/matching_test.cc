#include "hiloc/matching.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <limits>
#include <map>
#include <random>

#include "test_util.h"

namespace hiloc {
namespace {

using testing::ExpectErrorCode;
using testing::PointInView;
using testing::RandomPose;
using testing::RandomTwist;
using testing::RotationAngle;
using testing::TestCamera;

Descriptor RandomUnit(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> n;
  Descriptor d(dim);
  for (int i = 0; i < dim; ++i) d[i] = n(rng);
  return d.normalized();
}

struct Scene {
  VisualMap map{Channel::kLearned};
  std::vector<Keypoint> keypoints;
  Pose truth;
};

// A prior map observed by one keyframe at the true pose, and a query
// frame whose keypoints are noisy re-observations of most map points
// plus clutter.
Scene MakeScene(std::uint64_t seed, int n_points, double pixel_noise, double desc_noise,
                int clutter) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const CameraIntrinsics k = TestCamera();
  Scene s;
  s.truth = RandomPose(rng, 2.0, 0.5);
  Keyframe kf;
  kf.id = 0;
  kf.pose = s.truth;
  kf.intrinsics = k;
  std::vector<MapPoint> points;
  for (int i = 0; i < n_points; ++i) {
    const Vec3 x = PointInView(rng, s.truth, k, 3.0, 25.0);
    const Descriptor d = RandomUnit(rng, 32);
    Keypoint kp;
    kp.pixel = Project(s.truth, k, x);
    kp.descriptor = d;
    kf.keypoints.push_back(kp);
    MapPoint p;
    p.id = 10 + 2 * i;
    p.position = x;
    p.descriptor = d;
    p.mean_view_dir = (x - s.truth.center()).normalized();
    p.observations = {{0, i}};
    points.push_back(std::move(p));
    if (u(rng) < 0.85) {
      Keypoint q;
      q.pixel = kp.pixel + Vec2(pixel_noise * n(rng), pixel_noise * n(rng));
      if (k.Contains(q.pixel)) {
        Descriptor noisy = d;
        for (int j = 0; j < 32; ++j) noisy[j] += desc_noise * n(rng);
        q.descriptor = noisy.normalized();
        s.keypoints.push_back(q);
      }
    }
  }
  s.map.AddKeyframe(std::move(kf));
  for (MapPoint& p : points) s.map.AddPoint(std::move(p));
  for (int i = 0; i < clutter; ++i) {
    Keypoint q;
    q.pixel = Vec2(640 * u(rng), 480 * u(rng));
    q.descriptor = RandomUnit(rng, 32);
    s.keypoints.push_back(q);
  }
  std::shuffle(s.keypoints.begin(), s.keypoints.end(), rng);
  return s;
}

// Brute force over every keypoint for every candidate.
std::vector<MatchPair> OracleMatch(const std::vector<Keypoint>& kps, const CameraIntrinsics& k,
                                   const std::vector<const MapPoint*>& cands, const Pose& pose,
                                   double radius, const DescriptorMatchParams& dp) {
  std::map<int, MatchPair> best_for_kp;
  for (const MapPoint* p : cands) {
    const Vec3 pc = pose * p->position;
    if (pc.z() <= kMinDepth) continue;
    const Vec2 proj(k.fx * pc.x() / pc.z() + k.cx, k.fy * pc.y() / pc.z() + k.cy);
    double d1 = std::numeric_limits<double>::infinity(), d2 = d1;
    int idx = -1;
    for (size_t i = 0; i < kps.size(); ++i) {
      if ((kps[i].pixel - proj).norm() > radius) continue;
      const double d = (kps[i].descriptor - p->descriptor).norm();
      if (d < d1) {
        d2 = d1;
        d1 = d;
        idx = static_cast<int>(i);
      } else if (d < d2) {
        d2 = d;
      }
    }
    if (idx < 0 || d1 > dp.max_distance || d1 > dp.ratio * d2) continue;
    const MatchPair pair{p->id, idx, d1, kps[idx].pixel - proj};
    auto it = best_for_kp.find(idx);
    if (it == best_for_kp.end() || d1 < it->second.distance ||
        (d1 == it->second.distance && p->id < it->second.point_id)) {
      best_for_kp[idx] = pair;
    }
  }
  std::vector<MatchPair> out;
  for (const auto& [kp, pair] : best_for_kp) out.push_back(pair);
  std::sort(out.begin(), out.end(),
            [](const MatchPair& a, const MatchPair& b) { return a.point_id < b.point_id; });
  return out;
}

TEST(MatchCandidatesTest, MatchesBruteForceOracle) {
  const CameraIntrinsics k = TestCamera();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    // Heavy descriptor noise and a wide window make conflicts likely.
    const Scene s = MakeScene(seed, 150, 3.0, 0.15, 100);
    std::mt19937_64 rng(seed + 1000);
    const Pose guess = Se3Exp(RandomTwist(rng, 0.1, 0.01)) * s.truth;
    std::vector<const MapPoint*> cands;
    for (const auto& [id, p] : s.map.points()) cands.push_back(&p);
    const DescriptorMatchParams dp{0.7 + 0.003 * static_cast<double>(seed % 10), 0.9};
    const double radius = 8.0 + static_cast<double>(seed % 20);
    const MatchSet got = MatchCandidates(s.keypoints, k, cands, guess, radius, dp,
                                         Channel::kLearned);
    const auto want = OracleMatch(s.keypoints, k, cands, guess, radius, dp);
    ASSERT_EQ(got.size(), want.size()) << "seed " << seed;
    for (size_t i = 0; i < want.size(); ++i) {
      EXPECT_EQ(got.pairs[i].point_id, want[i].point_id);
      EXPECT_EQ(got.pairs[i].keypoint_index, want[i].keypoint_index);
      EXPECT_EQ(got.pairs[i].distance, want[i].distance);
      EXPECT_LT((got.pairs[i].residual - want[i].residual).norm(), 1e-9);
    }
  }
}

TEST(MatchCandidatesTest, EachKeypointClaimedOnce) {
  const Scene s = MakeScene(3, 300, 2.0, 0.2, 0);
  std::vector<const MapPoint*> cands;
  for (const auto& [id, p] : s.map.points()) cands.push_back(&p);
  const MatchSet m =
      MatchCandidates(s.keypoints, TestCamera(), cands, s.truth, 30.0, {}, Channel::kLearned);
  std::vector<int> used;
  for (const auto& p : m.pairs) used.push_back(p.keypoint_index);
  std::sort(used.begin(), used.end());
  EXPECT_EQ(std::adjacent_find(used.begin(), used.end()), used.end());
}

TEST(MatchCandidatesTest, EmptyInputsAndBadRadius) {
  const Scene s = MakeScene(4, 20, 0.0, 0.0, 0);
  std::vector<const MapPoint*> cands;
  for (const auto& [id, p] : s.map.points()) cands.push_back(&p);
  EXPECT_EQ(MatchCandidates({}, TestCamera(), cands, s.truth, 5.0, {}, Channel::kLearned).size(),
            0u);
  EXPECT_EQ(MatchCandidates(s.keypoints, TestCamera(), {}, s.truth, 5.0, {}, Channel::kLearned)
                .size(),
            0u);
  ExpectErrorCode(
      [&] { MatchCandidates(s.keypoints, TestCamera(), cands, s.truth, 0.0, {}, Channel::kLearned); },
      ErrorCode::kInvalidArgument);
}

TEST(ProjectionMatchTest, ExactScenePairsEveryVisiblePoint) {
  const Scene s = MakeScene(5, 100, 0.0, 0.0, 0);
  const MatchSet m = ProjectionMatch(s.keypoints, TestCamera(), s.map, s.truth,
                                     {.window_radius = 2.0, .descriptor = {}, .visibility = {},
                                      .prior_frame_radius = 0.0});
  EXPECT_EQ(m.size(), s.keypoints.size());
  for (const auto& p : m.pairs) {
    EXPECT_LT(p.residual.norm(), 1e-9);
    EXPECT_LT(p.distance, 1e-12);
  }
}

TEST(ProjectionMatchTest, PriorFrameRadiusExcludesDistantKeyframes) {
  const Scene s = MakeScene(6, 100, 0.0, 0.0, 0);
  const Pose far = Pose(Mat3::Identity(), Vec3(0, 0, -50)) * s.truth;
  ProjectionMatchParams params{.window_radius = 2.0, .descriptor = {}, .visibility = {},
                               .prior_frame_radius = 10.0};
  EXPECT_GT(ProjectionMatch(s.keypoints, TestCamera(), s.map, s.truth, params).size(), 0u);
  EXPECT_EQ(ProjectionMatch(s.keypoints, TestCamera(), s.map, far, params).size(), 0u);
}

TEST(FilterMatchesTest, KeepsFlaggedPairs) {
  MatchSet set;
  set.source_channel = Channel::kHandcrafted;
  for (int i = 0; i < 5; ++i) set.pairs.push_back({i, i, 0.0, Vec2::Zero()});
  const MatchSet out = FilterMatches(set, {true, false, true, false, false});
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out.pairs[0].point_id, 0);
  EXPECT_EQ(out.pairs[1].point_id, 2);
  EXPECT_EQ(out.source_channel, Channel::kHandcrafted);
}

TEST(IterativeAlignTest, ConvergesFromDriftedPose) {
  int aligned = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Scene s = MakeScene(100 + seed, 300, 0.5, 0.05, 50);
    std::mt19937_64 rng(seed);
    const Pose start = Se3Exp(RandomTwist(rng, 0.2, 0.02)) * s.truth;
    AlignParams params;
    params.pose.pixel_sigma = 0.5;
    const AlignResult r = IterativeAlign(s.keypoints, TestCamera(), s.map, start, params);
    if (!r.aligned) continue;
    ++aligned;
    EXPECT_LT((r.pose.center() - s.truth.center()).norm(), 0.02) << seed;
    EXPECT_LT(RotationAngle(r.pose, s.truth), 0.002) << seed;
    EXPECT_GE(static_cast<int>(r.matches.size()), params.min_prior_matches);
    EXPECT_EQ(r.round_match_counts.size(), 2u);
    for (const auto& p : r.matches.pairs) EXPECT_LT(p.residual.norm(), 0.5 * 2.447);
  }
  EXPECT_EQ(aligned, 20);
}

TEST(IterativeAlignTest, EmptyRegionLeavesPoseUntouched) {
  const Scene s = MakeScene(7, 100, 0.0, 0.0, 0);
  const Pose away = Pose(Mat3::Identity(), Vec3(0, 0, 100)) * s.truth;
  const AlignResult r = IterativeAlign(s.keypoints, TestCamera(), s.map, away);
  EXPECT_FALSE(r.aligned);
  EXPECT_EQ(r.pose.translation(), away.translation());
  EXPECT_EQ(r.pose.rotation(), away.rotation());
  EXPECT_EQ(r.matches.size(), 0u);

  const VisualMap empty;
  EXPECT_FALSE(IterativeAlign(s.keypoints, TestCamera(), empty, s.truth).aligned);
}

TEST(IterativeAlignTest, TooFewMatchesIsNotAligned) {
  const Scene s = MakeScene(8, 8, 0.0, 0.0, 0);
  AlignParams params;
  params.min_prior_matches = 50;
  const AlignResult r = IterativeAlign(s.keypoints, TestCamera(), s.map, s.truth, params);
  EXPECT_FALSE(r.aligned);
  params.rounds = 0;
  ExpectErrorCode([&] { IterativeAlign(s.keypoints, TestCamera(), s.map, s.truth, params); },
                  ErrorCode::kInvalidArgument);
}

}  // namespace
}  // namespace hiloc
