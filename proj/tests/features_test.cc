#include "hiloc/features.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "hiloc/error.h"

namespace hiloc {
namespace {

FeatureGrid RandomGrid(int h, int w, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n;
  std::vector<double> scores(h * w), desc((h / 8) * (w / 8) * dim);
  for (double& s : scores) s = u(rng);
  for (double& d : desc) d = n(rng);
  return FeatureGrid(h, w, dim, scores, desc);
}

// Brute-force reference: enumerate strict maxima, sort, accept greedily
// against every previously accepted point.
std::vector<std::pair<int, int>> OracleDetect(const FeatureGrid& g, int max_count,
                                              double spacing) {
  struct C {
    double s;
    int r, c;
  };
  std::vector<C> cands;
  for (int r = 0; r < g.height(); ++r) {
    for (int c = 0; c < g.width(); ++c) {
      bool strict = true;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || cc < 0 || rr >= g.height() || cc >= g.width()) continue;
          if (g.score(rr, cc) >= g.score(r, c)) strict = false;
        }
      }
      if (strict) cands.push_back({g.score(r, c), r, c});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const C& a, const C& b) {
    return std::tie(b.s, a.r, a.c) < std::tie(a.s, b.r, b.c);
  });
  std::vector<std::pair<int, int>> kept;
  for (const C& c : cands) {
    if (static_cast<int>(kept.size()) == max_count) break;
    bool ok = true;
    for (const auto& [r, cc] : kept) {
      if (std::hypot(r - c.r, cc - c.c) < spacing) ok = false;
    }
    if (ok) kept.emplace_back(c.r, c.c);
  }
  return kept;
}

TEST(FeatureGridTest, Validation) {
  EXPECT_THROW(FeatureGrid(10, 16, 4), Error);
  EXPECT_THROW(FeatureGrid(16, 16, 0), Error);
  std::vector<double> scores(64, 0.0), desc(4, 0.0);
  scores[3] = -1.0;
  EXPECT_THROW(FeatureGrid(8, 8, 4, scores, desc), Error);
  scores[3] = NAN;
  EXPECT_THROW(FeatureGrid(8, 8, 4, scores, desc), Error);
  scores[3] = 0.0;
  EXPECT_NO_THROW(FeatureGrid(8, 8, 4, scores, desc));
  EXPECT_THROW(FeatureGrid(8, 8, 4, scores, std::vector<double>(3)), Error);
}

TEST(FeatureGridTest, TextRoundTripIsBitExact) {
  const FeatureGrid g = RandomGrid(16, 24, 5, 3);
  std::stringstream ss;
  WriteGrid(ss, g);
  const FeatureGrid r = ReadGrid(ss);
  EXPECT_EQ(r.height(), 16);
  EXPECT_EQ(r.width(), 24);
  EXPECT_EQ(r.descriptor_dim(), 5);
  EXPECT_EQ(r.scores(), g.scores());
  EXPECT_EQ(r.descriptors(), g.descriptors());
}

TEST(FeatureGridTest, ReadRejectsBadHeader) {
  std::stringstream ss("HILOC-GRID v2 8 8 1\n");
  EXPECT_THROW(ReadGrid(ss), Error);
}

TEST(DetectTest, SingleBlob) {
  FeatureGrid g(80, 80, 2);
  for (int r = 0; r < 80; ++r) {
    for (int c = 0; c < 80; ++c) {
      g.set_score(r, c, std::exp(-0.5 * ((r - 40) * (r - 40) + (c - 40) * (c - 40)) / 9.0));
    }
  }
  const auto kps = DetectKeypoints(g, 10, 4);
  ASSERT_EQ(kps.size(), 1u);
  EXPECT_EQ(kps[0].pixel, Vec2(40, 40));
}

TEST(DetectTest, ConstantMapHasNoMaxima) {
  FeatureGrid g(16, 16, 2);
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c) g.set_score(r, c, 0.5);
  EXPECT_TRUE(DetectKeypoints(g, 10, 1).empty());
}

TEST(DetectTest, BorderPixelsCanQualify) {
  FeatureGrid g(8, 8, 1);
  g.set_score(0, 0, 1.0);
  const auto kps = DetectKeypoints(g, 5, 1);
  ASSERT_EQ(kps.size(), 1u);
  EXPECT_EQ(kps[0].pixel, Vec2(0, 0));
}

TEST(DetectTest, MatchesBruteForceOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const FeatureGrid g = RandomGrid(64, 64, 4, 100 + seed);
    const auto kps = DetectKeypoints(g, 50, 8);
    const auto oracle = OracleDetect(g, 50, 8);
    ASSERT_EQ(kps.size(), oracle.size()) << "seed " << seed;
    for (size_t i = 0; i < kps.size(); ++i) {
      EXPECT_EQ(kps[i].pixel, Vec2(oracle[i].second, oracle[i].first));
    }
  }
}

TEST(DetectTest, TieBreakByRowThenColumn) {
  FeatureGrid g(16, 16, 1);
  g.set_score(10, 2, 1.0);
  g.set_score(4, 12, 1.0);
  g.set_score(4, 6, 1.0);
  const auto kps = DetectKeypoints(g, 10, 1);
  ASSERT_EQ(kps.size(), 3u);
  EXPECT_EQ(kps[0].pixel, Vec2(6, 4));
  EXPECT_EQ(kps[1].pixel, Vec2(12, 4));
  EXPECT_EQ(kps[2].pixel, Vec2(2, 10));
}

TEST(DetectTest, PropertiesOnRandomGrids) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const FeatureGrid g = RandomGrid(48, 64, 3, 200 + seed);
    const auto kps = DetectKeypoints(g, 30, 5);
    EXPECT_LE(kps.size(), 30u);
    for (size_t i = 0; i < kps.size(); ++i) {
      EXPECT_NEAR(kps[i].descriptor.norm(), 1.0, 1e-12);
      if (i > 0) EXPECT_GE(kps[i - 1].score, kps[i].score);
      for (size_t j = 0; j < i; ++j) {
        EXPECT_GE((kps[i].pixel - kps[j].pixel).norm(), 5.0);
      }
    }
    const auto again = DetectKeypoints(g, 30, 5);
    ASSERT_EQ(again.size(), kps.size());
    for (size_t i = 0; i < kps.size(); ++i) {
      EXPECT_EQ(again[i].pixel, kps[i].pixel);
      EXPECT_EQ(again[i].descriptor, kps[i].descriptor);
    }
  }
}

TEST(DetectTest, InvalidArguments) {
  FeatureGrid g(8, 8, 1);
  EXPECT_THROW(DetectKeypoints(g, 0, 1), Error);
  EXPECT_THROW(DetectKeypoints(g, 1, 0.5), Error);
}

TEST(DetectTest, DefaultMinSpacing) {
  EXPECT_DOUBLE_EQ(DefaultMinSpacing(480, 640, 500), 18.0);  // ceil(sqrt(307.2))
  EXPECT_DOUBLE_EQ(DefaultMinSpacing(64, 64, 2048), 1.0);
}

TEST(SampleTest, CellCentreReturnsStoredVector) {
  FeatureGrid g(16, 16, 3);
  auto cell = g.mutable_cell(1, 0);
  cell[0] = 0.0;
  cell[1] = 3.0;
  cell[2] = 4.0;
  const auto s = SampleDescriptor(g, Vec2(3.5, 11.5));
  EXPECT_FALSE(s.degenerate);
  EXPECT_LT((s.descriptor - Vec3(0, 0.6, 0.8)).norm(), 1e-15);
}

TEST(SampleTest, MidpointBetweenCells) {
  FeatureGrid g(8, 16, 2);
  g.mutable_cell(0, 0)[0] = 1.0;
  g.mutable_cell(0, 1)[1] = 1.0;
  const auto s = SampleDescriptor(g, Vec2(7.5, 3.5));
  EXPECT_LT((s.descriptor - Eigen::Vector2d(1, 1).normalized()).norm(), 1e-15);
}

TEST(SampleTest, ZeroCellsAreDegenerate) {
  FeatureGrid g(8, 8, 4);
  const auto s = SampleDescriptor(g, Vec2(2, 2));
  EXPECT_TRUE(s.degenerate);
  EXPECT_EQ(s.descriptor, Eigen::Vector4d(1, 0, 0, 0));
}

TEST(SampleTest, OutOfBoundsRejected) {
  FeatureGrid g(8, 8, 1);
  EXPECT_THROW(SampleDescriptor(g, Vec2(-0.1, 2)), Error);
  EXPECT_THROW(SampleDescriptor(g, Vec2(8.0, 2)), Error);
  EXPECT_THROW(SampleDescriptor(g, Vec2(2, 8.0)), Error);
}

TEST(SampleTest, MatchesTentFunctionOracle) {
  const FeatureGrid g = RandomGrid(40, 56, 6, 7);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> ux(0.0, 56.0), uy(0.0, 40.0);
  for (int t = 0; t < 1000; ++t) {
    const Vec2 px(ux(rng), uy(rng));
    // Weighted sum over every cell with a separable tent kernel.
    const double x = std::clamp(px.x() / 8.0 - 7.0 / 16.0, 0.0, 6.0);
    const double y = std::clamp(px.y() / 8.0 - 7.0 / 16.0, 0.0, 4.0);
    Eigen::VectorXd expected = Eigen::VectorXd::Zero(6);
    for (int r = 0; r < g.cell_rows(); ++r) {
      for (int c = 0; c < g.cell_cols(); ++c) {
        const double w = std::max(0.0, 1.0 - std::abs(y - r)) * std::max(0.0, 1.0 - std::abs(x - c));
        if (w == 0.0) continue;
        for (int d = 0; d < 6; ++d) expected[d] += w * g.cell(r, c)[d];
      }
    }
    EXPECT_LT((InterpolateDescriptor(g, px) - expected).norm(), 1e-9);
    EXPECT_NEAR(SampleDescriptor(g, px).descriptor.norm(), 1.0, 1e-12);
  }
}

Keypoint WithDescriptor(const Eigen::VectorXd& d) {
  Keypoint kp;
  kp.descriptor = d;
  return kp;
}

TEST(MatchDescriptorTest, EmptyCandidates) {
  EXPECT_FALSE(MatchDescriptor(Eigen::Vector2d(1, 0), std::vector<Keypoint>{}).has_value());
}

TEST(MatchDescriptorTest, IdenticalSingleCandidate) {
  const std::vector<Keypoint> c = {WithDescriptor(Eigen::Vector2d(0, 1))};
  const auto m = MatchDescriptor(Eigen::Vector2d(0, 1), c);
  ASSERT_TRUE(m.has_value());
  EXPECT_EQ(m->index, 0u);
  EXPECT_EQ(m->distance, 0.0);
}

TEST(MatchDescriptorTest, AmbiguousPairFailsRatio) {
  // Distances 0.3 and 0.32: 0.3 > 0.9 * 0.32 = 0.288.
  const std::vector<Keypoint> c = {WithDescriptor(Eigen::Vector2d(0.3, 0)),
                                   WithDescriptor(Eigen::Vector2d(0, 0.32))};
  EXPECT_FALSE(MatchDescriptor(Eigen::Vector2d(0, 0), c, {0.7, 0.9}).has_value());
  EXPECT_TRUE(MatchDescriptor(Eigen::Vector2d(0, 0), c, {0.7, 0.95}).has_value());
}

TEST(MatchDescriptorTest, MaxDistance) {
  const std::vector<Keypoint> c = {WithDescriptor(Eigen::Vector2d(0.8, 0))};
  EXPECT_FALSE(MatchDescriptor(Eigen::Vector2d(0, 0), c, {0.7, 0.9}).has_value());
}

TEST(MatchDescriptorTest, Errors) {
  const std::vector<Keypoint> c = {WithDescriptor(Eigen::Vector3d(0, 0, 1))};
  EXPECT_THROW(MatchDescriptor(Eigen::Vector2d(0, 1), c), Error);
  EXPECT_THROW(MatchDescriptor(Eigen::Vector3d(0, 0, 1), c, {0.7, 0.0}), Error);
  EXPECT_THROW(MatchDescriptor(Eigen::Vector3d(0, 0, 1), c, {0.7, 1.5}), Error);
}

TEST(MatchDescriptorTest, SubsetIndexRefersToFullList) {
  const std::vector<Keypoint> c = {WithDescriptor(Eigen::Vector2d(1, 0)),
                                   WithDescriptor(Eigen::Vector2d(0, 1)),
                                   WithDescriptor(Eigen::Vector2d(-1, 0))};
  const std::vector<size_t> subset = {1, 2};
  const auto m = MatchDescriptor(Eigen::Vector2d(0, 1), c, subset, {0.7, 0.9});
  ASSERT_TRUE(m.has_value());
  EXPECT_EQ(m->index, 1u);
}

TEST(ChannelTest, NamesRoundTrip) {
  EXPECT_EQ(ParseChannel(ChannelName(Channel::kLearned)), Channel::kLearned);
  EXPECT_EQ(ParseChannel(ChannelName(Channel::kHandcrafted)), Channel::kHandcrafted);
  EXPECT_THROW(ParseChannel("orb"), Error);
}

}  // namespace
}  // namespace hiloc
