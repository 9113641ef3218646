#include "hiloc/dataset.h"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "test_util.h"

namespace hiloc {
namespace {

namespace fs = std::filesystem;
using testing::ExpectErrorCode;
using testing::RotationAngle;

fs::path TempDir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hiloc_dataset_test_" + name);
  fs::remove_all(p);
  return p;
}

Config SmallConfig(std::uint64_t seed, int frames) {
  Config c;
  c.Set("seed", std::to_string(seed));
  c.Set("frames", std::to_string(frames));
  c.Set("num_points", "800");
  c.Set("pixel_sigma", "0.5");
  return c;
}

TEST(KeypointFileTest, RoundTrip) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  KeypointFile f;
  f.timestamp = 12.345678901;
  f.channel = Channel::kHandcrafted;
  f.descriptor_dim = 8;
  for (int i = 0; i < 50; ++i) {
    Keypoint kp;
    kp.pixel = Vec2(640 * std::abs(n(rng)), 480 * std::abs(n(rng)));
    kp.score = std::abs(n(rng));
    kp.descriptor = Eigen::VectorXd::NullaryExpr(8, [&] { return n(rng); }).normalized();
    f.keypoints.push_back(kp);
    f.right_coords.push_back(i % 7 == 0 ? std::nan("") : kp.pixel.x() - 3.0);
  }
  std::stringstream ss;
  WriteKeypointFile(ss, f);
  const KeypointFile back = ReadKeypointFile(ss);
  EXPECT_EQ(back.timestamp, f.timestamp);
  EXPECT_EQ(back.channel, f.channel);
  ASSERT_EQ(back.keypoints.size(), 50u);
  ASSERT_EQ(back.right_coords.size(), 50u);
  for (size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(back.keypoints[i].pixel, f.keypoints[i].pixel);
    EXPECT_EQ(back.keypoints[i].score, f.keypoints[i].score);
    EXPECT_LT((back.keypoints[i].descriptor - f.keypoints[i].descriptor).cwiseAbs().maxCoeff(),
              1e-8);
    EXPECT_EQ(back.keypoints[i].channel, Channel::kHandcrafted);
    if (std::isnan(f.right_coords[i])) {
      EXPECT_TRUE(std::isnan(back.right_coords[i]));
    } else {
      EXPECT_EQ(back.right_coords[i], f.right_coords[i]);
    }
  }
}

TEST(KeypointFileTest, MonocularHasNoRightCoordinates) {
  KeypointFile f;
  f.channel = Channel::kLearned;
  f.descriptor_dim = 2;
  Keypoint kp;
  kp.descriptor = Eigen::Vector2d(1, 0);
  f.keypoints = {kp, kp};
  std::stringstream ss;
  WriteKeypointFile(ss, f);
  const KeypointFile back = ReadKeypointFile(ss);
  EXPECT_TRUE(back.right_coords.empty());
  EXPECT_EQ(back.keypoints.size(), 2u);
}

TEST(KeypointFileTest, ParseErrors) {
  for (const char* text : {
           "",
           "HILOC-KP v2 0 2 learned 0\n",
           "HILOC-KP v1 0 2 orb 0\n",
           "HILOC-KP v1 0 0 learned 0\n",
           "HILOC-KP v1 0 2 learned 2\n",
           "HILOC-KP v1 0 2 learned 0\n1 2 3 4\n",
           "HILOC-KP v1 0 2 learned 0\n1 2 3 4 5 6\n",
           "HILOC-KP v1 0 2 learned 0\n1 2 3 x 5\n",
           "HILOC-KP v1 0 2 learned 0\n1 nan 3 4 5\n",
           "HILOC-KP v1 0 2 handcrafted 1\n1 2 3 4 5\n",
       }) {
    std::istringstream in(text);
    ExpectErrorCode([&] { ReadKeypointFile(in); }, ErrorCode::kParse);
  }
}

TEST(SynthSettingsTest, RequiresSeedAndValidValues) {
  Config c;
  try {
    SynthSettings::FromConfig(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
    EXPECT_NE(std::string(e.what()).find("seed"), std::string::npos);
  }
  c.Set("seed", "1");
  c.Set("pixel_sigma", "-1");
  ExpectErrorCode([&] { SynthSettings::FromConfig(c); }, ErrorCode::kConfig);
  c.Set("pixel_sigma", "abc");
  ExpectErrorCode([&] { SynthSettings::FromConfig(c); }, ErrorCode::kConfig);
  c.Set("pixel_sigma", "0.5");
  c.Set("trajectory", "spiral");
  ExpectErrorCode([&] { SynthSettings::FromConfig(c); }, ErrorCode::kConfig);
}

TEST(SynthSettingsTest, ConfigRoundTrip) {
  Config c = SmallConfig(9, 42);
  c.Set("learned_drift", "0.25");
  c.Set("trajectory", "circle");
  c.Set("path_height", "2.5");
  const SynthSettings s = SynthSettings::FromConfig(c);
  EXPECT_EQ(s.frames, 42);
  EXPECT_EQ(s.trajectory, "circle");
  EXPECT_EQ(s.height, 2.5);
  const SynthSettings again = SynthSettings::FromConfig(s.ToConfig());
  std::ostringstream a, b;
  s.ToConfig().Write(a);
  again.ToConfig().Write(b);
  EXPECT_EQ(a.str(), b.str());
}

TEST(DatasetTest, WrittenFramesReloadFaithfully) {
  const fs::path dir = TempDir("reload");
  const SynthSettings s = SynthSettings::FromConfig(SmallConfig(3, 25));
  const SynthDataset data = GenerateDataset(s);
  WriteDataset(dir.string(), s, data);
  for (const char* name : {"world.map", "prior.map", "gt.tum", "dataset.cfg"}) {
    EXPECT_TRUE(fs::exists(dir / name)) << name;
  }
  const Dataset d = OpenDataset(dir.string());
  EXPECT_EQ(d.frame_count, 25);
  EXPECT_EQ(d.camera.fx, s.camera.fx);
  EXPECT_EQ(d.baseline, s.render.baseline);
  EXPECT_FALSE(d.learned_grids);
  const Pose truth0 = data.sequence.ground_truth.samples[0].pose.inverse();
  EXPECT_LT((d.initial_pose.translation() - truth0.translation()).norm(), 1e-9);
  EXPECT_LT(RotationAngle(d.initial_pose, truth0), 1e-9);
  ASSERT_EQ(d.ground_truth.size(), 25u);
  for (int i = 0; i < 25; ++i) {
    const FrameInput f = LoadFrame(d, i);
    const FrameInput& m = data.sequence.frames[i];
    EXPECT_EQ(f.timestamp, m.timestamp);
    ASSERT_EQ(f.handcrafted.size(), m.handcrafted.size());
    ASSERT_EQ(f.learned.size(), m.learned.size());
    for (size_t j = 0; j < f.handcrafted.size(); ++j) {
      EXPECT_EQ(f.handcrafted[j].pixel, m.handcrafted[j].pixel);
    }
  }
  const VisualMap prior = LoadMap((dir / "prior.map").string());
  EXPECT_EQ(prior.points().size(), data.prior.points().size());
  fs::remove_all(dir);
}

TEST(DatasetTest, GridFramesRoundTrip) {
  const fs::path dir = TempDir("grid");
  Config c = SmallConfig(4, 3);
  c.Set("emit_grids", "true");
  const SynthSettings s = SynthSettings::FromConfig(c);
  const SynthDataset data = GenerateDataset(s);
  WriteDataset(dir.string(), s, data);
  const Dataset d = OpenDataset(dir.string());
  EXPECT_TRUE(d.learned_grids);
  const FrameInput f = LoadFrame(d, 1);
  ASSERT_TRUE(f.learned_grid);
  EXPECT_EQ(f.learned_grid->scores(), data.sequence.frames[1].learned_grid->scores());
  fs::remove_all(dir);
}

TEST(DatasetTest, MissingAndCorruptInputs) {
  ExpectErrorCode([] { OpenDataset("/nonexistent/hiloc"); }, ErrorCode::kIo);
  const fs::path dir = TempDir("corrupt");
  fs::create_directories(dir);
  ExpectErrorCode([&] { OpenDataset(dir.string()); }, ErrorCode::kIo);
  std::ofstream(dir / "dataset.cfg") << "fx = 450\nfy\n";
  ExpectErrorCode([&] { OpenDataset(dir.string()); }, ErrorCode::kParse);
  fs::remove_all(dir);
}

TEST(DatasetTest, FramePathLayout) {
  EXPECT_EQ(FramePath("d", 7, ".kp"), (fs::path("d") / "frames" / "000007.kp").string());
}

}  // namespace
}  // namespace hiloc
