#include "hiloc/synth.h"

#include <cmath>
#include <numbers>
#include <random>

#include "hiloc/error.h"

namespace hiloc {

namespace {

std::mt19937_64 MakeRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

Descriptor RandomUnit(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Descriptor d(dim);
  do {
    for (int i = 0; i < dim; ++i) d[i] = normal(rng);
  } while (d.norm() < 1e-9);
  return d.normalized();
}

void CheckProbability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, std::string(name) + " must lie in [0, 1]");
  }
}

// Streams keep the random sequences of independent quantities apart.
enum Stream : std::uint64_t {
  kStreamWorld = 1,
  kStreamHandcraftedDrift = 2,
  kStreamLearnedDrift = 3,
  kStreamFrame = 4,
  kStreamPrior = 5,
  kStreamDropout = 6,
};

}  // namespace

void WorldConfig::Validate() const {
  if (num_points < 1) throw Error(ErrorCode::kInvalidArgument, "num_points must be >= 1");
  if (!(extent.array() > 0.0).all()) {
    throw Error(ErrorCode::kInvalidArgument, "extent must be positive");
  }
  if (descriptor_dim < 2) {
    throw Error(ErrorCode::kInvalidArgument, "descriptor_dim must be >= 2");
  }
}

void AppearanceModel::Validate() const {
  CheckProbability(learned_drift, "learned_drift");
  CheckProbability(handcrafted_drift, "handcrafted_drift");
  CheckProbability(dropout_learned, "dropout_learned");
  CheckProbability(region_dropout_fraction, "region_dropout_fraction");
  if (!(region_dropout_length >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "region_dropout_length must be >= 0");
  }
}

void NoiseModel::Validate() const {
  if (!(pixel_sigma >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "pixel_sigma must be >= 0");
  }
  CheckProbability(detection_dropout, "detection_dropout");
  CheckProbability(outlier_rate, "outlier_rate");
}

World GenerateWorld(const WorldConfig& cfg) {
  cfg.Validate();
  auto rng = MakeRng(cfg.rng_seed, kStreamWorld);
  std::uniform_real_distribution<double> unit(-0.5, 0.5);
  World w;
  w.descriptor_dim = cfg.descriptor_dim;
  w.points.reserve(cfg.num_points);
  for (int i = 0; i < cfg.num_points; ++i) {
    Vec3 p;
    for (int a = 0; a < 3; ++a) p[a] = cfg.center[a] + cfg.extent[a] * unit(rng);
    w.points.push_back(p);
    w.handcrafted.push_back(RandomUnit(cfg.descriptor_dim, rng));
    w.learned.push_back(RandomUnit(cfg.descriptor_dim, rng));
  }
  return w;
}

Descriptor DriftDescriptor(const Descriptor& d, double drift, std::uint64_t seed,
                           std::uint64_t stream) {
  const Descriptor base = d.normalized();
  if (drift == 0.0) return base;
  auto rng = MakeRng(seed, stream);
  Descriptor u;
  do {
    u = RandomUnit(static_cast<int>(d.size()), rng);
    u -= u.dot(base) * base;
  } while (u.norm() < 1e-6);
  u.normalize();
  const double angle = drift * std::numbers::pi / 2.0;
  return (std::cos(angle) * base + std::sin(angle) * u).normalized();
}

Pose CameraToWorldLooking(const Vec3& position, const Vec3& forward) {
  Vec3 z = forward;
  z.z() = 0.0;
  z.normalize();
  const Vec3 y(0.0, 0.0, -1.0);
  const Vec3 x = y.cross(z);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return Pose(r, position);
}

Trajectory StraightLineTrajectory(int frames, double dt, double speed, const Vec3& start,
                                  const Vec3& direction, double t0) {
  Trajectory t;
  const Vec3 dir = direction.normalized();
  for (int i = 0; i < frames; ++i) {
    t.samples.push_back({t0 + i * dt, CameraToWorldLooking(start + dir * speed * dt * i, dir)});
  }
  return t;
}

Trajectory CircleTrajectory(int frames, double dt, double speed, double radius,
                            double height, double t0) {
  Trajectory t;
  for (int i = 0; i < frames; ++i) {
    const double a = speed * dt * i / radius;
    const Vec3 p(radius * std::cos(a), radius * std::sin(a), height);
    const Vec3 f(-std::sin(a), std::cos(a), 0.0);
    t.samples.push_back({t0 + i * dt, CameraToWorldLooking(p, f)});
  }
  return t;
}

Trajectory FigureEightTrajectory(int frames, double dt, double speed, double radius,
                                 double height, double t0) {
  auto pos = [&](double s) {
    return Vec3(radius * std::sin(s), radius * std::sin(s) * std::cos(s), height);
  };
  auto tangent = [&](double s) {
    return Vec3(radius * std::cos(s), radius * std::cos(2.0 * s), 0.0);
  };
  constexpr int kSamples = 20000;
  std::vector<double> arc(kSamples + 1, 0.0);
  const double ds = 2.0 * std::numbers::pi / kSamples;
  for (int i = 1; i <= kSamples; ++i) {
    // Simpson's rule on |p'(s)| per interval.
    const double a = (i - 1) * ds, b = i * ds;
    arc[i] = arc[i - 1] + ds / 6.0 *
                              (tangent(a).norm() + 4.0 * tangent(0.5 * (a + b)).norm() +
                               tangent(b).norm());
  }
  const double total = arc.back();
  Trajectory t;
  for (int i = 0; i < frames; ++i) {
    const double d = std::fmod(speed * dt * i, total);
    const auto it = std::upper_bound(arc.begin(), arc.end(), d);
    const int hi = std::min<int>(static_cast<int>(it - arc.begin()), kSamples);
    const int lo = hi - 1;
    const double frac = (d - arc[lo]) / (arc[hi] - arc[lo]);
    const double s = (lo + frac) * ds;
    t.samples.push_back({t0 + i * dt, CameraToWorldLooking(pos(s), tangent(s))});
  }
  return t;
}

std::vector<Pose> WorldToCamera(const Trajectory& trajectory) {
  std::vector<Pose> out;
  out.reserve(trajectory.size());
  for (const auto& s : trajectory.samples) out.push_back(s.pose.inverse());
  return out;
}

double PathLength(const Trajectory& trajectory) {
  double len = 0.0;
  for (size_t i = 1; i < trajectory.size(); ++i) {
    len += (trajectory.samples[i].pose.translation() -
            trajectory.samples[i - 1].pose.translation())
               .norm();
  }
  return len;
}

std::vector<std::pair<double, double>> DropoutRegions(double path_length,
                                                      const AppearanceModel& appearance,
                                                      std::uint64_t seed) {
  std::vector<std::pair<double, double>> regions;
  const double len = appearance.region_dropout_length;
  if (len <= 0.0 || appearance.region_dropout_fraction <= 0.0 || path_length <= 0.0) {
    return regions;
  }
  const int n = std::max(
      1, static_cast<int>(std::lround(appearance.region_dropout_fraction * path_length / len)));
  const double segment = path_length / n;
  auto rng = MakeRng(seed, kStreamDropout);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    const double slack = std::max(0.0, segment - len);
    const double start = i * segment + slack * unit(rng);
    regions.emplace_back(start, start + std::min(len, segment));
  }
  return regions;
}

VisualMap MakePriorMap(const World& world, const std::vector<Pose>& mapping_poses,
                       const CameraIntrinsics& k, const NoiseModel& noise,
                       const PriorMapOptions& options) {
  noise.Validate();
  k.Validate();
  if (mapping_poses.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "mapping trajectory is empty");
  }
  const auto& descriptors =
      options.channel == Channel::kLearned ? world.learned : world.handcrafted;
  VisualMap map(options.channel);
  std::vector<std::vector<Observation>> obs(world.points.size());
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (size_t f = 0; f < mapping_poses.size(); ++f) {
    auto rng = MakeRng(options.rng_seed, kStreamPrior, f);
    Keyframe kf;
    kf.id = static_cast<KeyframeId>(f);
    kf.timestamp = static_cast<double>(f);
    kf.pose = mapping_poses[f];
    kf.intrinsics = k;
    for (size_t j = 0; j < world.points.size(); ++j) {
      const Vec3 pc = kf.pose * world.points[j];
      if (pc.z() < options.min_depth || pc.z() > options.max_depth) continue;
      const Vec2 px = ProjectCameraPoint(pc, k);
      if (!k.Contains(px)) continue;
      if (unit(rng) < noise.detection_dropout) continue;
      Vec2 z = px;
      if (noise.pixel_sigma > 0.0) {
        z += noise.pixel_sigma * Vec2(normal(rng), normal(rng));
        if (!k.Contains(z)) continue;
      }
      Keypoint kp;
      kp.pixel = z;
      kp.score = 1.0;
      kp.descriptor = descriptors[j];
      kp.channel = options.channel;
      obs[j].push_back({kf.id, static_cast<int>(kf.keypoints.size())});
      kf.keypoints.push_back(std::move(kp));
    }
    map.AddKeyframe(std::move(kf));
  }
  auto rng = MakeRng(options.rng_seed, kStreamPrior, mapping_poses.size());
  for (size_t j = 0; j < world.points.size(); ++j) {
    if (obs[j].empty()) continue;
    MapPoint p;
    p.id = static_cast<PointId>(j);
    p.position = world.points[j];
    if (options.position_sigma > 0.0) {
      p.position += options.position_sigma * Vec3(normal(rng), normal(rng), normal(rng));
    }
    p.descriptor = descriptors[j];
    p.channel = options.channel;
    p.observations = std::move(obs[j]);
    p = UpdateMeanViewDir(p, map).point;
    map.AddPoint(std::move(p));
  }
  return map;
}

VisualMap WorldAsMap(const World& world) {
  VisualMap map(Channel::kLearned);
  for (size_t j = 0; j < world.points.size(); ++j) {
    MapPoint p;
    p.id = static_cast<PointId>(j);
    p.position = world.points[j];
    p.descriptor = world.learned[j];
    p.channel = Channel::kLearned;
    map.AddPoint(std::move(p));
  }
  return map;
}

FeatureGrid RenderGrid(const std::vector<Keypoint>& keypoints, const CameraIntrinsics& k,
                       int descriptor_dim) {
  FeatureGrid grid(k.height, k.width, descriptor_dim);
  constexpr int kRadius = 3;
  for (const Keypoint& kp : keypoints) {
    const int c0 = static_cast<int>(std::lround(kp.pixel.x()));
    const int r0 = static_cast<int>(std::lround(kp.pixel.y()));
    for (int r = r0 - kRadius; r <= r0 + kRadius; ++r) {
      for (int c = c0 - kRadius; c <= c0 + kRadius; ++c) {
        if (r < 0 || c < 0 || r >= grid.height() || c >= grid.width()) continue;
        const double d2 = (Vec2(c, r) - kp.pixel).squaredNorm();
        const double v = std::exp(-0.5 * d2);
        if (v > grid.score(r, c)) grid.set_score(r, c, v);
      }
    }
    const int cr = std::clamp(static_cast<int>(kp.pixel.y()) / FeatureGrid::kCellSize, 0,
                              grid.cell_rows() - 1);
    const int cc = std::clamp(static_cast<int>(kp.pixel.x()) / FeatureGrid::kCellSize, 0,
                              grid.cell_cols() - 1);
    auto cell = grid.mutable_cell(cr, cc);
    for (int i = 0; i < descriptor_dim; ++i) cell[i] = kp.descriptor[i];
  }
  return grid;
}

RenderedSequence RenderSequence(const World& world, const Trajectory& trajectory,
                                const CameraIntrinsics& k, const AppearanceModel& appearance,
                                const NoiseModel& noise, const RenderOptions& options) {
  appearance.Validate();
  noise.Validate();
  k.Validate();
  if (trajectory.samples.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "localisation trajectory is empty");
  }
  const size_t n_points = world.points.size();
  std::vector<Descriptor> hand(n_points), learned(n_points);
  for (size_t j = 0; j < n_points; ++j) {
    hand[j] = DriftDescriptor(world.handcrafted[j], appearance.handcrafted_drift,
                              options.rng_seed, kStreamHandcraftedDrift * 1000003 + j);
    learned[j] = DriftDescriptor(world.learned[j], appearance.learned_drift,
                                 options.rng_seed, kStreamLearnedDrift * 1000003 + j);
  }
  const auto regions =
      DropoutRegions(PathLength(trajectory), appearance, options.rng_seed);

  RenderedSequence seq;
  seq.ground_truth = trajectory;
  double arc = 0.0;
  for (size_t f = 0; f < trajectory.size(); ++f) {
    if (f > 0) {
      arc += (trajectory.samples[f].pose.translation() -
              trajectory.samples[f - 1].pose.translation())
                 .norm();
    }
    bool dropout_region = false;
    for (const auto& [a, b] : regions) dropout_region |= (arc >= a && arc < b);

    auto rng = MakeRng(options.rng_seed, kStreamFrame, f);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto noisy = [&](const Vec2& px) {
      return noise.pixel_sigma > 0.0
                 ? Vec2(px + noise.pixel_sigma * Vec2(normal(rng), normal(rng)))
                 : px;
    };
    auto uniform_pixel = [&]() {
      return Vec2(unit(rng) * (k.width - 1), unit(rng) * (k.height - 1));
    };

    const Pose w2c = trajectory.samples[f].pose.inverse();
    FrameInput frame;
    frame.timestamp = trajectory.samples[f].timestamp;
    std::vector<int> hand_src, learned_src;
    for (size_t j = 0; j < n_points; ++j) {
      const Vec3 pc = w2c * world.points[j];
      if (pc.z() < options.min_depth || pc.z() > options.max_depth) continue;
      const Vec2 px = ProjectCameraPoint(pc, k);
      if (!k.Contains(px)) continue;
      const double u_right = px.x() - k.fx * options.baseline / pc.z();

      // Handcrafted channel.
      if (unit(rng) >= noise.detection_dropout) {
        Keypoint kp;
        kp.score = 1.0;
        kp.descriptor = hand[j];
        kp.channel = Channel::kHandcrafted;
        double ur = std::numeric_limits<double>::quiet_NaN();
        int src = static_cast<int>(j);
        if (unit(rng) < noise.outlier_rate) {
          kp.pixel = uniform_pixel();
          src = -1;
        } else {
          kp.pixel = noisy(px);
          if (u_right >= 0.0) {
            ur = u_right + (noise.pixel_sigma > 0.0 ? noise.pixel_sigma * normal(rng) : 0.0);
          }
        }
        if (k.Contains(kp.pixel)) {
          frame.handcrafted.push_back(std::move(kp));
          frame.right_coords.push_back(ur);
          hand_src.push_back(src);
        }
      }

      // Learned channel.
      if (options.emit_learned && !dropout_region) {
        if (unit(rng) >= appearance.dropout_learned &&
            unit(rng) >= noise.detection_dropout) {
          Keypoint kp;
          kp.score = 1.0;
          kp.descriptor = learned[j];
          kp.channel = Channel::kLearned;
          int src = static_cast<int>(j);
          if (unit(rng) < noise.outlier_rate) {
            kp.pixel = uniform_pixel();
            src = -1;
          } else {
            kp.pixel = noisy(px);
          }
          if (k.Contains(kp.pixel)) {
            frame.learned.push_back(std::move(kp));
            learned_src.push_back(src);
          }
        }
      }
    }
    if (options.emit_grids && options.emit_learned) {
      frame.learned_grid = std::make_shared<const FeatureGrid>(
          RenderGrid(frame.learned, k, world.descriptor_dim));
    }
    seq.frames.push_back(std::move(frame));
    seq.handcrafted_sources.push_back(std::move(hand_src));
    seq.learned_sources.push_back(std::move(learned_src));
    seq.in_dropout_region.push_back(dropout_region);
  }
  return seq;
}

}  // namespace hiloc
