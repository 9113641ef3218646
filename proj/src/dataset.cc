#include "hiloc/dataset.h"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string_view>

#include "hiloc/error.h"

namespace hiloc {

namespace {

namespace fs = std::filesystem;

// Shortest text that reads back to the same double.
std::string Num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

void AppendNum(std::string& out, double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, r.ptr);
}

// Descriptors are unit vectors; nine significant digits keep the files
// small without affecting matching.
void AppendShort(std::string& out, double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 9);
  out.append(buf, r.ptr);
}

std::string JoinNums(std::initializer_list<double> values) {
  std::string s;
  for (double v : values) {
    if (!s.empty()) s += ' ';
    s += Num(v);
  }
  return s;
}

std::vector<std::string_view> Split(std::string_view line) {
  std::vector<std::string_view> out;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

[[noreturn]] void ParseFail(int line_no, const std::string& what) {
  throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": " + what);
}

double ParseNum(std::string_view tok, int line_no) {
  double v = 0.0;
  const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) {
    ParseFail(line_no, "bad number '" + std::string(tok) + "'");
  }
  return v;
}

std::ofstream OpenOut(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  return out;
}

void CheckWritten(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path);
}

std::string PoseText(const Pose& c2w) {
  const Eigen::Quaterniond q = c2w.quaternion();
  const Vec3& t = c2w.translation();
  return JoinNums({t.x(), t.y(), t.z(), q.x(), q.y(), q.z(), q.w()});
}

}  // namespace

// ---------------------------------------------------------------------------
// Settings

SynthSettings SynthSettings::FromConfig(const Config& cfg) {
  SynthSettings s;
  const std::uint64_t seed = [&] {
    if (!cfg.Has("seed")) throw Error(ErrorCode::kConfig, "missing required key 'seed'");
    return cfg.GetUint64("seed", 0);
  }();
  s.world.rng_seed = s.render.rng_seed = s.prior.rng_seed = seed;
  s.world.num_points = cfg.GetInt("num_points", s.world.num_points);
  s.world.descriptor_dim = cfg.GetInt("descriptor_dim", s.world.descriptor_dim);
  const auto vec3 = [&](const std::string& key, const Vec3& fallback) {
    const auto v = cfg.GetDoubles(key, {fallback.x(), fallback.y(), fallback.z()});
    if (v.size() != 3) throw Error(ErrorCode::kConfig, "key '" + key + "': expected 3 reals");
    return Vec3(v[0], v[1], v[2]);
  };
  s.world.extent = vec3("extent", s.world.extent);
  s.world.center = vec3("center", s.world.center);

  s.appearance.learned_drift = cfg.GetDouble("learned_drift", s.appearance.learned_drift);
  s.appearance.handcrafted_drift =
      cfg.GetDouble("handcrafted_drift", s.appearance.handcrafted_drift);
  s.appearance.dropout_learned = cfg.GetDouble("dropout_learned", s.appearance.dropout_learned);
  s.appearance.region_dropout_length =
      cfg.GetDouble("region_dropout_length", s.appearance.region_dropout_length);
  s.appearance.region_dropout_fraction =
      cfg.GetDouble("region_dropout_fraction", s.appearance.region_dropout_fraction);

  s.noise.pixel_sigma = cfg.GetDouble("pixel_sigma", s.noise.pixel_sigma);
  s.noise.detection_dropout = cfg.GetDouble("detection_dropout", s.noise.detection_dropout);
  s.noise.outlier_rate = cfg.GetDouble("outlier_rate", s.noise.outlier_rate);

  s.camera.fx = cfg.GetDouble("fx", s.camera.fx);
  s.camera.fy = cfg.GetDouble("fy", s.camera.fy);
  s.camera.cx = cfg.GetDouble("cx", s.camera.cx);
  s.camera.cy = cfg.GetDouble("cy", s.camera.cy);
  s.camera.width = cfg.GetInt("width", s.camera.width);
  s.camera.height = cfg.GetInt("height", s.camera.height);

  s.render.baseline = cfg.GetDouble("baseline", s.render.baseline);
  s.render.min_depth = cfg.GetDouble("min_depth", s.render.min_depth);
  s.render.max_depth = cfg.GetDouble("max_depth", s.render.max_depth);
  s.render.emit_learned = cfg.GetBool("emit_learned", s.render.emit_learned);
  s.render.emit_grids = cfg.GetBool("emit_grids", s.render.emit_grids);
  s.prior.min_depth = s.render.min_depth;
  s.prior.max_depth = s.render.max_depth;
  s.prior.position_sigma = cfg.GetDouble("prior_position_sigma", s.prior.position_sigma);

  s.trajectory = cfg.GetString("trajectory", s.trajectory);
  s.frames = cfg.GetInt("frames", s.frames);
  s.dt = cfg.GetDouble("dt", s.dt);
  s.speed = cfg.GetDouble("speed", s.speed);
  s.radius = cfg.GetDouble("radius", s.radius);
  s.height = cfg.GetDouble("path_height", s.height);
  s.prior_stride = cfg.GetInt("prior_stride", s.prior_stride);
  s.Validate();
  return s;
}

Config SynthSettings::ToConfig() const {
  Config c;
  c.Set("seed", std::to_string(world.rng_seed));
  c.Set("num_points", std::to_string(world.num_points));
  c.Set("descriptor_dim", std::to_string(world.descriptor_dim));
  c.Set("extent", JoinNums({world.extent.x(), world.extent.y(), world.extent.z()}));
  c.Set("center", JoinNums({world.center.x(), world.center.y(), world.center.z()}));
  c.Set("learned_drift", Num(appearance.learned_drift));
  c.Set("handcrafted_drift", Num(appearance.handcrafted_drift));
  c.Set("dropout_learned", Num(appearance.dropout_learned));
  c.Set("region_dropout_length", Num(appearance.region_dropout_length));
  c.Set("region_dropout_fraction", Num(appearance.region_dropout_fraction));
  c.Set("pixel_sigma", Num(noise.pixel_sigma));
  c.Set("detection_dropout", Num(noise.detection_dropout));
  c.Set("outlier_rate", Num(noise.outlier_rate));
  c.Set("fx", Num(camera.fx));
  c.Set("fy", Num(camera.fy));
  c.Set("cx", Num(camera.cx));
  c.Set("cy", Num(camera.cy));
  c.Set("width", std::to_string(camera.width));
  c.Set("height", std::to_string(camera.height));
  c.Set("baseline", Num(render.baseline));
  c.Set("min_depth", Num(render.min_depth));
  c.Set("max_depth", Num(render.max_depth));
  c.Set("emit_learned", render.emit_learned ? "true" : "false");
  c.Set("emit_grids", render.emit_grids ? "true" : "false");
  c.Set("prior_position_sigma", Num(prior.position_sigma));
  c.Set("trajectory", trajectory);
  c.Set("frames", std::to_string(frames));
  c.Set("dt", Num(dt));
  c.Set("speed", Num(speed));
  c.Set("radius", Num(radius));
  c.Set("path_height", Num(height));
  c.Set("prior_stride", std::to_string(prior_stride));
  return c;
}

void SynthSettings::Validate() const {
  try {
    world.Validate();
    appearance.Validate();
    noise.Validate();
    camera.Validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, e.what());
  }
  if (trajectory != "figure8" && trajectory != "circle" && trajectory != "line") {
    throw Error(ErrorCode::kConfig,
                "key 'trajectory': expected figure8, circle or line, got '" + trajectory + "'");
  }
  if (frames < 1) throw Error(ErrorCode::kConfig, "key 'frames': must be >= 1");
  if (!(dt > 0.0)) throw Error(ErrorCode::kConfig, "key 'dt': must be positive");
  if (!(speed >= 0.0)) throw Error(ErrorCode::kConfig, "key 'speed': must be >= 0");
  if (!(radius > 0.0)) throw Error(ErrorCode::kConfig, "key 'radius': must be positive");
  if (!(render.baseline > 0.0)) {
    throw Error(ErrorCode::kConfig, "key 'baseline': must be positive");
  }
  if (prior_stride < 1) throw Error(ErrorCode::kConfig, "key 'prior_stride': must be >= 1");
}

SynthDataset GenerateDataset(const SynthSettings& s) {
  s.Validate();
  SynthDataset d;
  d.world = GenerateWorld(s.world);
  Trajectory traj;
  if (s.trajectory == "figure8") {
    traj = FigureEightTrajectory(s.frames, s.dt, s.speed, s.radius, s.height);
  } else if (s.trajectory == "circle") {
    traj = CircleTrajectory(s.frames, s.dt, s.speed, s.radius, s.height);
  } else {
    traj = StraightLineTrajectory(s.frames, s.dt, s.speed, Vec3(-s.radius, 0.0, s.height),
                                  Vec3::UnitX());
  }
  std::vector<Pose> mapping;
  for (size_t i = 0; i < traj.size(); i += s.prior_stride) {
    mapping.push_back(traj.samples[i].pose.inverse());
  }
  d.prior = MakePriorMap(d.world, mapping, s.camera, s.noise, s.prior);
  d.sequence = RenderSequence(d.world, traj, s.camera, s.appearance, s.noise, s.render);
  return d;
}

// ---------------------------------------------------------------------------
// Keypoint files

void WriteKeypointFile(std::ostream& out, const KeypointFile& file) {
  const bool stereo = !file.right_coords.empty();
  std::string text = "HILOC-KP v1 " + Num(file.timestamp) + ' ' +
                     std::to_string(file.descriptor_dim) + ' ' + ChannelName(file.channel) +
                     ' ' + (stereo ? "1" : "0") + '\n';
  for (size_t i = 0; i < file.keypoints.size(); ++i) {
    const Keypoint& kp = file.keypoints[i];
    if (kp.descriptor.size() != file.descriptor_dim) {
      throw Error(ErrorCode::kInvalidArgument, "descriptor dimension mismatch");
    }
    AppendNum(text, kp.pixel.x());
    text += ' ';
    AppendNum(text, kp.pixel.y());
    text += ' ';
    AppendNum(text, kp.score);
    for (int j = 0; j < file.descriptor_dim; ++j) {
      text += ' ';
      AppendShort(text, kp.descriptor[j]);
    }
    if (stereo) {
      text += ' ';
      AppendNum(text, file.right_coords[i]);
    }
    text += '\n';
  }
  out << text;
}

KeypointFile ReadKeypointFile(std::istream& in) {
  KeypointFile f;
  std::string line;
  if (!std::getline(in, line)) ParseFail(1, "empty keypoint file");
  const auto head = Split(line);
  if (head.size() != 6 || head[0] != "HILOC-KP" || head[1] != "v1") {
    ParseFail(1, "expected 'HILOC-KP v1 <timestamp> <D> <channel> <stereo>'");
  }
  f.timestamp = ParseNum(head[2], 1);
  const double dim = ParseNum(head[3], 1);
  if (dim < 1 || dim != std::floor(dim)) ParseFail(1, "bad descriptor dimension");
  f.descriptor_dim = static_cast<int>(dim);
  try {
    f.channel = ParseChannel(std::string(head[4]));
  } catch (const Error& e) {
    ParseFail(1, e.what());
  }
  if (head[5] != "0" && head[5] != "1") ParseFail(1, "stereo flag must be 0 or 1");
  const bool stereo = head[5] == "1";
  const size_t expected = 3 + f.descriptor_dim + (stereo ? 1 : 0);
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tok = Split(line);
    if (tok.empty()) continue;
    if (tok.size() != expected) {
      ParseFail(line_no, "expected " + std::to_string(expected) + " fields, got " +
                             std::to_string(tok.size()));
    }
    Keypoint kp;
    kp.pixel = Vec2(ParseNum(tok[0], line_no), ParseNum(tok[1], line_no));
    kp.score = ParseNum(tok[2], line_no);
    kp.descriptor.resize(f.descriptor_dim);
    for (int j = 0; j < f.descriptor_dim; ++j) kp.descriptor[j] = ParseNum(tok[3 + j], line_no);
    kp.channel = f.channel;
    if (!kp.pixel.allFinite() || !kp.descriptor.allFinite() || !std::isfinite(kp.score)) {
      ParseFail(line_no, "non-finite keypoint value");
    }
    if (stereo) f.right_coords.push_back(ParseNum(tok.back(), line_no));
    f.keypoints.push_back(std::move(kp));
  }
  return f;
}

std::string FramePath(const std::string& dir, int index, const std::string& suffix) {
  char name[32];
  std::snprintf(name, sizeof(name), "%06d", index);
  return (fs::path(dir) / "frames" / (std::string(name) + suffix)).string();
}

// ---------------------------------------------------------------------------
// Dataset directory

void WriteDataset(const std::string& dir, const SynthSettings& settings,
                  const SynthDataset& dataset) {
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "frames", ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir + ": " + ec.message());

  VisualMap world_map = WorldAsMap(dataset.world);
  SaveMap(world_map, (fs::path(dir) / "world.map").string());
  SaveMap(dataset.prior, (fs::path(dir) / "prior.map").string());
  SaveTum((fs::path(dir) / "gt.tum").string(), dataset.sequence.ground_truth);

  const int dim = dataset.world.descriptor_dim;
  const auto& seq = dataset.sequence;
  for (size_t i = 0; i < seq.frames.size(); ++i) {
    const FrameInput& f = seq.frames[i];
    const int idx = static_cast<int>(i);
    {
      const std::string path = FramePath(dir, idx, ".kp");
      std::ofstream out = OpenOut(path);
      WriteKeypointFile(out, {f.timestamp, Channel::kHandcrafted, dim, f.handcrafted,
                              f.right_coords});
      CheckWritten(out, path);
    }
    if (!settings.render.emit_learned) continue;
    if (f.learned_grid) {
      SaveGrid(FramePath(dir, idx, ".grid"), *f.learned_grid);
    } else {
      const std::string path = FramePath(dir, idx, ".learned.kp");
      std::ofstream out = OpenOut(path);
      WriteKeypointFile(out, {f.timestamp, Channel::kLearned, dim, f.learned, {}});
      CheckWritten(out, path);
    }
  }

  Config cfg = settings.ToConfig();
  cfg.Set("frame_count", std::to_string(seq.frames.size()));
  cfg.Set("learned_format", !settings.render.emit_learned ? "none"
                            : settings.render.emit_grids  ? "grid"
                                                          : "kp");
  cfg.Set("init_pose", PoseText(seq.ground_truth.samples.front().pose));
  const std::string cfg_path = (fs::path(dir) / "dataset.cfg").string();
  std::ofstream out = OpenOut(cfg_path);
  out << "# hiloc synthetic dataset; init_pose is camera-to-world tx ty tz qx qy qz qw\n";
  cfg.Write(out);
  CheckWritten(out, cfg_path);
}

Dataset OpenDataset(const std::string& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::kIo, "no dataset directory " + dir);
  Dataset d;
  d.dir = dir;
  try {
    d.config = Config::Load((fs::path(dir) / "dataset.cfg").string());
    d.camera = CameraIntrinsics{d.config.RequireDouble("fx"), d.config.RequireDouble("fy"),
                                d.config.RequireDouble("cx"), d.config.RequireDouble("cy"),
                                d.config.RequireInt("width"), d.config.RequireInt("height")};
    d.camera.Validate();
    d.baseline = d.config.RequireDouble("baseline");
    d.frame_count = d.config.RequireInt("frame_count");
    d.learned_grids = d.config.GetString("learned_format", "kp") == "grid";
    const auto p = d.config.GetDoubles("init_pose", {0, 0, 0, 0, 0, 0, 1});
    if (p.size() != 7) throw Error(ErrorCode::kParse, "init_pose needs 7 values");
    d.initial_pose =
        Pose::FromQuaternion(Eigen::Quaterniond(p[6], p[3], p[4], p[5]), Vec3(p[0], p[1], p[2]))
            .inverse();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIo) throw;
    throw Error(ErrorCode::kParse, std::string("dataset.cfg: ") + e.what());
  }
  d.ground_truth = LoadTum((fs::path(dir) / "gt.tum").string());
  return d;
}

FrameInput LoadFrame(const Dataset& dataset, int index) {
  if (index < 0 || index >= dataset.frame_count) {
    throw Error(ErrorCode::kInvalidArgument, "frame index out of range");
  }
  FrameInput frame;
  const std::string path = FramePath(dataset.dir, index, ".kp");
  {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIo, "cannot read " + path);
    try {
      KeypointFile f = ReadKeypointFile(in);
      frame.timestamp = f.timestamp;
      frame.handcrafted = std::move(f.keypoints);
      frame.right_coords = std::move(f.right_coords);
    } catch (const Error& e) {
      throw Error(e.code(), path + ": " + e.what());
    }
  }
  if (dataset.learned_grids) {
    const std::string grid_path = FramePath(dataset.dir, index, ".grid");
    if (fs::exists(grid_path)) {
      frame.learned_grid = std::make_shared<const FeatureGrid>(LoadGrid(grid_path));
    }
  } else {
    const std::string lpath = FramePath(dataset.dir, index, ".learned.kp");
    std::ifstream in(lpath);
    if (in) {
      try {
        frame.learned = ReadKeypointFile(in).keypoints;
      } catch (const Error& e) {
        throw Error(e.code(), lpath + ": " + e.what());
      }
    }
  }
  return frame;
}

}  // namespace hiloc
