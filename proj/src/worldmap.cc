#include "hiloc/worldmap.h"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "hiloc/error.h"

namespace hiloc {

const MapPoint& VisualMap::point(PointId id) const {
  auto it = points_.find(id);
  if (it == points_.end()) {
    throw Error(ErrorCode::kInvalidArgument, "unknown point " + std::to_string(id));
  }
  return it->second;
}

MapPoint& VisualMap::mutable_point(PointId id) {
  return const_cast<MapPoint&>(std::as_const(*this).point(id));
}

const Keyframe& VisualMap::keyframe(KeyframeId id) const {
  auto it = keyframes_.find(id);
  if (it == keyframes_.end()) {
    throw Error(ErrorCode::kInvalidArgument,
                "unknown keyframe " + std::to_string(id));
  }
  return it->second;
}

Keyframe& VisualMap::mutable_keyframe(KeyframeId id) {
  return const_cast<Keyframe&>(std::as_const(*this).keyframe(id));
}

void VisualMap::AddKeyframe(Keyframe keyframe) {
  const KeyframeId id = keyframe.id;
  if (!keyframes_.emplace(id, std::move(keyframe)).second) {
    throw Error(ErrorCode::kInvalidArgument,
                "duplicate keyframe " + std::to_string(id));
  }
}

void VisualMap::CheckObservation(const Observation& obs) const {
  auto it = keyframes_.find(obs.keyframe_id);
  if (it == keyframes_.end()) {
    throw Error(ErrorCode::kIntegrity, "observation references missing keyframe " +
                                           std::to_string(obs.keyframe_id));
  }
  if (obs.keypoint_index < 0 ||
      obs.keypoint_index >= static_cast<int>(it->second.keypoints.size())) {
    throw Error(ErrorCode::kIntegrity,
                "observation references missing keypoint " +
                    std::to_string(obs.keypoint_index) + " in keyframe " +
                    std::to_string(obs.keyframe_id));
  }
}

void VisualMap::AddPoint(MapPoint point) {
  for (const Observation& obs : point.observations) CheckObservation(obs);
  const PointId id = point.id;
  if (!points_.emplace(id, std::move(point)).second) {
    throw Error(ErrorCode::kInvalidArgument, "duplicate point " + std::to_string(id));
  }
}

void VisualMap::AddObservation(PointId point_id, const Observation& obs) {
  CheckObservation(obs);
  mutable_point(point_id).observations.push_back(obs);
}

void VisualMap::RemovePoint(PointId id) { points_.erase(id); }

void VisualMap::Validate() const {
  for (const auto& [id, p] : points_) {
    if (p.id != id) {
      throw Error(ErrorCode::kIntegrity, "point key/id mismatch at " + std::to_string(id));
    }
    for (const Observation& obs : p.observations) CheckObservation(obs);
  }
  for (const auto& [id, kf] : keyframes_) {
    if (kf.id != id) {
      throw Error(ErrorCode::kIntegrity,
                  "keyframe key/id mismatch at " + std::to_string(id));
    }
    if (!kf.right_coords.empty() && kf.right_coords.size() != kf.keypoints.size()) {
      throw Error(ErrorCode::kIntegrity,
                  "right_coords size mismatch in keyframe " + std::to_string(id));
    }
  }
}

bool IsVisible(const MapPoint& point, const Pose& pose,
               const CameraIntrinsics& k, const VisibilityParams& params) {
  const Vec3 pc = pose * point.position;
  if (!(pc.z() > kMinDepth)) return false;
  const Vec2 px(k.fx * pc.x() / pc.z() + k.cx, k.fy * pc.y() / pc.z() + k.cy);
  if (!k.Contains(px)) return false;
  const Vec3 ray = point.position - pose.center();
  const double dist = ray.norm();
  if (!(dist <= params.max_distance) || dist <= 0.0) return false;
  const double cos_angle = std::clamp(ray.dot(point.mean_view_dir) / dist, -1.0, 1.0);
  return std::acos(cos_angle) <= params.max_view_angle;
}

std::vector<const MapPoint*> VisibleCandidates(const VisualMap& map,
                                               const Pose& predicted_pose,
                                               const CameraIntrinsics& k,
                                               const VisibilityParams& params) {
  std::vector<const MapPoint*> out;
  for (const auto& [id, p] : map.points()) {
    if (IsVisible(p, predicted_pose, k, params)) out.push_back(&p);
  }
  return out;
}

std::vector<const MapPoint*> VisibleCandidates(const VisualMap& map,
                                               const std::vector<PointId>& subset,
                                               const Pose& predicted_pose,
                                               const CameraIntrinsics& k,
                                               const VisibilityParams& params) {
  std::vector<const MapPoint*> out;
  for (PointId id : subset) {
    auto it = map.points().find(id);
    if (it == map.points().end()) continue;
    if (IsVisible(it->second, predicted_pose, k, params)) out.push_back(&it->second);
  }
  return out;
}

std::vector<PointId> PointsNearPosition(const VisualMap& map, const Vec3& position,
                                        double radius) {
  std::vector<char> near_kf;
  std::map<KeyframeId, bool> is_near;
  for (const auto& [id, kf] : map.keyframes()) {
    is_near[id] = (kf.pose.center() - position).norm() <= radius;
  }
  std::vector<PointId> out;
  for (const auto& [id, p] : map.points()) {
    for (const Observation& obs : p.observations) {
      auto it = is_near.find(obs.keyframe_id);
      if (it != is_near.end() && it->second) {
        out.push_back(id);
        break;
      }
    }
  }
  return out;
}

MeanViewDirResult UpdateMeanViewDir(const MapPoint& point, const VisualMap& map) {
  MeanViewDirResult result{point, false};
  if (point.observations.empty()) {
    result.degenerate = true;
    return result;
  }
  Vec3 sum = Vec3::Zero();
  for (const Observation& obs : point.observations) {
    const Vec3 ray = point.position - map.keyframe(obs.keyframe_id).pose.center();
    const double n = ray.norm();
    if (n > 0.0) sum += ray / n;
  }
  const double n = sum.norm();
  if (n < 1e-12) {
    result.degenerate = true;
  } else {
    result.point.mean_view_dir = sum / n;
  }
  return result;
}

namespace {

void WriteDescriptor(std::ostream& out, const Descriptor& d) {
  for (Eigen::Index i = 0; i < d.size(); ++i) out << ' ' << d[i];
}

class LineReader {
 public:
  LineReader(const std::string& line, int line_no) : in_(line), line_no_(line_no) {}

  template <typename T>
  T Next(const char* what) {
    T value;
    if (!(in_ >> value)) Fail(std::string("expected ") + what);
    return value;
  }

  double NextReal(const char* what) {
    // operator>> rejects "nan"/"inf"; parse tokens with strtod instead.
    std::string token = Next<std::string>(what);
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0') Fail(std::string("bad number for ") + what);
    return v;
  }

  Descriptor NextDescriptor(int dim) {
    Descriptor d(dim);
    for (int i = 0; i < dim; ++i) d[i] = NextReal("descriptor value");
    return d;
  }

  bool AtEnd() {
    std::string rest;
    return !(in_ >> rest);
  }

  std::vector<std::string> Rest() {
    std::vector<std::string> out;
    std::string t;
    while (in_ >> t) out.push_back(t);
    return out;
  }

  [[noreturn]] void Fail(const std::string& msg) const {
    throw Error(ErrorCode::kParse, "line " + std::to_string(line_no_) + ": " + msg);
  }

 private:
  std::istringstream in_;
  int line_no_;
};

}  // namespace

void WriteMap(std::ostream& out, const VisualMap& map) {
  int dim = 0;
  if (!map.points().empty()) {
    dim = static_cast<int>(map.points().begin()->second.descriptor.size());
  } else {
    for (const auto& [id, kf] : map.keyframes()) {
      if (!kf.keypoints.empty()) {
        dim = static_cast<int>(kf.keypoints.front().descriptor.size());
        break;
      }
    }
  }
  out << "HILOC-MAP v1\n";
  out << "META " << dim << ' ' << ChannelName(map.channel()) << '\n';
  out << std::setprecision(17);
  for (const auto& [id, kf] : map.keyframes()) {
    const Eigen::Quaterniond q = kf.pose.quaternion();
    const Vec3& t = kf.pose.translation();
    const auto& k = kf.intrinsics;
    out << "KF " << id << ' ' << kf.timestamp << ' ' << t.x() << ' ' << t.y() << ' '
        << t.z() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' ' << q.w() << ' '
        << k.fx << ' ' << k.fy << ' ' << k.cx << ' ' << k.cy << ' ' << k.width << ' '
        << k.height << '\n';
    for (size_t i = 0; i < kf.keypoints.size(); ++i) {
      const Keypoint& kp = kf.keypoints[i];
      out << "KP " << id << ' ' << i << ' ' << kp.pixel.x() << ' ' << kp.pixel.y()
          << ' ' << kp.score;
      WriteDescriptor(out, kp.descriptor);
      if (kf.is_stereo()) out << ' ' << kf.right_coords[i];
      out << '\n';
    }
  }
  for (const auto& [id, p] : map.points()) {
    out << "MP " << id << ' ' << p.position.x() << ' ' << p.position.y() << ' '
        << p.position.z() << ' ' << p.mean_view_dir.x() << ' ' << p.mean_view_dir.y()
        << ' ' << p.mean_view_dir.z();
    WriteDescriptor(out, p.descriptor);
    out << ' ' << ChannelName(p.channel) << '\n';
  }
  for (const auto& [id, p] : map.points()) {
    for (const Observation& obs : p.observations) {
      out << "OBS " << id << ' ' << obs.keyframe_id << ' ' << obs.keypoint_index << '\n';
    }
  }
}

VisualMap ReadMap(std::istream& in) {
  std::string line;
  int line_no = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") != std::string::npos) return true;
    }
    return false;
  };

  if (!next_line() || line != "HILOC-MAP v1") {
    throw Error(ErrorCode::kParse, "line 1: missing HILOC-MAP v1 header");
  }
  if (!next_line()) throw Error(ErrorCode::kParse, "missing META record");
  int dim = 0;
  Channel channel;
  {
    LineReader r(line, line_no);
    if (r.Next<std::string>("record") != "META") r.Fail("expected META record");
    dim = r.Next<int>("descriptor dim");
    channel = ParseChannel(r.Next<std::string>("channel"));
    if (dim < 0) r.Fail("negative descriptor dim");
  }

  VisualMap map(channel);
  std::vector<std::pair<int, std::pair<PointId, Observation>>> observations;
  while (next_line()) {
    LineReader r(line, line_no);
    const std::string tag = r.Next<std::string>("record tag");
    if (tag == "KF") {
      Keyframe kf;
      kf.id = r.Next<KeyframeId>("keyframe id");
      kf.timestamp = r.NextReal("timestamp");
      Vec3 t;
      for (int i = 0; i < 3; ++i) t[i] = r.NextReal("translation");
      double q[4];
      for (double& v : q) v = r.NextReal("quaternion");
      kf.intrinsics.fx = r.NextReal("fx");
      kf.intrinsics.fy = r.NextReal("fy");
      kf.intrinsics.cx = r.NextReal("cx");
      kf.intrinsics.cy = r.NextReal("cy");
      kf.intrinsics.width = r.Next<int>("width");
      kf.intrinsics.height = r.Next<int>("height");
      if (!r.AtEnd()) r.Fail("trailing tokens in KF record");
      try {
        kf.pose = Pose::FromQuaternion(Eigen::Quaterniond(q[3], q[0], q[1], q[2]), t);
        kf.intrinsics.Validate();
        map.AddKeyframe(std::move(kf));
      } catch (const Error& e) {
        r.Fail(e.what());
      }
    } else if (tag == "KP") {
      const KeyframeId kf_id = r.Next<KeyframeId>("keyframe id");
      const int idx = r.Next<int>("keypoint index");
      if (!map.HasKeyframe(kf_id)) r.Fail("KP references unknown keyframe");
      Keyframe& kf = map.mutable_keyframe(kf_id);
      if (idx != static_cast<int>(kf.keypoints.size())) {
        r.Fail("keypoint indices must be consecutive");
      }
      Keypoint kp;
      kp.pixel.x() = r.NextReal("u");
      kp.pixel.y() = r.NextReal("v");
      kp.score = r.NextReal("score");
      kp.descriptor = r.NextDescriptor(dim);
      kp.channel = channel;
      const auto rest = r.Rest();
      if (rest.size() > 1) r.Fail("trailing tokens in KP record");
      const bool has_right = rest.size() == 1;
      if (idx > 0 && has_right != kf.is_stereo()) {
        r.Fail("inconsistent stereo coordinates within keyframe");
      }
      if (has_right) kf.right_coords.push_back(std::strtod(rest[0].c_str(), nullptr));
      kf.keypoints.push_back(std::move(kp));
    } else if (tag == "MP") {
      MapPoint p;
      p.id = r.Next<PointId>("point id");
      for (int i = 0; i < 3; ++i) p.position[i] = r.NextReal("position");
      for (int i = 0; i < 3; ++i) p.mean_view_dir[i] = r.NextReal("view direction");
      p.descriptor = r.NextDescriptor(dim);
      p.channel = ParseChannel(r.Next<std::string>("channel"));
      if (!r.AtEnd()) r.Fail("trailing tokens in MP record");
      if (map.HasPoint(p.id)) r.Fail("duplicate point id");
      map.AddPoint(std::move(p));
    } else if (tag == "OBS") {
      const PointId pid = r.Next<PointId>("point id");
      Observation obs;
      obs.keyframe_id = r.Next<KeyframeId>("keyframe id");
      obs.keypoint_index = r.Next<int>("keypoint index");
      if (!r.AtEnd()) r.Fail("trailing tokens in OBS record");
      observations.push_back({line_no, {pid, obs}});
    } else {
      r.Fail("unknown record '" + tag + "'");
    }
  }

  for (const auto& [obs_line, rec] : observations) {
    const auto& [pid, obs] = rec;
    if (!map.HasPoint(pid)) {
      throw Error(ErrorCode::kIntegrity, "line " + std::to_string(obs_line) +
                                             ": observation of missing point " +
                                             std::to_string(pid));
    }
    try {
      map.AddObservation(pid, obs);
    } catch (const Error& e) {
      throw Error(ErrorCode::kIntegrity,
                  "line " + std::to_string(obs_line) + ": " + e.what());
    }
  }
  map.Validate();
  return map;
}

void SaveMap(const VisualMap& map, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  WriteMap(out, map);
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path);
}

VisualMap LoadMap(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path);
  return ReadMap(in);
}

}  // namespace hiloc
