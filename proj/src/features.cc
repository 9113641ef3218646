#include "hiloc/features.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "hiloc/error.h"

namespace hiloc {

const char* ChannelName(Channel channel) {
  return channel == Channel::kHandcrafted ? "handcrafted" : "learned";
}

Channel ParseChannel(const std::string& name) {
  if (name == "handcrafted") return Channel::kHandcrafted;
  if (name == "learned") return Channel::kLearned;
  throw Error(ErrorCode::kParse, "unknown channel '" + name + "'");
}

FeatureGrid::FeatureGrid(int height, int width, int descriptor_dim,
                         std::vector<double> scores,
                         std::vector<double> descriptors)
    : height_(height),
      width_(width),
      dim_(descriptor_dim),
      scores_(std::move(scores)),
      descriptors_(std::move(descriptors)) {
  if (height <= 0 || width <= 0 || height % kCellSize != 0 ||
      width % kCellSize != 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "grid size must be a positive multiple of 8");
  }
  if (descriptor_dim < 1) {
    throw Error(ErrorCode::kInvalidArgument, "descriptor dim must be >= 1");
  }
  if (scores_.size() != static_cast<size_t>(height) * width) {
    throw Error(ErrorCode::kInvalidArgument, "score map size mismatch");
  }
  if (descriptors_.size() !=
      static_cast<size_t>(cell_rows()) * cell_cols() * dim_) {
    throw Error(ErrorCode::kInvalidArgument, "descriptor map size mismatch");
  }
  for (double s : scores_) {
    if (!std::isfinite(s) || s < 0.0) {
      throw Error(ErrorCode::kInvalidArgument,
                  "scores must be finite and non-negative");
    }
  }
  for (double d : descriptors_) {
    if (!std::isfinite(d)) {
      throw Error(ErrorCode::kInvalidArgument, "non-finite descriptor value");
    }
  }
}

FeatureGrid::FeatureGrid(int height, int width, int descriptor_dim)
    : FeatureGrid(height, width, descriptor_dim,
                  std::vector<double>(static_cast<size_t>(std::max(height, 0)) *
                                      std::max(width, 0)),
                  std::vector<double>(static_cast<size_t>(std::max(height, 0) / 8) *
                                      (std::max(width, 0) / 8) *
                                      std::max(descriptor_dim, 0))) {}

void FeatureGrid::set_score(int row, int col, double value) {
  if (!std::isfinite(value) || value < 0.0) {
    throw Error(ErrorCode::kInvalidArgument,
                "scores must be finite and non-negative");
  }
  scores_[row * width_ + col] = value;
}

void WriteGrid(std::ostream& out, const FeatureGrid& grid) {
  out << "HILOC-GRID v1 " << grid.height() << ' ' << grid.width() << ' '
      << grid.descriptor_dim() << '\n';
  out << std::setprecision(17);
  for (int r = 0; r < grid.height(); ++r) {
    for (int c = 0; c < grid.width(); ++c) {
      if (c) out << ' ';
      out << grid.score(r, c);
    }
    out << '\n';
  }
  for (int r = 0; r < grid.cell_rows(); ++r) {
    for (int c = 0; c < grid.cell_cols(); ++c) {
      const auto cell = grid.cell(r, c);
      for (size_t d = 0; d < cell.size(); ++d) {
        if (d) out << ' ';
        out << cell[d];
      }
      out << '\n';
    }
  }
}

FeatureGrid ReadGrid(std::istream& in) {
  std::string magic, version;
  int h = 0, w = 0, d = 0;
  if (!(in >> magic >> version >> h >> w >> d) || magic != "HILOC-GRID" ||
      version != "v1") {
    throw Error(ErrorCode::kParse, "missing HILOC-GRID v1 header");
  }
  if (h <= 0 || w <= 0 || d <= 0) {
    throw Error(ErrorCode::kParse, "bad grid dimensions");
  }
  std::vector<double> scores(static_cast<size_t>(h) * w);
  for (double& s : scores) {
    if (!(in >> s)) throw Error(ErrorCode::kParse, "truncated score map");
  }
  std::vector<double> desc(static_cast<size_t>(h / 8) * (w / 8) * d);
  for (double& v : desc) {
    if (!(in >> v)) throw Error(ErrorCode::kParse, "truncated descriptor map");
  }
  try {
    return FeatureGrid(h, w, d, std::move(scores), std::move(desc));
  } catch (const Error& e) {
    throw Error(ErrorCode::kParse, e.what());
  }
}

void SaveGrid(const std::string& path, const FeatureGrid& grid) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  WriteGrid(out, grid);
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path);
}

FeatureGrid LoadGrid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path);
  return ReadGrid(in);
}

double DefaultMinSpacing(int height, int width, int max_count) {
  return std::ceil(std::sqrt(static_cast<double>(height) * width /
                             (2.0 * std::max(max_count, 1))));
}

namespace {

bool IsStrictLocalMax(const FeatureGrid& grid, int r, int c) {
  const double s = grid.score(r, c);
  for (int dr = -1; dr <= 1; ++dr) {
    for (int dc = -1; dc <= 1; ++dc) {
      if (!dr && !dc) continue;
      const int rr = r + dr, cc = c + dc;
      if (rr < 0 || cc < 0 || rr >= grid.height() || cc >= grid.width()) {
        continue;
      }
      if (grid.score(rr, cc) >= s) return false;
    }
  }
  return true;
}

}  // namespace

std::vector<Keypoint> DetectKeypoints(const FeatureGrid& grid, int max_count,
                                      double min_spacing) {
  if (grid.height() < 3 || grid.width() < 3) {
    throw Error(ErrorCode::kInvalidArgument, "grid smaller than 3x3");
  }
  if (max_count < 1 || !(min_spacing >= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "max_count and min_spacing must be >= 1");
  }

  struct Candidate {
    double score;
    int row;
    int col;
  };
  std::vector<Candidate> maxima;
  for (int r = 0; r < grid.height(); ++r) {
    for (int c = 0; c < grid.width(); ++c) {
      if (IsStrictLocalMax(grid, r, c)) maxima.push_back({grid.score(r, c), r, c});
    }
  }
  std::sort(maxima.begin(), maxima.end(),
            [](const Candidate& a, const Candidate& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.row != b.row) return a.row < b.row;
              return a.col < b.col;
            });

  // Occupancy buckets of side min_spacing: any conflicting accepted point
  // lies in the 3x3 bucket neighbourhood.
  const int bucket_rows = static_cast<int>(grid.height() / min_spacing) + 1;
  const int bucket_cols = static_cast<int>(grid.width() / min_spacing) + 1;
  std::vector<std::vector<std::pair<int, int>>> buckets(
      static_cast<size_t>(bucket_rows) * bucket_cols);
  const double spacing2 = min_spacing * min_spacing;

  std::vector<Keypoint> out;
  for (const Candidate& m : maxima) {
    if (static_cast<int>(out.size()) >= max_count) break;
    const int br = static_cast<int>(m.row / min_spacing);
    const int bc = static_cast<int>(m.col / min_spacing);
    bool ok = true;
    for (int dr = -1; dr <= 1 && ok; ++dr) {
      for (int dc = -1; dc <= 1 && ok; ++dc) {
        const int rr = br + dr, cc = bc + dc;
        if (rr < 0 || cc < 0 || rr >= bucket_rows || cc >= bucket_cols) continue;
        for (const auto& [pr, pc] : buckets[rr * bucket_cols + cc]) {
          const double d2 = static_cast<double>(pr - m.row) * (pr - m.row) +
                            static_cast<double>(pc - m.col) * (pc - m.col);
          if (d2 < spacing2) {
            ok = false;
            break;
          }
        }
      }
    }
    if (!ok) continue;
    buckets[br * bucket_cols + bc].emplace_back(m.row, m.col);
    Keypoint kp;
    kp.pixel = Vec2(m.col, m.row);
    kp.score = m.score;
    kp.descriptor = SampleDescriptor(grid, kp.pixel).descriptor;
    kp.channel = Channel::kLearned;
    out.push_back(std::move(kp));
  }
  return out;
}

Descriptor InterpolateDescriptor(const FeatureGrid& grid, const Vec2& pixel) {
  if (!pixel.allFinite() || pixel.x() < 0.0 || pixel.y() < 0.0 ||
      pixel.x() >= grid.width() || pixel.y() >= grid.height()) {
    throw Error(ErrorCode::kInvalidArgument, "pixel outside the grid");
  }
  const double cell = FeatureGrid::kCellSize;
  const double x = std::clamp((pixel.x() + 0.5) / cell - 0.5, 0.0,
                              static_cast<double>(grid.cell_cols() - 1));
  const double y = std::clamp((pixel.y() + 0.5) / cell - 0.5, 0.0,
                              static_cast<double>(grid.cell_rows() - 1));
  const int c0 = static_cast<int>(std::floor(x));
  const int r0 = static_cast<int>(std::floor(y));
  const int c1 = std::min(c0 + 1, grid.cell_cols() - 1);
  const int r1 = std::min(r0 + 1, grid.cell_rows() - 1);
  const double ax = x - c0;
  const double ay = y - r0;

  const int dim = grid.descriptor_dim();
  auto cell_vec = [&](int r, int c) {
    const auto s = grid.cell(r, c);
    return Eigen::Map<const Eigen::VectorXd>(s.data(), dim);
  };
  Descriptor out = (1.0 - ay) * ((1.0 - ax) * cell_vec(r0, c0) + ax * cell_vec(r0, c1)) +
                   ay * ((1.0 - ax) * cell_vec(r1, c0) + ax * cell_vec(r1, c1));
  return out;
}

SampledDescriptor SampleDescriptor(const FeatureGrid& grid, const Vec2& pixel) {
  SampledDescriptor result;
  result.descriptor = InterpolateDescriptor(grid, pixel);
  const double n = result.descriptor.norm();
  if (n < 1e-12) {
    result.descriptor.setZero();
    result.descriptor[0] = 1.0;
    result.degenerate = true;
  } else {
    result.descriptor /= n;
  }
  return result;
}

std::optional<DescriptorMatch> MatchDescriptor(
    const Descriptor& query, std::span<const Keypoint> candidates,
    std::span<const size_t> subset, const DescriptorMatchParams& params) {
  if (!(params.ratio > 0.0 && params.ratio <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "ratio must be in (0, 1]");
  }
  double best = std::numeric_limits<double>::infinity();
  double second = std::numeric_limits<double>::infinity();
  size_t best_index = 0;
  for (size_t i : subset) {
    const Descriptor& d = candidates[i].descriptor;
    if (d.size() != query.size()) {
      throw Error(ErrorCode::kInvalidArgument, "descriptor dimension mismatch");
    }
    const double dist = (d - query).norm();
    if (dist < best) {
      second = best;
      best = dist;
      best_index = i;
    } else if (dist < second) {
      second = dist;
    }
  }
  if (!(best <= params.max_distance) || !(best <= params.ratio * second)) {
    return std::nullopt;
  }
  return DescriptorMatch{best_index, best};
}

std::optional<DescriptorMatch> MatchDescriptor(
    const Descriptor& query, std::span<const Keypoint> candidates,
    const DescriptorMatchParams& params) {
  std::vector<size_t> all(candidates.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = i;
  return MatchDescriptor(query, candidates, all, params);
}

}  // namespace hiloc
