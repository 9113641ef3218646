#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hiloc/geometry.h"

namespace hiloc {

using Descriptor = Eigen::VectorXd;

enum class Channel { kHandcrafted, kLearned };

const char* ChannelName(Channel channel);
/// Throws kParse on an unknown name.
Channel ParseChannel(const std::string& name);

/// Dense keypoint score map (H x W) plus a coarse descriptor map
/// (H/8 x W/8 x D). Both stored row-major.
class FeatureGrid {
 public:
  static constexpr int kCellSize = 8;

  /// Throws kInvalidArgument unless H and W are positive multiples of 8,
  /// D >= 1, sizes match and scores are finite and non-negative.
  FeatureGrid(int height, int width, int descriptor_dim,
              std::vector<double> scores, std::vector<double> descriptors);

  /// Zero-filled grid.
  FeatureGrid(int height, int width, int descriptor_dim);

  int height() const { return height_; }
  int width() const { return width_; }
  int descriptor_dim() const { return dim_; }
  int cell_rows() const { return height_ / kCellSize; }
  int cell_cols() const { return width_ / kCellSize; }

  double score(int row, int col) const { return scores_[row * width_ + col]; }
  void set_score(int row, int col, double value);

  std::span<const double> cell(int cell_row, int cell_col) const {
    return {descriptors_.data() + (cell_row * cell_cols() + cell_col) * dim_,
            static_cast<size_t>(dim_)};
  }
  std::span<double> mutable_cell(int cell_row, int cell_col) {
    return {descriptors_.data() + (cell_row * cell_cols() + cell_col) * dim_,
            static_cast<size_t>(dim_)};
  }

  const std::vector<double>& scores() const { return scores_; }
  const std::vector<double>& descriptors() const { return descriptors_; }

 private:
  int height_;
  int width_;
  int dim_;
  std::vector<double> scores_;
  std::vector<double> descriptors_;
};

/// Text fixture format: header line "HILOC-GRID v1 H W D", then the score
/// map one row per line, then the descriptor map one cell per line.
/// Values are written with 17 significant digits.
void WriteGrid(std::ostream& out, const FeatureGrid& grid);
FeatureGrid ReadGrid(std::istream& in);
void SaveGrid(const std::string& path, const FeatureGrid& grid);
FeatureGrid LoadGrid(const std::string& path);

struct Keypoint {
  Vec2 pixel = Vec2::Zero();  // (u, v) = (column, row)
  double score = 0.0;
  Descriptor descriptor;
  Channel channel = Channel::kLearned;
};

/// Strict 3x3 local maxima of the score map thinned by greedy
/// score-ordered acceptance with a minimum pairwise spacing. Neighbours
/// outside the image are ignored, so border pixels can qualify. Ties in
/// score are broken by (row, col). Descriptors are sampled from the grid.
std::vector<Keypoint> DetectKeypoints(const FeatureGrid& grid, int max_count,
                                      double min_spacing);

/// ceil(sqrt(H * W / (2 * max_count))).
double DefaultMinSpacing(int height, int width, int max_count);

struct SampledDescriptor {
  Descriptor descriptor;
  bool degenerate = false;  // interpolated vector was zero
};

/// Bilinear sample of the descriptor map at a pixel. Cell (r, c) is centred
/// on pixel (8c + 3.5, 8r + 3.5); positions outside the outermost centres
/// clamp. The result is L2-normalised; a zero vector yields e0 with the
/// degenerate flag set. Throws kInvalidArgument for pixels outside the
/// image.
SampledDescriptor SampleDescriptor(const FeatureGrid& grid, const Vec2& pixel);

/// Unnormalised bilinear interpolation used by SampleDescriptor.
Descriptor InterpolateDescriptor(const FeatureGrid& grid, const Vec2& pixel);

struct DescriptorMatchParams {
  double max_distance = 0.7;
  double ratio = 0.9;
};

struct DescriptorMatch {
  size_t index = 0;
  double distance = 0.0;
};

/// Nearest candidate by L2 distance, accepted when it is within
/// max_distance and passes the ratio test against the second best.
/// Throws kInvalidArgument on a dimension mismatch or ratio outside (0, 1].
std::optional<DescriptorMatch> MatchDescriptor(
    const Descriptor& query, std::span<const Keypoint> candidates,
    const DescriptorMatchParams& params = {});

/// Same, over an index subset of candidates. Returned index refers to
/// the full candidate list.
std::optional<DescriptorMatch> MatchDescriptor(
    const Descriptor& query, std::span<const Keypoint> candidates,
    std::span<const size_t> subset, const DescriptorMatchParams& params);

}  // namespace hiloc
