#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <Eigen/Core>

namespace flatten {

/// Row-major matrix; feature videos keep one token per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

/// Latent features of a video: frames x height x width patches, each a
/// `channels`-vector. Row (k * height + y) * width + x of `tokens()` holds
/// patch (k, x, y).
class FeatureVideo {
 public:
  FeatureVideo() = default;
  FeatureVideo(int frames, int height, int width, int channels);
  FeatureVideo(int frames, int height, int width, int channels, Matrix tokens);

  int frames() const { return frames_; }
  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  Eigen::Index token_count() const { return tokens_.rows(); }

  const Matrix& tokens() const { return tokens_; }
  Matrix& tokens() { return tokens_; }

  Eigen::Index row(int frame, int x, int y) const {
    return (static_cast<Eigen::Index>(frame) * height_ + y) * width_ + x;
  }
  auto patch(int frame, int x, int y) { return tokens_.row(row(frame, x, y)); }
  auto patch(int frame, int x, int y) const { return tokens_.row(row(frame, x, y)); }

  bool same_shape(const FeatureVideo& o) const {
    return frames_ == o.frames_ && height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }

  /// Same shape, new contents.
  FeatureVideo with_tokens(Matrix tokens) const;

  /// Throws ValidationError on NaN/Inf.
  void validate() const;

  /// Bitwise equality of shape and contents.
  friend bool operator==(const FeatureVideo& a, const FeatureVideo& b);

 private:
  int frames_ = 0;
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  Matrix tokens_;
};

/// Standard-normal entries from a seeded generator.
FeatureVideo random_feature_video(int frames, int height, int width, int channels, std::uint64_t seed);

/// Largest absolute elementwise difference; shapes must agree.
double max_abs_diff(const FeatureVideo& a, const FeatureVideo& b);

/// ||a - b|| / ||b|| in the Frobenius norm (plain ||a|| when b is zero).
double relative_error(const FeatureVideo& a, const FeatureVideo& b);

// Blob format: raw little-endian samples with a JSON sidecar
// {frames, height, width, channels[, dtype]} written next to it as
// <blob>.json. dtype is "float32" (default) or "float64".
enum class BlobType { float32, float64 };

void write_feature_video(const FeatureVideo& video, const std::filesystem::path& blob,
                         BlobType type = BlobType::float32);
FeatureVideo read_feature_video(const std::filesystem::path& blob);

std::filesystem::path sidecar_path(const std::filesystem::path& blob);

}  // namespace flatten
