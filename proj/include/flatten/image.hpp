#pragma once

#include <filesystem>
#include <vector>

namespace flatten {

/// Interleaved H x W x C image with real values, nominally in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, double fill = 0.0);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool same_shape(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }

  double& at(int x, int y, int c) { return data_[offset(x, y, c)]; }
  double at(int x, int y, int c) const { return data_[offset(x, y, c)]; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  /// Single-channel copy of channel `c`.
  Image plane(int c) const;

  /// Clamps every value into [0, 1].
  void clamp_unit();

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t offset(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// K frames of identical shape.
using ImageSequence = std::vector<Image>;

/// Throws ArgumentError unless all frames share one shape.
void check_uniform(const ImageSequence& frames);

/// 8-bit PNG, gray/gray+alpha/RGB/RGBA. Values map linearly onto [0, 1];
/// alpha is dropped on read.
Image read_png(const std::filesystem::path& path);
void write_png(const Image& image, const std::filesystem::path& path);

}  // namespace flatten
