#include "flatten/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <string>

#include "flatten/error.hpp"

namespace flatten {

Image::Image(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 0 || height < 0 || channels < 1) throw ArgumentError("invalid image shape");
  data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Image Image::plane(int c) const {
  if (c < 0 || c >= channels_) throw ArgumentError("channel index out of range");
  Image out(width_, height_, 1);
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) out.at(x, y, 0) = at(x, y, c);
  return out;
}

void Image::clamp_unit() {
  for (double& v : data_) v = std::clamp(v, 0.0, 1.0);
}

void check_uniform(const ImageSequence& frames) {
  for (const auto& f : frames) {
    if (!f.same_shape(frames.front())) throw ArgumentError("frames in a sequence must share one shape");
  }
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + img.message);
  }
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int channels = color ? 3 : 1;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError("cannot decode PNG " + path.string() + ": " + img.message);
  }
  Image out(static_cast<int>(img.width), static_cast<int>(img.height), channels);
  for (std::size_t i = 0; i < buffer.size(); ++i) out.data()[i] = buffer[i] / 255.0;
  return out;
}

void write_png(const Image& image, const std::filesystem::path& path) {
  if (image.channels() != 1 && image.channels() != 3) {
    throw ArgumentError("PNG output supports 1 or 3 channels, got " + std::to_string(image.channels()));
  }
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width());
  img.height = static_cast<png_uint_32>(image.height());
  img.format = image.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(image.data().size());
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    buffer[i] = static_cast<png_byte>(std::lround(std::clamp(image.data()[i], 0.0, 1.0) * 255.0));
  }
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot write " + path.string());
  if (!png_image_write_to_stdio(&img, file.get(), 0, buffer.data(), 0, nullptr)) {
    throw IoError("PNG encoding failed for " + path.string() + ": " + img.message);
  }
}

}  // namespace flatten
