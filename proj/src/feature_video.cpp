#include "flatten/feature_video.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "flatten/error.hpp"

namespace flatten {

FeatureVideo::FeatureVideo(int frames, int height, int width, int channels)
    : FeatureVideo(frames, height, width, channels,
                   Matrix::Zero(static_cast<Eigen::Index>(frames) * height * width, channels)) {}

FeatureVideo::FeatureVideo(int frames, int height, int width, int channels, Matrix tokens)
    : frames_(frames), height_(height), width_(width), channels_(channels), tokens_(std::move(tokens)) {
  if (frames < 1 || height < 1 || width < 1 || channels < 1) {
    throw ArgumentError("feature video dimensions must be positive");
  }
  if (tokens_.rows() != static_cast<Eigen::Index>(frames) * height * width || tokens_.cols() != channels) {
    throw ArgumentError("token matrix is " + std::to_string(tokens_.rows()) + "x" + std::to_string(tokens_.cols()) +
                        ", expected " + std::to_string(static_cast<long>(frames) * height * width) + "x" +
                        std::to_string(channels));
  }
}

FeatureVideo FeatureVideo::with_tokens(Matrix tokens) const {
  return FeatureVideo(frames_, height_, width_, channels_, std::move(tokens));
}

void FeatureVideo::validate() const {
  if (!tokens_.allFinite()) throw ValidationError("feature video contains non-finite values");
}

bool operator==(const FeatureVideo& a, const FeatureVideo& b) {
  if (!a.same_shape(b)) return false;
  const auto n = static_cast<std::size_t>(a.tokens_.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (std::bit_cast<std::uint64_t>(a.tokens_.data()[i]) != std::bit_cast<std::uint64_t>(b.tokens_.data()[i])) {
      return false;
    }
  }
  return true;
}

FeatureVideo random_feature_video(int frames, int height, int width, int channels, std::uint64_t seed) {
  FeatureVideo out(frames, height, width, channels);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  double* p = out.tokens().data();
  for (Eigen::Index i = 0; i < out.tokens().size(); ++i) p[i] = normal(rng);
  return out;
}

double max_abs_diff(const FeatureVideo& a, const FeatureVideo& b) {
  if (!a.same_shape(b)) throw ArgumentError("max_abs_diff: shape mismatch");
  return (a.tokens() - b.tokens()).cwiseAbs().maxCoeff();
}

double relative_error(const FeatureVideo& a, const FeatureVideo& b) {
  if (!a.same_shape(b)) throw ArgumentError("relative_error: shape mismatch");
  const double num = (a.tokens() - b.tokens()).norm();
  const double den = b.tokens().norm();
  return den > 0.0 ? num / den : num;
}

std::filesystem::path sidecar_path(const std::filesystem::path& blob) {
  auto p = blob;
  p += ".json";
  return p;
}

void write_feature_video(const FeatureVideo& video, const std::filesystem::path& blob, BlobType type) {
  video.validate();
  const auto n = static_cast<std::size_t>(video.tokens().size());
  const std::size_t width = type == BlobType::float32 ? 4 : 8;
  std::vector<char> bytes(n * width);
  const double* src = video.tokens().data();
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits = type == BlobType::float32 ? std::bit_cast<std::uint32_t>(static_cast<float>(src[i]))
                                                   : std::bit_cast<std::uint64_t>(src[i]);
    for (std::size_t b = 0; b < width; ++b) bytes[i * width + b] = static_cast<char>((bits >> (8 * b)) & 0xffu);
  }
  std::ofstream out(blob, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + blob.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + blob.string());

  nlohmann::json meta = {{"frames", video.frames()},
                         {"height", video.height()},
                         {"width", video.width()},
                         {"channels", video.channels()},
                         {"dtype", type == BlobType::float32 ? "float32" : "float64"}};
  std::ofstream side(sidecar_path(blob), std::ios::trunc);
  if (!side) throw IoError("cannot write " + sidecar_path(blob).string());
  side << meta.dump(2) << '\n';
}

FeatureVideo read_feature_video(const std::filesystem::path& blob) {
  std::ifstream side(sidecar_path(blob));
  if (!side) throw IoError("missing sidecar " + sidecar_path(blob).string());
  nlohmann::json meta;
  int frames = 0, height = 0, width = 0, channels = 0;
  std::string dtype = "float32";
  try {
    side >> meta;
    frames = meta.at("frames").get<int>();
    height = meta.at("height").get<int>();
    width = meta.at("width").get<int>();
    channels = meta.at("channels").get<int>();
    if (meta.contains("dtype")) dtype = meta.at("dtype").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad feature video sidecar " + sidecar_path(blob).string() + ": " + e.what());
  }
  if (dtype != "float32" && dtype != "float64") throw FormatError("unsupported dtype " + dtype);
  const std::size_t sample = dtype == "float32" ? 4 : 8;

  std::ifstream in(blob, std::ios::binary);
  if (!in) throw IoError("cannot open " + blob.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  FeatureVideo out(frames, height, width, channels);
  const auto n = static_cast<std::size_t>(out.tokens().size());
  if (bytes.size() != n * sample) {
    throw IoError("blob " + blob.string() + " has " + std::to_string(bytes.size()) + " bytes, expected " +
                  std::to_string(n * sample));
  }
  double* dst = out.tokens().data();
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits = 0;
    for (std::size_t b = 0; b < sample; ++b) bits |= static_cast<std::uint64_t>(bytes[i * sample + b]) << (8 * b);
    dst[i] = sample == 4 ? static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(bits)))
                         : std::bit_cast<double>(bits);
  }
  out.validate();
  return out;
}

}  // namespace flatten
