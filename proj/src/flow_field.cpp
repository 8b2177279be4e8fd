#include "flatten/flow_field.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>

#include "flatten/error.hpp"

namespace flatten::flow {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[offset + i]) << (8 * i);
  return v;
}

}  // namespace

FlowField::FlowField(int width, int height) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw ArgumentError("flow field dimensions must be non-negative");
  const auto n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  fx_.assign(n, 0.0f);
  fy_.assign(n, 0.0f);
}

FlowField::FlowField(int width, int height, std::vector<float> fx, std::vector<float> fy)
    : width_(width), height_(height), fx_(std::move(fx)), fy_(std::move(fy)) {
  if (width < 0 || height < 0) throw ArgumentError("flow field dimensions must be non-negative");
  const auto n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (fx_.size() != n || fy_.size() != n) {
    throw ArgumentError("flow planes do not match " + std::to_string(width) + "x" + std::to_string(height));
  }
  validate();
}

void FlowField::validate() const {
  for (std::size_t i = 0; i < fx_.size(); ++i) {
    if (!std::isfinite(fx_[i]) || !std::isfinite(fy_[i])) {
      throw ValidationError("non-finite flow value at cell " + std::to_string(i % std::max(width_, 1)) + "," +
                            std::to_string(i / std::max(width_, 1)));
    }
  }
}

FlowSequence::FlowSequence(std::vector<FlowField> fields, int frame_count)
    : fields_(std::move(fields)), frame_count_(frame_count) {
  if (frame_count < 1) throw ArgumentError("a flow sequence needs at least one frame");
  if (fields_.size() != static_cast<std::size_t>(frame_count - 1)) {
    throw ArgumentError("expected " + std::to_string(frame_count - 1) + " flow fields, got " +
                        std::to_string(fields_.size()));
  }
  if (!fields_.empty()) {
    width_ = fields_.front().width();
    height_ = fields_.front().height();
    for (const auto& f : fields_) {
      if (f.width() != width_ || f.height() != height_) {
        throw ArgumentError("flow fields in a sequence must share dimensions");
      }
    }
  }
}

FlowSequence::FlowSequence(std::vector<FlowField> fields) {
  if (fields.empty()) throw ArgumentError("frame count is ambiguous for an empty flow list");
  const int frames = static_cast<int>(fields.size()) + 1;
  *this = FlowSequence(std::move(fields), frames);
}

std::vector<std::uint8_t> encode_flo(const FlowField& field) {
  field.validate();
  std::vector<std::uint8_t> out;
  out.reserve(12 + 8 * field.fx_plane().size());
  put_u32(out, std::bit_cast<std::uint32_t>(kFloMagic));
  put_u32(out, static_cast<std::uint32_t>(field.width()));
  put_u32(out, static_cast<std::uint32_t>(field.height()));
  for (std::size_t i = 0; i < field.fx_plane().size(); ++i) {
    put_u32(out, std::bit_cast<std::uint32_t>(field.fx_plane()[i]));
    put_u32(out, std::bit_cast<std::uint32_t>(field.fy_plane()[i]));
  }
  return out;
}

FlowField decode_flo(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4) throw IoError(".flo payload truncated before magic tag");
  if (std::bit_cast<float>(get_u32(bytes, 0)) != kFloMagic) {
    throw FormatError("bad .flo magic tag (expected \"PIEH\")");
  }
  if (bytes.size() < 12) throw IoError(".flo payload truncated inside header");
  const auto width = static_cast<std::int32_t>(get_u32(bytes, 4));
  const auto height = static_cast<std::int32_t>(get_u32(bytes, 8));
  if (width < 0 || height < 0 || width > (1 << 20) || height > (1 << 20)) {
    throw FormatError("implausible .flo dimensions " + std::to_string(width) + "x" + std::to_string(height));
  }
  const auto n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() < 12 + 8 * n) {
    throw IoError(".flo payload truncated: expected " + std::to_string(12 + 8 * n) + " bytes, got " +
                  std::to_string(bytes.size()));
  }
  std::vector<float> fx(n), fy(n);
  for (std::size_t i = 0; i < n; ++i) {
    fx[i] = std::bit_cast<float>(get_u32(bytes, 12 + 8 * i));
    fy[i] = std::bit_cast<float>(get_u32(bytes, 16 + 8 * i));
  }
  return FlowField(width, height, std::move(fx), std::move(fy));
}

FlowField load_flo(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_flo(bytes);
}

void write_flo(const FlowField& field, const std::filesystem::path& path) {
  const auto bytes = encode_flo(field);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

FlowField downsample_flow(const FlowField& field, int factor) {
  if (factor < 1) throw ArgumentError("downsample factor must be positive");
  if (field.width() % factor != 0 || field.height() % factor != 0) {
    throw ArgumentError("flow dimensions " + std::to_string(field.width()) + "x" + std::to_string(field.height()) +
                        " are not divisible by " + std::to_string(factor));
  }
  const int w = field.width() / factor;
  const int h = field.height() / factor;
  const double norm = 1.0 / (static_cast<double>(factor) * factor * factor);
  FlowField out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double sx = 0.0, sy = 0.0;
      for (int j = 0; j < factor; ++j) {
        for (int i = 0; i < factor; ++i) {
          sx += field.fx(x * factor + i, y * factor + j);
          sy += field.fy(x * factor + i, y * factor + j);
        }
      }
      out.set(x, y, static_cast<float>(sx * norm), static_cast<float>(sy * norm));
    }
  }
  return out;
}

FlowSequence downsample_flows(const FlowSequence& flows, int factor) {
  std::vector<FlowField> fields;
  fields.reserve(flows.size());
  for (const auto& f : flows.fields()) fields.push_back(downsample_flow(f, factor));
  return FlowSequence(std::move(fields), flows.frame_count());
}

std::pair<double, double> project_coords(double x, double y, const FlowField& field) {
  const double rx = std::round(x);
  const double ry = std::round(y);
  if (!(rx >= 0.0 && ry >= 0.0 && rx < field.width() && ry < field.height())) {
    std::ostringstream msg;
    msg << "coordinates (" << x << ", " << y << ") fall outside the " << field.width() << "x" << field.height()
        << " flow field";
    throw DomainError(msg.str());
  }
  const int cx = static_cast<int>(rx);
  const int cy = static_cast<int>(ry);
  return {x + field.fx(cx, cy), y + field.fy(cx, cy)};
}

namespace {

struct MotionSampler {
  double x;
  double y;

  std::pair<double, double> operator()(const ConstantMotion& m) const { return {m.dx, m.dy}; }

  std::pair<double, double> operator()(const RotationMotion& m) const {
    const double ox = x - m.cx;
    const double oy = y - m.cy;
    const double c = std::cos(m.angle);
    const double s = std::sin(m.angle);
    return {c * ox - s * oy - ox, s * ox + c * oy - oy};
  }

  std::pair<double, double> operator()(const ZoomMotion& m) const {
    return {(m.scale - 1.0) * (x - m.cx), (m.scale - 1.0) * (y - m.cy)};
  }
};

}  // namespace

FlowField synth_flow(const Motion& motion, int width, int height) {
  if (width < 1 || height < 1) throw ArgumentError("synthetic flow dimensions must be positive");
  FlowField out(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const auto [dx, dy] = std::visit(MotionSampler{static_cast<double>(x), static_cast<double>(y)}, motion);
      out.set(x, y, static_cast<float>(dx), static_cast<float>(dy));
    }
  }
  return out;
}

FlowField perturb_flow(const FlowField& field, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ArgumentError("noise sigma must be finite and >= 0");
  if (sigma == 0.0) return field;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  std::vector<float> fx = field.fx_plane();
  std::vector<float> fy = field.fy_plane();
  for (std::size_t i = 0; i < fx.size(); ++i) {
    fx[i] = static_cast<float>(fx[i] + noise(rng));
    fy[i] = static_cast<float>(fy[i] + noise(rng));
  }
  return FlowField(field.width(), field.height(), std::move(fx), std::move(fy));
}

}  // namespace flatten::flow
