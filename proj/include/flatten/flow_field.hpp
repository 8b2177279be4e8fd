#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <variant>
#include <vector>

namespace flatten::flow {

/// Dense displacement field on a width x height grid. Displacements are
/// expressed in units of the field's own grid spacing. Storage is float32
/// so that .flo files round-trip bit-exactly.
class FlowField {
 public:
  FlowField() = default;

  /// Zero field of the given size.
  FlowField(int width, int height);

  /// Takes ownership of row-major planes; throws ArgumentError on a size
  /// mismatch and ValidationError on non-finite entries.
  FlowField(int width, int height, std::vector<float> fx, std::vector<float> fy);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return width_ == 0 || height_ == 0; }

  float fx(int x, int y) const { return fx_[index(x, y)]; }
  float fy(int x, int y) const { return fy_[index(x, y)]; }
  void set(int x, int y, float dx, float dy) {
    fx_[index(x, y)] = dx;
    fy_[index(x, y)] = dy;
  }

  const std::vector<float>& fx_plane() const { return fx_; }
  const std::vector<float>& fy_plane() const { return fy_; }

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  /// Throws ValidationError if any value is NaN or infinite.
  void validate() const;

  friend bool operator==(const FlowField&, const FlowField&) = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<float> fx_;
  std::vector<float> fy_;
};

/// Flows between consecutive frames: fields[k] maps frame k to frame k+1.
class FlowSequence {
 public:
  FlowSequence() = default;

  /// A single-frame video has no flows; pass frame_count explicitly.
  FlowSequence(std::vector<FlowField> fields, int frame_count);

  /// frame_count is fields.size() + 1; requires at least one field.
  explicit FlowSequence(std::vector<FlowField> fields);

  int frame_count() const { return frame_count_; }
  int width() const { return width_; }
  int height() const { return height_; }
  const std::vector<FlowField>& fields() const { return fields_; }
  const FlowField& operator[](std::size_t k) const { return fields_[k]; }
  std::size_t size() const { return fields_.size(); }

 private:
  std::vector<FlowField> fields_;
  int frame_count_ = 0;
  int width_ = 0;
  int height_ = 0;
};

// Middlebury .flo ------------------------------------------------------------

inline constexpr float kFloMagic = 202021.25f;  // "PIEH" read as a float

FlowField load_flo(const std::filesystem::path& path);
void write_flo(const FlowField& field, const std::filesystem::path& path);

/// In-memory encoding, shared by the file functions.
std::vector<std::uint8_t> encode_flo(const FlowField& field);
FlowField decode_flo(const std::vector<std::uint8_t>& bytes);

// Operations -----------------------------------------------------------------

/// Mean-pools factor x factor blocks and divides by `factor`, so the result is
/// expressed in the coarse grid's spacing.
FlowField downsample_flow(const FlowField& field, int factor);
FlowSequence downsample_flows(const FlowSequence& flows, int factor);

/// Moves (x, y) along the flow sampled at the nearest grid cell. Throws
/// DomainError when the rounded coordinates fall outside the field.
std::pair<double, double> project_coords(double x, double y, const FlowField& field);

struct ConstantMotion {
  double dx = 0.0;
  double dy = 0.0;
};

/// Rotation by `angle` radians about (cx, cy); positive angles turn +x
/// towards +y.
struct RotationMotion {
  double angle = 0.0;
  double cx = 0.0;
  double cy = 0.0;
};

/// Scaling by `scale` about (cx, cy).
struct ZoomMotion {
  double scale = 1.0;
  double cx = 0.0;
  double cy = 0.0;
};

using Motion = std::variant<ConstantMotion, RotationMotion, ZoomMotion>;

/// Analytic displacement field of `motion` sampled at integer cell coordinates.
FlowField synth_flow(const Motion& motion, int width, int height);

/// Adds i.i.d. N(0, sigma^2) noise to both components. sigma == 0 returns an
/// exact copy.
FlowField perturb_flow(const FlowField& field, double sigma, std::uint64_t seed);

}  // namespace flatten::flow
