#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "flatten/flow_field.hpp"
#include "flatten/image.hpp"

namespace flatten::traj {

/// One latent patch: frame index and grid cell.
struct PatchRef {
  int frame = 0;
  int x = 0;
  int y = 0;

  friend bool operator==(const PatchRef&, const PatchRef&) = default;
  friend auto operator<=>(const PatchRef&, const PatchRef&) = default;
};

enum class StopReason { completed, occluded, out_of_bounds };

std::string_view to_string(StopReason reason);
StopReason stop_reason_from_string(std::string_view name);

struct Trajectory {
  int id = 0;
  std::vector<PatchRef> patches;
  StopReason stop_reason = StopReason::completed;

  int first_frame() const { return patches.front().frame; }
  int last_frame() const { return patches.back().frame; }
  std::size_t size() const { return patches.size(); }
};

/// Where a patch sits: index of the owning trajectory in
/// `TrajectorySet::trajectories()` and the patch's position on it.
struct Membership {
  int trajectory = -1;
  int position = -1;
};

/// Trajectories over a frames x height x width patch grid. Sets built by
/// `sample_trajectories` partition the grid; sets read from disk may not,
/// which is what `validate_partition` is for.
class TrajectorySet {
 public:
  TrajectorySet() = default;
  TrajectorySet(int frame_count, int height, int width, std::vector<Trajectory> trajectories);

  int frame_count() const { return frame_count_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t patch_count() const {
    return static_cast<std::size_t>(frame_count_) * static_cast<std::size_t>(height_) * width_;
  }
  const std::vector<Trajectory>& trajectories() const { return trajectories_; }
  std::size_t size() const { return trajectories_.size(); }
  const Trajectory& operator[](std::size_t i) const { return trajectories_[i]; }

  /// Row index of a patch in a (frame, y, x)-major token layout.
  std::size_t flat_index(const PatchRef& p) const {
    return (static_cast<std::size_t>(p.frame) * height_ + p.y) * width_ + p.x;
  }
  bool contains(const PatchRef& p) const {
    return p.frame >= 0 && p.frame < frame_count_ && p.x >= 0 && p.x < width_ && p.y >= 0 && p.y < height_;
  }

  /// Membership of `p`; the last occurrence wins when a malformed set lists a
  /// patch twice, and a missing patch returns {-1, -1}.
  Membership lookup(const PatchRef& p) const { return lookup_[flat_index(p)]; }

  friend bool operator==(const TrajectorySet& a, const TrajectorySet& b);

 private:
  int frame_count_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<Trajectory> trajectories_;
  std::vector<Membership> lookup_;
};

/// Samples patch trajectories on the latent grid.
///
/// One trajectory starts at every frame-0 cell. At each frame step the head of
/// every live trajectory is moved with `flow::project_coords` and rounded to
/// the nearest cell (halves away from zero). A head leaving the grid stops the
/// trajectory as `out_of_bounds`. When several heads land on one cell a
/// seeded uniform draw picks the one that continues; the others stop as
/// `occluded`. Cells of the new frame that nobody reached start new
/// trajectories. Trajectories still alive at the last frame are `completed`.
///
/// Ids are assigned in creation order; within a frame, new trajectories are
/// created in raster order.
TrajectorySet sample_trajectories(const flow::FlowSequence& flows, int height, int width, std::uint64_t seed);

struct PartitionReport {
  bool passed = false;
  std::vector<PatchRef> missing;
  std::vector<PatchRef> duplicated;
  std::vector<PatchRef> out_of_range;
  std::vector<int> malformed;  // ids with non-consecutive frames or empty paths
  std::size_t total_length = 0;
};

PartitionReport validate_partition(const TrajectorySet& set);

struct RenderOptions {
  int cell_size = 8;  // pixels per latent cell when no frames are given
  double marker_radius = 0.35;  // fraction of a cell
};

/// Marks `sample_count` randomly chosen trajectories with red dots on every
/// frame they visit. When `frames` is empty a gray canvas is used; otherwise
/// the frames are scaled cell-wise onto the grid (their size must be a
/// multiple of the grid).
ImageSequence render_trajectories(const TrajectorySet& set, int sample_count, const ImageSequence& frames,
                                  std::uint64_t seed, const RenderOptions& options = {});

/// Indices (sorted) of the trajectories `render_trajectories` would mark.
std::vector<int> pick_trajectories(const TrajectorySet& set, int sample_count, std::uint64_t seed);

// JSON: {frame_count, height, width, trajectories: [{id, stop_reason, patches: [[frame,x,y],...]}]}
nlohmann::json to_json(const TrajectorySet& set);
TrajectorySet trajectory_set_from_json(const nlohmann::json& doc);

}  // namespace flatten::traj
