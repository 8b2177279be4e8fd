#include "flatten/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "flatten/error.hpp"

namespace flatten::traj {

std::string_view to_string(StopReason reason) {
  switch (reason) {
    case StopReason::completed:
      return "completed";
    case StopReason::occluded:
      return "occluded";
    case StopReason::out_of_bounds:
      return "out_of_bounds";
  }
  return "completed";
}

StopReason stop_reason_from_string(std::string_view name) {
  if (name == "completed") return StopReason::completed;
  if (name == "occluded") return StopReason::occluded;
  if (name == "out_of_bounds") return StopReason::out_of_bounds;
  throw FormatError("unknown stop_reason \"" + std::string(name) + "\"");
}

TrajectorySet::TrajectorySet(int frame_count, int height, int width, std::vector<Trajectory> trajectories)
    : frame_count_(frame_count), height_(height), width_(width), trajectories_(std::move(trajectories)) {
  if (frame_count < 1 || height < 1 || width < 1) throw ArgumentError("trajectory grid dimensions must be positive");
  lookup_.assign(patch_count(), Membership{});
  for (std::size_t t = 0; t < trajectories_.size(); ++t) {
    const auto& path = trajectories_[t].patches;
    for (std::size_t i = 0; i < path.size(); ++i) {
      if (contains(path[i])) lookup_[flat_index(path[i])] = {static_cast<int>(t), static_cast<int>(i)};
    }
  }
}

bool operator==(const TrajectorySet& a, const TrajectorySet& b) {
  if (a.frame_count_ != b.frame_count_ || a.height_ != b.height_ || a.width_ != b.width_) return false;
  if (a.trajectories_.size() != b.trajectories_.size()) return false;
  for (std::size_t i = 0; i < a.trajectories_.size(); ++i) {
    const auto& ta = a.trajectories_[i];
    const auto& tb = b.trajectories_[i];
    if (ta.id != tb.id || ta.stop_reason != tb.stop_reason || ta.patches != tb.patches) return false;
  }
  return true;
}

TrajectorySet sample_trajectories(const flow::FlowSequence& flows, int height, int width, std::uint64_t seed) {
  const int frames = flows.frame_count();
  if (frames < 1) throw ArgumentError("need at least one frame to sample trajectories");
  if (height < 1 || width < 1) throw ArgumentError("latent grid must be non-empty");
  if (frames > 1 && (flows.width() != width || flows.height() != height)) {
    throw ArgumentError("flow resolution " + std::to_string(flows.width()) + "x" + std::to_string(flows.height()) +
                        " does not match latent grid " + std::to_string(width) + "x" + std::to_string(height));
  }

  std::mt19937_64 rng(seed);
  std::vector<Trajectory> paths;
  paths.reserve(static_cast<std::size_t>(width) * height * 2);
  std::vector<int> live;

  auto start = [&](int frame, int x, int y) {
    const int id = static_cast<int>(paths.size());
    paths.push_back(Trajectory{id, {PatchRef{frame, x, y}}, StopReason::completed});
    return id;
  };

  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) live.push_back(start(0, x, y));

  const auto cells = static_cast<std::size_t>(width) * height;
  std::vector<std::vector<int>> arrivals(cells);

  for (int k = 0; k + 1 < frames; ++k) {
    const auto& field = flows[static_cast<std::size_t>(k)];
    for (auto& a : arrivals) a.clear();

    for (int id : live) {
      const PatchRef head = paths[id].patches.back();
      const auto [px, py] = flow::project_coords(head.x, head.y, field);
      const double tx = std::round(px);
      const double ty = std::round(py);
      if (!(tx >= 0.0 && ty >= 0.0 && tx < width && ty < height)) {
        paths[id].stop_reason = StopReason::out_of_bounds;
        continue;
      }
      arrivals[static_cast<std::size_t>(ty) * width + static_cast<std::size_t>(tx)].push_back(id);
    }

    std::vector<int> next;
    next.reserve(cells);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const auto& cands = arrivals[static_cast<std::size_t>(y) * width + x];
        const PatchRef cell{k + 1, x, y};
        if (cands.empty()) {
          next.push_back(start(k + 1, x, y));
          continue;
        }
        std::size_t winner = 0;
        if (cands.size() > 1) {
          std::uniform_int_distribution<std::size_t> pick(0, cands.size() - 1);
          winner = pick(rng);
        }
        for (std::size_t i = 0; i < cands.size(); ++i) {
          if (i == winner) {
            paths[cands[i]].patches.push_back(cell);
            next.push_back(cands[i]);
          } else {
            paths[cands[i]].stop_reason = StopReason::occluded;
          }
        }
      }
    }
    std::sort(next.begin(), next.end());
    live = std::move(next);
  }

  return TrajectorySet(frames, height, width, std::move(paths));
}

PartitionReport validate_partition(const TrajectorySet& set) {
  PartitionReport report;
  std::vector<int> hits(set.patch_count(), 0);
  for (const auto& t : set.trajectories()) {
    if (t.patches.empty()) {
      report.malformed.push_back(t.id);
      continue;
    }
    for (std::size_t i = 1; i < t.patches.size(); ++i) {
      if (t.patches[i].frame != t.patches[i - 1].frame + 1) {
        report.malformed.push_back(t.id);
        break;
      }
    }
    for (const auto& p : t.patches) {
      ++report.total_length;
      if (!set.contains(p)) {
        report.out_of_range.push_back(p);
        continue;
      }
      ++hits[set.flat_index(p)];
    }
  }
  for (int k = 0; k < set.frame_count(); ++k) {
    for (int y = 0; y < set.height(); ++y) {
      for (int x = 0; x < set.width(); ++x) {
        const PatchRef p{k, x, y};
        const int n = hits[set.flat_index(p)];
        if (n == 0) report.missing.push_back(p);
        if (n > 1) report.duplicated.push_back(p);
      }
    }
  }
  report.passed = report.missing.empty() && report.duplicated.empty() && report.out_of_range.empty() &&
                  report.malformed.empty() && report.total_length == set.patch_count();
  return report;
}

std::vector<int> pick_trajectories(const TrajectorySet& set, int sample_count, std::uint64_t seed) {
  if (sample_count < 0 || static_cast<std::size_t>(sample_count) > set.size()) {
    throw ArgumentError("cannot sample " + std::to_string(sample_count) + " of " + std::to_string(set.size()) +
                        " trajectories");
  }
  std::vector<int> order(set.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates; only the first sample_count slots matter.
  for (int i = 0; i < sample_count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), order.size() - 1);
    std::swap(order[static_cast<std::size_t>(i)], order[pick(rng)]);
  }
  order.resize(static_cast<std::size_t>(sample_count));
  std::sort(order.begin(), order.end());
  return order;
}

ImageSequence render_trajectories(const TrajectorySet& set, int sample_count, const ImageSequence& frames,
                                  std::uint64_t seed, const RenderOptions& options) {
  const auto chosen = pick_trajectories(set, sample_count, seed);

  int cell_w = options.cell_size;
  int cell_h = options.cell_size;
  ImageSequence out;
  if (frames.empty()) {
    if (cell_w < 1) throw ArgumentError("cell size must be positive");
    out.assign(static_cast<std::size_t>(set.frame_count()),
               Image(set.width() * cell_w, set.height() * cell_h, 3, 0.5));
  } else {
    if (frames.size() != static_cast<std::size_t>(set.frame_count())) {
      throw ArgumentError("expected " + std::to_string(set.frame_count()) + " frames, got " +
                          std::to_string(frames.size()));
    }
    check_uniform(frames);
    const Image& f0 = frames.front();
    if (f0.width() % set.width() != 0 || f0.height() % set.height() != 0) {
      throw ArgumentError("frame size must be a multiple of the latent grid");
    }
    cell_w = f0.width() / set.width();
    cell_h = f0.height() / set.height();
    for (const auto& f : frames) {
      Image rgb(f.width(), f.height(), 3);
      for (int y = 0; y < f.height(); ++y)
        for (int x = 0; x < f.width(); ++x)
          for (int c = 0; c < 3; ++c) rgb.at(x, y, c) = f.at(x, y, f.channels() == 3 ? c : 0);
      out.push_back(std::move(rgb));
    }
  }

  const double radius = options.marker_radius * std::min(cell_w, cell_h);
  for (int id : chosen) {
    for (const auto& p : set[static_cast<std::size_t>(id)].patches) {
      if (!set.contains(p)) continue;
      Image& img = out[static_cast<std::size_t>(p.frame)];
      const double cx = (p.x + 0.5) * cell_w;
      const double cy = (p.y + 0.5) * cell_h;
      for (int y = p.y * cell_h; y < (p.y + 1) * cell_h; ++y) {
        for (int x = p.x * cell_w; x < (p.x + 1) * cell_w; ++x) {
          const double dx = x + 0.5 - cx;
          const double dy = y + 0.5 - cy;
          if (dx * dx + dy * dy <= radius * radius) {
            img.at(x, y, 0) = 1.0;
            img.at(x, y, 1) = 0.0;
            img.at(x, y, 2) = 0.0;
          }
        }
      }
    }
  }
  return out;
}

nlohmann::json to_json(const TrajectorySet& set) {
  nlohmann::json trajs = nlohmann::json::array();
  for (const auto& t : set.trajectories()) {
    nlohmann::json patches = nlohmann::json::array();
    for (const auto& p : t.patches) patches.push_back({p.frame, p.x, p.y});
    trajs.push_back({{"id", t.id}, {"stop_reason", to_string(t.stop_reason)}, {"patches", std::move(patches)}});
  }
  return {{"frame_count", set.frame_count()},
          {"height", set.height()},
          {"width", set.width()},
          {"trajectories", std::move(trajs)}};
}

TrajectorySet trajectory_set_from_json(const nlohmann::json& doc) {
  try {
    std::vector<Trajectory> trajs;
    for (const auto& t : doc.at("trajectories")) {
      Trajectory out;
      out.id = t.at("id").get<int>();
      out.stop_reason = stop_reason_from_string(t.at("stop_reason").get<std::string>());
      for (const auto& p : t.at("patches")) {
        if (!p.is_array() || p.size() != 3) throw FormatError("patch entries must be [frame, x, y]");
        out.patches.push_back({p[0].get<int>(), p[1].get<int>(), p[2].get<int>()});
      }
      trajs.push_back(std::move(out));
    }
    return TrajectorySet(doc.at("frame_count").get<int>(), doc.at("height").get<int>(), doc.at("width").get<int>(),
                         std::move(trajs));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed trajectory JSON: ") + e.what());
  }
}

}  // namespace flatten::traj
