#pragma once

// Reference implementations used only by the tests. They deliberately avoid
// the library's helpers: plain loops, long double where it matters, and no
// shared rounding or projection code.

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "flatten/attention.hpp"
#include "flatten/feature_video.hpp"
#include "flatten/flow_field.hpp"
#include "flatten/image.hpp"
#include "flatten/trajectory.hpp"

namespace oracle {

using flatten::FeatureVideo;
using flatten::Image;
using flatten::ImageSequence;
using flatten::flow::FlowField;
using flatten::flow::FlowSequence;
using flatten::traj::PatchRef;
using flatten::traj::StopReason;
using flatten::traj::TrajectorySet;

inline int round_half_away(double v) {
  return v >= 0.0 ? static_cast<int>(std::floor(v + 0.5)) : -static_cast<int>(std::floor(-v + 0.5));
}

inline FlowField random_flow(int w, int h, double magnitude, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-magnitude, magnitude);
  std::vector<float> fx(static_cast<std::size_t>(w) * h), fy(fx.size());
  for (auto& v : fx) v = static_cast<float>(u(rng));
  for (auto& v : fy) v = static_cast<float>(u(rng));
  return FlowField(w, h, std::move(fx), std::move(fy));
}

inline FlowSequence random_flows(int frames, int w, int h, double magnitude, std::mt19937_64& rng) {
  std::vector<FlowField> fields;
  for (int k = 0; k + 1 < frames; ++k) fields.push_back(random_flow(w, h, magnitude, rng));
  return FlowSequence(std::move(fields), frames);
}

inline FlowSequence zero_flows(int frames, int w, int h) {
  return FlowSequence(std::vector<FlowField>(static_cast<std::size_t>(frames - 1), FlowField(w, h)), frames);
}

/// Mean of each factor x factor block divided by factor.
inline FlowField block_mean_downsample(const FlowField& f, int factor) {
  const int w = f.width() / factor;
  const int h = f.height() / factor;
  FlowField out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      long double sx = 0, sy = 0;
      for (int j = 0; j < factor; ++j)
        for (int i = 0; i < factor; ++i) {
          sx += f.fx(x * factor + i, y * factor + j);
          sy += f.fy(x * factor + i, y * factor + j);
        }
      const long double n = static_cast<long double>(factor) * factor;
      out.set(x, y, static_cast<float>(sx / n / factor), static_cast<float>(sy / n / factor));
    }
  return out;
}

/// Where the head at (x, y) of frame k lands in frame k + 1, or nothing when
/// it leaves the grid.
struct Landing {
  bool inside = false;
  int x = 0;
  int y = 0;
};

inline Landing land(const FlowSequence& flows, int k, int x, int y) {
  const auto& f = flows[static_cast<std::size_t>(k)];
  const int nx = round_half_away(x + static_cast<double>(f.fx(x, y)));
  const int ny = round_half_away(y + static_cast<double>(f.fy(x, y)));
  return {nx >= 0 && ny >= 0 && nx < f.width() && ny < f.height(), nx, ny};
}

/// Step-by-step audit of a sampled set against the sampling rules. Returns
/// an empty string when every rule holds, otherwise the first violation.
inline std::string audit_sampling(const TrajectorySet& set, const FlowSequence& flows) {
  const int K = set.frame_count();
  const int H = set.height();
  const int W = set.width();
  std::map<PatchRef, std::pair<int, int>> owner;  // patch -> (trajectory index, position)
  for (std::size_t t = 0; t < set.size(); ++t) {
    const auto& tr = set[t];
    if (tr.patches.empty()) return "empty trajectory";
    for (std::size_t i = 0; i < tr.patches.size(); ++i) {
      const auto& p = tr.patches[i];
      if (p.frame < 0 || p.frame >= K || p.x < 0 || p.x >= W || p.y < 0 || p.y >= H) return "patch out of range";
      if (i > 0 && p.frame != tr.patches[i - 1].frame + 1) return "non-consecutive frames";
      if (!owner.emplace(p, std::make_pair(static_cast<int>(t), static_cast<int>(i))).second) return "duplicate patch";
    }
  }
  if (owner.size() != static_cast<std::size_t>(K) * H * W) return "grid not covered";

  for (std::size_t t = 0; t < set.size(); ++t) {
    const auto& tr = set[t];
    // consecutive patches follow the rounded flow
    for (std::size_t i = 0; i + 1 < tr.patches.size(); ++i) {
      const auto& p = tr.patches[i];
      const auto l = land(flows, p.frame, p.x, p.y);
      if (!l.inside || l.x != tr.patches[i + 1].x || l.y != tr.patches[i + 1].y) return "step does not follow flow";
    }
    const auto& last = tr.patches.back();
    if (last.frame == K - 1) {
      if (tr.stop_reason != StopReason::completed) return "trajectory at last frame not completed";
      continue;
    }
    const auto l = land(flows, last.frame, last.x, last.y);
    if (!l.inside) {
      if (tr.stop_reason != StopReason::out_of_bounds) return "leaving head not out_of_bounds";
      continue;
    }
    if (tr.stop_reason != StopReason::occluded) return "stopped inside the grid without occlusion";
    // the winner at the conflict cell came from frame last.frame as well
    const auto& [wi, wpos] = owner.at(PatchRef{last.frame + 1, l.x, l.y});
    if (wpos == 0) return "occluded head lost to a newly started trajectory";
    const auto& prev = set[static_cast<std::size_t>(wi)].patches[static_cast<std::size_t>(wpos - 1)];
    const auto wl = land(flows, prev.frame, prev.x, prev.y);
    if (!wl.inside || wl.x != l.x || wl.y != l.y) return "winner did not land on the conflict cell";
  }
  // trajectories starting after frame 0 start on cells nobody reached
  std::set<PatchRef> reached;
  for (const auto& tr : set.trajectories())
    for (const auto& p : tr.patches) {
      if (p.frame + 1 >= K) continue;
      // every patch is the head of its trajectory at its own frame
      const auto l = land(flows, p.frame, p.x, p.y);
      if (l.inside) reached.insert(PatchRef{p.frame + 1, l.x, l.y});
    }
  for (const auto& tr : set.trajectories()) {
    const auto& first = tr.patches.front();
    if (first.frame > 0 && reached.count(first)) return "new trajectory on a reached cell";
  }
  if (set.size() < static_cast<std::size_t>(H) * W) return "fewer than H*W trajectories";
  return {};
}

/// mask(i, j) = same trajectory and i != j, built from the raw trajectory
/// list.
inline flatten::attn::AttentionMask trajectory_mask(const TrajectorySet& set) {
  const int K = set.frame_count();
  const int H = set.height();
  const int W = set.width();
  const auto n = static_cast<Eigen::Index>(K) * H * W;
  flatten::attn::AttentionMask mask(n);
  auto flat = [&](const PatchRef& p) { return (static_cast<Eigen::Index>(p.frame) * H + p.y) * W + p.x; };
  for (const auto& tr : set.trajectories())
    for (const auto& a : tr.patches)
      for (const auto& b : tr.patches)
        if (!(a == b)) mask.set(flat(a), flat(b));
  return mask;
}

/// One static trajectory per cell.
inline TrajectorySet static_set(int K, int H, int W) {
  std::vector<flatten::traj::Trajectory> trs;
  int id = 0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      flatten::traj::Trajectory t;
      t.id = id++;
      for (int k = 0; k < K; ++k) t.patches.push_back({k, x, y});
      trs.push_back(std::move(t));
    }
  return TrajectorySet(K, H, W, std::move(trs));
}

/// Scalar DDIM move in long double.
inline long double ddim_scalar(long double z, long double eps, long double a_from, long double a_to) {
  return std::sqrt(a_to / a_from) * z +
         std::sqrt(a_to) * (std::sqrt(1.0L / a_to - 1.0L) - std::sqrt(1.0L / a_from - 1.0L)) * eps;
}

/// alpha_t from the linear beta definition, evaluated independently.
inline std::vector<long double> alphas(int T, long double b0, long double b1) {
  std::vector<long double> a(static_cast<std::size_t>(T) + 1, 1.0L);
  for (int t = 1; t <= T; ++t) {
    const long double beta = T == 1 ? b0 : b0 + (b1 - b0) * (t - 1) / (T - 1);
    a[static_cast<std::size_t>(t)] = a[static_cast<std::size_t>(t) - 1] * (1.0L - beta);
  }
  return a;
}

/// Window-by-window SSIM with explicit 2-D Gaussian weights.
inline double ssim_brute(const Image& a, const Image& b, double range = 1.0) {
  const int r = 5;
  long double g[11][11];
  long double total = 0;
  for (int j = -r; j <= r; ++j)
    for (int i = -r; i <= r; ++i) {
      g[j + r][i + r] = std::exp(-(i * i + j * j) / (2.0L * 1.5L * 1.5L));
      total += g[j + r][i + r];
    }
  const long double c1 = (0.01L * range) * (0.01L * range);
  const long double c2 = (0.03L * range) * (0.03L * range);
  long double per_channel = 0;
  for (int c = 0; c < a.channels(); ++c) {
    long double sum = 0;
    int windows = 0;
    for (int cy = r; cy + r < a.height(); ++cy)
      for (int cx = r; cx + r < a.width(); ++cx) {
        long double ma = 0, mb = 0;
        for (int j = -r; j <= r; ++j)
          for (int i = -r; i <= r; ++i) {
            const long double wgt = g[j + r][i + r] / total;
            ma += wgt * a.at(cx + i, cy + j, c);
            mb += wgt * b.at(cx + i, cy + j, c);
          }
        long double va = 0, vb = 0, cov = 0;
        for (int j = -r; j <= r; ++j)
          for (int i = -r; i <= r; ++i) {
            const long double wgt = g[j + r][i + r] / total;
            const long double da = a.at(cx + i, cy + j, c) - ma;
            const long double db = b.at(cx + i, cy + j, c) - mb;
            va += wgt * da * da;
            vb += wgt * db * db;
            cov += wgt * da * db;
          }
        sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++windows;
      }
    per_channel += sum / windows;
  }
  return static_cast<double>(per_channel / a.channels());
}

/// Bilinear sample with an explicit in-bounds test; returns false outside.
inline bool sample_bilinear(const Image& img, double sx, double sy, int c, long double& out) {
  if (sx < 0 || sy < 0 || sx > img.width() - 1 || sy > img.height() - 1) return false;
  const int x0 = static_cast<int>(sx);
  const int y0 = static_cast<int>(sy);
  const int x1 = x0 + 1 < img.width() ? x0 + 1 : x0;
  const int y1 = y0 + 1 < img.height() ? y0 + 1 : y0;
  const long double ax = sx - x0;
  const long double ay = sy - y0;
  out = (1 - ay) * ((1 - ax) * img.at(x0, y0, c) + ax * img.at(x1, y0, c)) +
        ay * ((1 - ax) * img.at(x0, y1, c) + ax * img.at(x1, y1, c));
  return true;
}

/// Per-pixel recomputation of the x1000 warping error.
inline double warp_error_scalar(const ImageSequence& v, const FlowSequence& flows) {
  long double total = 0;
  int pairs = 0;
  for (std::size_t k = 0; k + 1 < v.size(); ++k) {
    long double sum = 0;
    long count = 0;
    for (int y = 0; y < v[k].height(); ++y)
      for (int x = 0; x < v[k].width(); ++x)
        for (int c = 0; c < v[k].channels(); ++c) {
          long double s;
          const auto& f = flows[k];
          if (!sample_bilinear(v[k + 1], x + static_cast<double>(f.fx(x, y)), y + static_cast<double>(f.fy(x, y)), c,
                               s))
            continue;
          const long double d = v[k].at(x, y, c) - s;
          sum += d * d;
          ++count;
        }
    if (count == 0) continue;
    total += sum / count;
    ++pairs;
  }
  return static_cast<double>(1000.0L * total / pairs);
}

/// Smooth analytic image: values are an affine function of position, so
/// bilinear interpolation reproduces them exactly.
inline double ramp(double x, double y, double phase, int c) {
  return 0.2 + 0.01 * x + 0.013 * y + 0.05 * phase + 0.07 * c;
}

/// Video whose frames are the same affine ramp moved by constant integer
/// displacements; frame k+1 warped back by flows[k] reproduces frame k on
/// every valid pixel.
inline std::pair<ImageSequence, FlowSequence> warp_chain(int frames, int w, int h, int channels,
                                                         std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  ImageSequence v;
  std::vector<FlowField> flows;
  double ox = 0, oy = 0;  // cumulative origin shift of the content
  for (int k = 0; k < frames; ++k) {
    Image img(w, h, channels);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < channels; ++c) img.at(x, y, c) = ramp(x - ox, y - oy, 0.0, c);
    v.push_back(std::move(img));
    if (k + 1 < frames) {
      // content moves by (dx, dy): frame k+1 at p + d equals frame k at p
      // float32 flow storage: use the representable displacement throughout
      const double dx = static_cast<float>(u(rng));
      const double dy = static_cast<float>(u(rng));
      flows.push_back(flatten::flow::synth_flow(flatten::flow::ConstantMotion{dx, dy}, w, h));
      ox += dx;
      oy += dy;
    }
  }
  return {std::move(v), FlowSequence(std::move(flows), frames)};
}

inline Image random_image(int w, int h, int c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(w, h, c);
  for (auto& v : img.data()) v = u(rng);
  return img;
}

}  // namespace oracle
