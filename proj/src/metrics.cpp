#include "flatten/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flatten/error.hpp"

namespace flatten::metrics {

std::size_t WarpResult::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), 1));
}

WarpResult warp_frame(const Image& frame, const flow::FlowField& flow) {
  if (frame.width() != flow.width() || frame.height() != flow.height()) {
    throw ArgumentError("frame " + std::to_string(frame.width()) + "x" + std::to_string(frame.height()) +
                        " does not match flow " + std::to_string(flow.width()) + "x" + std::to_string(flow.height()));
  }
  const int w = frame.width();
  const int h = frame.height();
  WarpResult out{Image(w, h, frame.channels()), std::vector<unsigned char>(static_cast<std::size_t>(w) * h, 0)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double sx = x + static_cast<double>(flow.fx(x, y));
      const double sy = y + static_cast<double>(flow.fy(x, y));
      if (!(sx >= 0.0 && sy >= 0.0 && sx <= w - 1 && sy <= h - 1)) continue;
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const int x1 = std::min(x0 + 1, w - 1);
      const int y1 = std::min(y0 + 1, h - 1);
      const double ax = sx - x0;
      const double ay = sy - y0;
      for (int c = 0; c < frame.channels(); ++c) {
        const double top = (1.0 - ax) * frame.at(x0, y0, c) + ax * frame.at(x1, y0, c);
        const double bottom = (1.0 - ax) * frame.at(x0, y1, c) + ax * frame.at(x1, y1, c);
        out.warped.at(x, y, c) = (1.0 - ay) * top + ay * bottom;
      }
      out.valid[static_cast<std::size_t>(y) * w + x] = 1;
    }
  }
  return out;
}

double warping_error(const ImageSequence& video, const flow::FlowSequence& flows) {
  if (video.size() < 2) throw ArgumentError("warping error needs at least two frames");
  check_uniform(video);
  if (flows.frame_count() != static_cast<int>(video.size())) {
    throw ArgumentError("expected " + std::to_string(video.size() - 1) + " flows, got " +
                        std::to_string(flows.size()));
  }
  double total = 0.0;
  int pairs = 0;
  for (std::size_t k = 0; k + 1 < video.size(); ++k) {
    const auto warp = warp_frame(video[k + 1], flows[k]);
    const Image& ref = video[k];
    double sum = 0.0;
    std::size_t count = 0;
    for (int y = 0; y < ref.height(); ++y) {
      for (int x = 0; x < ref.width(); ++x) {
        if (!warp.is_valid(x, y)) continue;
        for (int c = 0; c < ref.channels(); ++c) {
          const double d = ref.at(x, y, c) - warp.warped.at(x, y, c);
          sum += d * d;
        }
        count += static_cast<std::size_t>(ref.channels());
      }
    }
    if (count == 0) continue;
    total += sum / static_cast<double>(count);
    ++pairs;
  }
  if (pairs == 0) throw MetricError("warping error undefined: no frame pair has a valid warped pixel");
  return kWarpErrorScale * total / pairs;
}

double edit_score(double clip_t_scaled, double e_warp_scaled) {
  if (!(e_warp_scaled > 0.0)) throw MetricError("editing score undefined for a warping error of zero");
  // (clip / 100) / (e_warp / 1000)
  return clip_t_scaled / e_warp_scaled * (kWarpErrorScale / kClipScale);
}

namespace {

double mse(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ArgumentError("image shapes differ");
  if (a.data().empty()) throw ArgumentError("empty image");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.data().size());
}

double psnr_from_mse(double m, double data_range) {
  if (!(data_range > 0.0)) throw ArgumentError("data range must be positive");
  if (m == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(data_range * data_range / m));
}

// Separable "valid" correlation of a single-channel plane with the kernel.
std::vector<double> filter_valid(const std::vector<double>& plane, int w, int h, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = w - n + 1;
  const int oh = h - n + 1;
  std::vector<double> rows(static_cast<std::size_t>(ow) * h, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * plane[static_cast<std::size_t>(y) * w + x + i];
      rows[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += k[static_cast<std::size_t>(j)] * rows[static_cast<std::size_t>(y + j) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

double ssim_plane(const Image& a, const Image& b, int c, double data_range) {
  const int w = a.width();
  const int h = a.height();
  const auto n = static_cast<std::size_t>(w) * h;
  std::vector<double> pa(n), pb(n), aa(n), bb(n), ab(n);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      pa[i] = a.at(x, y, c);
      pb[i] = b.at(x, y, c);
      aa[i] = pa[i] * pa[i];
      bb[i] = pb[i] * pb[i];
      ab[i] = pa[i] * pb[i];
    }
  const auto k = ssim_kernel();
  const auto mu_a = filter_valid(pa, w, h, k);
  const auto mu_b = filter_valid(pb, w, h, k);
  const auto e_aa = filter_valid(aa, w, h, k);
  const auto e_bb = filter_valid(bb, w, h, k);
  const auto e_ab = filter_valid(ab, w, h, k);
  const double c1 = (kSsimK1 * data_range) * (kSsimK1 * data_range);
  const double c2 = (kSsimK2 * data_range) * (kSsimK2 * data_range);
  double sum = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double va = e_aa[i] - mu_a[i] * mu_a[i];
    const double vb = e_bb[i] - mu_b[i] * mu_b[i];
    const double cov = e_ab[i] - mu_a[i] * mu_b[i];
    sum += ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
           ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
  }
  return sum / static_cast<double>(mu_a.size());
}

}  // namespace

double psnr(const Image& a, const Image& b, double data_range) { return psnr_from_mse(mse(a, b), data_range); }

double psnr(const ImageSequence& a, const ImageSequence& b, double data_range) {
  if (a.size() != b.size() || a.empty()) throw ArgumentError("sequences must have the same non-zero length");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    sum += mse(a[k], b[k]) * static_cast<double>(a[k].data().size());
    count += a[k].data().size();
  }
  return psnr_from_mse(sum / static_cast<double>(count), data_range);
}

std::vector<double> ssim_kernel() {
  std::vector<double> k(kSsimWindow);
  const int r = kSsimWindow / 2;
  double total = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - r;
    k[static_cast<std::size_t>(i)] = std::exp(-(d * d) / (2.0 * kSsimSigma * kSsimSigma));
    total += k[static_cast<std::size_t>(i)];
  }
  for (double& v : k) v /= total;
  return k;
}

double ssim(const Image& a, const Image& b, double data_range) {
  if (!a.same_shape(b)) throw ArgumentError("image shapes differ");
  if (a.width() < kSsimWindow || a.height() < kSsimWindow) {
    throw ArgumentError("SSIM needs images of at least " + std::to_string(kSsimWindow) + "x" +
                        std::to_string(kSsimWindow) + " pixels");
  }
  if (!(data_range > 0.0)) throw ArgumentError("data range must be positive");
  double sum = 0.0;
  for (int c = 0; c < a.channels(); ++c) sum += ssim_plane(a, b, c, data_range);
  return sum / a.channels();
}

double ssim(const ImageSequence& a, const ImageSequence& b, double data_range) {
  if (a.size() != b.size() || a.empty()) throw ArgumentError("sequences must have the same non-zero length");
  double sum = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) sum += ssim(a[k], b[k], data_range);
  return sum / static_cast<double>(a.size());
}

nlohmann::json to_json(const MetricReport& report) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"e_warp", opt(report.e_warp_scaled)},
          {"clip_t", opt(report.clip_t_scaled)},
          {"s_edit", opt(report.s_edit)},
          {"psnr", opt(report.psnr_db)},
          {"ssim", opt(report.ssim)}};
}

}  // namespace flatten::metrics
