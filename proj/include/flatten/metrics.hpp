#pragma once

#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "flatten/flow_field.hpp"
#include "flatten/image.hpp"

namespace flatten::metrics {

struct WarpResult {
  Image warped;
  std::vector<unsigned char> valid;  // row-major H x W, 1 where the sample was in bounds

  bool is_valid(int x, int y) const { return valid[static_cast<std::size_t>(y) * warped.width() + x] != 0; }
  std::size_t valid_count() const;
};

/// Backward warp: warped(x, y) = frame(x + fx(x, y), y + fy(x, y)) with
/// bilinear sampling. A pixel is valid when its sample point lies inside
/// [0, W-1] x [0, H-1]; invalid pixels are set to 0.
WarpResult warp_frame(const Image& frame, const flow::FlowField& flow);

/// Flow warping error, reported x1000. For every pair (k, k+1), frame k+1 is
/// warped back onto frame k with flows[k] and the mean squared error over
/// valid pixels and channels is taken; the result is the mean over pairs that
/// have at least one valid pixel. Throws MetricError when no pair does.
double warping_error(const ImageSequence& video, const flow::FlowSequence& flows);

inline constexpr double kWarpErrorScale = 1000.0;
inline constexpr double kClipScale = 100.0;

/// CLIP-T / E_warp on the raw scale, computed from the x100 / x1000 reporting
/// scales: clip_t_scaled / e_warp_scaled * 10. Throws MetricError unless
/// e_warp_scaled > 0.
double edit_score(double clip_t_scaled, double e_warp_scaled);

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(range^2 / MSE), capped at kPsnrCap (also returned for MSE == 0).
double psnr(const Image& a, const Image& b, double data_range = 1.0);
double psnr(const ImageSequence& a, const ImageSequence& b, double data_range = 1.0);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

/// Normalised 11-tap Gaussian (sigma 1.5) used by ssim.
std::vector<double> ssim_kernel();

/// Mean SSIM over all fully-inside 11x11 Gaussian windows. Multi-channel
/// inputs report the mean of per-channel values. Throws ArgumentError for
/// shape mismatches or images smaller than the window.
double ssim(const Image& a, const Image& b, double data_range = 1.0);
/// Mean over frames.
double ssim(const ImageSequence& a, const ImageSequence& b, double data_range = 1.0);

struct MetricReport {
  std::optional<double> e_warp_scaled;
  std::optional<double> clip_t_scaled;
  std::optional<double> s_edit;
  std::optional<double> psnr_db;
  std::optional<double> ssim;
};

/// {e_warp, clip_t, s_edit, psnr, ssim}; absent values are null.
nlohmann::json to_json(const MetricReport& report);

}  // namespace flatten::metrics
