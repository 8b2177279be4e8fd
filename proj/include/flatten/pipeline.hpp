#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "flatten/diffusion.hpp"
#include "flatten/trajectory.hpp"

namespace flatten::pipeline {

struct PipelineConfig {
  std::uint64_t seed = 0;
  int blocks = 2;
  int heads = 1;
  int hidden = 0;  // feed-forward width; 0 means 2 * channels
  attn::FlattenMode mode = attn::FlattenMode::direct;
  bool flatten_inversion = true;
  bool flatten_sampling = true;
  int inv_steps = 100;
  int samp_steps = 50;
  int total_steps = diffusion::kDefaultTotalSteps;
  double beta_start = diffusion::kDefaultBetaStart;
  double beta_end = diffusion::kDefaultBetaEnd;
  double weight_scale = 1.0;  // multiplies the 1/sqrt(C) init std; 0 gives an all-zero network
  diffusion::InjectionPolicy injection;

  diffusion::NoiseSchedule schedule() const {
    return diffusion::make_linear_schedule(total_steps, beta_start, beta_end);
  }
};

// {seed, blocks, heads, hidden, mode: "I"|"II", flatten_inversion, flatten_sampling,
//  inv_steps, samp_steps, weight_scale, schedule: {T, beta_start, beta_end},
//  injection: {blocks: [...], step_fraction}}
nlohmann::json to_json(const PipelineConfig& config);
PipelineConfig config_from_json(const nlohmann::json& doc);

/// A flat stack of attention blocks at one resolution standing in for an
/// inflated U-Net. Weights are drawn once from the seed.
class ToyUNet {
 public:
  ToyUNet(const PipelineConfig& config, int channels);
  ToyUNet(std::vector<diffusion::AttentionBlock> blocks, bool flatten_inversion, bool flatten_sampling);

  const std::vector<diffusion::AttentionBlock>& blocks() const { return blocks_; }
  int block_count() const { return static_cast<int>(blocks_.size()); }
  int channels() const;
  bool flatten_enabled(diffusion::Phase phase) const;

  /// Runs every block in order on z.
  FeatureVideo forward(const FeatureVideo& z, const traj::TrajectorySet& set,
                       const diffusion::EvalContext& ctx) const;

  /// The same network with FLATTEN disabled in both phases.
  ToyUNet without_flatten() const { return ToyUNet(blocks_, false, false); }

 private:
  std::vector<diffusion::AttentionBlock> blocks_;
  bool flatten_inversion_ = true;
  bool flatten_sampling_ = true;
};

/// Adapts a ToyUNet and a trajectory set to the scheduler's Denoiser interface.
class UNetDenoiser final : public diffusion::Denoiser {
 public:
  UNetDenoiser(const ToyUNet& unet, const traj::TrajectorySet& set) : unet_(unet), set_(set) {}
  FeatureVideo predict(const FeatureVideo& z, int t, const diffusion::EvalContext& ctx) const override;
  int block_count() const override { return unet_.block_count(); }

 private:
  const ToyUNet& unet_;
  const traj::TrajectorySet& set_;
};

using InjectionCache = diffusion::FeatureCache;

/// Directory layout: index.json {timesteps, block_count, entries: [{step, block, file}]}
/// plus one float64 feature blob per entry.
void write_cache(const InjectionCache& cache, const std::filesystem::path& dir);
InjectionCache read_cache(const std::filesystem::path& dir);

/// DDIM inversion of z0 with the ToyUNet as denoiser; caches every block's
/// post-DSTA features per step.
diffusion::InversionResult invert_video(const FeatureVideo& z0, const ToyUNet& unet, const traj::TrajectorySet& set,
                                        const diffusion::NoiseSchedule& schedule, int steps,
                                        diffusion::FeatureHooks* hooks = nullptr);

/// DDIM sampling from z_T, injecting cached inversion features when `cache`
/// is given. Throws ConfigError for a cache that does not fit the network or
/// the latent.
FeatureVideo edit_video(const FeatureVideo& z_T, const ToyUNet& unet, const traj::TrajectorySet& set,
                        const diffusion::NoiseSchedule& schedule, int steps, const InjectionCache* cache,
                        const diffusion::InjectionPolicy& policy = {}, diffusion::FeatureHooks* hooks = nullptr);

struct ReconstructionScore {
  double psnr_db = 0.0;
  double ssim = 0.0;
  double relative_error = 0.0;
};

struct ReconstructionReport {
  ReconstructionScore with_flatten;
  ReconstructionScore without_flatten;
  double data_range = 1.0;
};

/// Latent reconstruction quality. Every (frame, channel) plane is treated as
/// an image whose dynamic range is that of `reference`.
ReconstructionScore score_reconstruction(const FeatureVideo& reconstruction, const FeatureVideo& reference);

/// Inverts and re-samples z0 (no injection) once with FLATTEN enabled in both
/// phases and once with it disabled, and scores both reconstructions.
ReconstructionReport reconstruct_experiment(const FeatureVideo& z0, const ToyUNet& unet, const traj::TrajectorySet& set,
                                            const diffusion::NoiseSchedule& schedule, int inv_steps, int samp_steps);

nlohmann::json to_json(const ReconstructionReport& report);

}  // namespace flatten::pipeline
