#include "flatten/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "flatten/error.hpp"
#include "flatten/image.hpp"
#include "flatten/metrics.hpp"

namespace flatten::pipeline {

namespace {

std::uint64_t block_seed(std::uint64_t seed, int block) {
  return seed ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(block + 1));
}

}  // namespace

nlohmann::json to_json(const PipelineConfig& c) {
  return {{"seed", c.seed},
          {"blocks", c.blocks},
          {"heads", c.heads},
          {"hidden", c.hidden},
          {"mode", c.mode == attn::FlattenMode::direct ? "II" : "I"},
          {"flatten_inversion", c.flatten_inversion},
          {"flatten_sampling", c.flatten_sampling},
          {"inv_steps", c.inv_steps},
          {"samp_steps", c.samp_steps},
          {"weight_scale", c.weight_scale},
          {"schedule", {{"T", c.total_steps}, {"beta_start", c.beta_start}, {"beta_end", c.beta_end}}},
          {"injection",
           {{"blocks", std::vector<int>(c.injection.blocks.begin(), c.injection.blocks.end())},
            {"step_fraction", c.injection.step_fraction}}}};
}

PipelineConfig config_from_json(const nlohmann::json& doc) {
  PipelineConfig c;
  try {
    c.seed = doc.value("seed", c.seed);
    c.blocks = doc.value("blocks", c.blocks);
    c.heads = doc.value("heads", c.heads);
    c.hidden = doc.value("hidden", c.hidden);
    const auto mode = doc.value("mode", std::string("II"));
    if (mode == "I") {
      c.mode = attn::FlattenMode::reproject;
    } else if (mode == "II") {
      c.mode = attn::FlattenMode::direct;
    } else {
      throw ConfigError("mode must be \"I\" or \"II\", got \"" + mode + "\"");
    }
    c.flatten_inversion = doc.value("flatten_inversion", c.flatten_inversion);
    c.flatten_sampling = doc.value("flatten_sampling", c.flatten_sampling);
    c.inv_steps = doc.value("inv_steps", c.inv_steps);
    c.samp_steps = doc.value("samp_steps", c.samp_steps);
    c.weight_scale = doc.value("weight_scale", c.weight_scale);
    if (doc.contains("schedule")) {
      const auto& s = doc.at("schedule");
      c.total_steps = s.value("T", c.total_steps);
      c.beta_start = s.value("beta_start", c.beta_start);
      c.beta_end = s.value("beta_end", c.beta_end);
    }
    if (doc.contains("injection")) {
      const auto& inj = doc.at("injection");
      for (int b : inj.value("blocks", std::vector<int>{})) c.injection.blocks.insert(b);
      c.injection.step_fraction = inj.value("step_fraction", c.injection.step_fraction);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed pipeline config: ") + e.what());
  }
  if (c.blocks < 1 || c.heads < 1 || c.hidden < 0 || c.inv_steps < 1 || c.samp_steps < 1) {
    throw ConfigError("pipeline config has non-positive block/head/step counts");
  }
  return c;
}

ToyUNet::ToyUNet(const PipelineConfig& config, int channels)
    : flatten_inversion_(config.flatten_inversion), flatten_sampling_(config.flatten_sampling) {
  if (config.blocks < 1) throw ConfigError("a ToyUNet needs at least one block");
  const auto params = attn::AttentionParams::for_channels(channels, config.heads);
  const int hidden = config.hidden > 0 ? config.hidden : 2 * channels;
  const double std = config.weight_scale / std::sqrt(static_cast<double>(channels));
  for (int b = 0; b < config.blocks; ++b) {
    auto weights = std == 0.0 ? attn::ProjectionWeights::zeros(channels, hidden)
                              : attn::ProjectionWeights::random(channels, hidden, std, block_seed(config.seed, b));
    blocks_.push_back({std::move(weights), params, config.mode});
  }
}

ToyUNet::ToyUNet(std::vector<diffusion::AttentionBlock> blocks, bool flatten_inversion, bool flatten_sampling)
    : blocks_(std::move(blocks)), flatten_inversion_(flatten_inversion), flatten_sampling_(flatten_sampling) {
  if (blocks_.empty()) throw ConfigError("a ToyUNet needs at least one block");
  for (const auto& b : blocks_) {
    b.params.check(blocks_.front().weights.channels());
    b.weights.check(blocks_.front().weights.channels());
  }
}

int ToyUNet::channels() const { return blocks_.front().weights.channels(); }

bool ToyUNet::flatten_enabled(diffusion::Phase phase) const {
  switch (phase) {
    case diffusion::Phase::inversion:
      return flatten_inversion_;
    case diffusion::Phase::sampling:
      return flatten_sampling_;
    case diffusion::Phase::none:
      return flatten_inversion_ && flatten_sampling_;
  }
  return false;
}

FeatureVideo ToyUNet::forward(const FeatureVideo& z, const traj::TrajectorySet& set,
                              const diffusion::EvalContext& ctx) const {
  if (z.channels() != channels()) {
    throw ArgumentError("latent has " + std::to_string(z.channels()) + " channels, network expects " +
                        std::to_string(channels()));
  }
  const bool flatten = flatten_enabled(ctx.phase);
  FeatureVideo x = z;
  for (int b = 0; b < block_count(); ++b) {
    x = diffusion::apply_block(blocks_[static_cast<std::size_t>(b)], x, &set, flatten, b, ctx);
  }
  return x;
}

FeatureVideo UNetDenoiser::predict(const FeatureVideo& z, int /*t*/, const diffusion::EvalContext& ctx) const {
  return unet_.forward(z, set_, ctx);
}

void write_cache(const InjectionCache& cache, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create cache directory " + dir.string() + ": " + ec.message());
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [key, video] : cache.entries) {
    const std::string file = "step" + std::to_string(key.step) + "_block" + std::to_string(key.block) + ".bin";
    write_feature_video(video, dir / file, BlobType::float64);
    entries.push_back({{"step", key.step}, {"block", key.block}, {"file", file}});
  }
  const nlohmann::json index = {
      {"timesteps", cache.timesteps}, {"block_count", cache.block_count}, {"entries", std::move(entries)}};
  std::ofstream out(dir / "index.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "index.json").string());
  out << index.dump(2) << '\n';
}

InjectionCache read_cache(const std::filesystem::path& dir) {
  std::ifstream in(dir / "index.json");
  if (!in) throw ConfigError("injection cache index missing: " + (dir / "index.json").string());
  InjectionCache cache;
  try {
    nlohmann::json index;
    in >> index;
    cache.timesteps = index.at("timesteps").get<std::vector<int>>();
    cache.block_count = index.at("block_count").get<int>();
    for (const auto& e : index.at("entries")) {
      const diffusion::CacheKey key{e.at("step").get<int>(), e.at("block").get<int>()};
      cache.entries.emplace(key, read_feature_video(dir / e.at("file").get<std::string>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed injection cache index: ") + e.what());
  } catch (const IoError& e) {
    throw ConfigError(std::string("injection cache incomplete: ") + e.what());
  }
  return cache;
}

diffusion::InversionResult invert_video(const FeatureVideo& z0, const ToyUNet& unet, const traj::TrajectorySet& set,
                                        const diffusion::NoiseSchedule& schedule, int steps,
                                        diffusion::FeatureHooks* hooks) {
  if (z0.frames() != set.frame_count() || z0.height() != set.height() || z0.width() != set.width()) {
    throw ArgumentError("latent video does not match the trajectory grid");
  }
  const UNetDenoiser denoiser(unet, set);
  return diffusion::run_inversion(z0, schedule, denoiser, steps, hooks);
}

FeatureVideo edit_video(const FeatureVideo& z_T, const ToyUNet& unet, const traj::TrajectorySet& set,
                        const diffusion::NoiseSchedule& schedule, int steps, const InjectionCache* cache,
                        const diffusion::InjectionPolicy& policy, diffusion::FeatureHooks* hooks) {
  if (z_T.frames() != set.frame_count() || z_T.height() != set.height() || z_T.width() != set.width()) {
    throw ArgumentError("latent video does not match the trajectory grid");
  }
  if (cache) {
    for (const auto& [key, video] : cache->entries) {
      if (!video.same_shape(z_T)) {
        throw ConfigError("cached features for step " + std::to_string(key.step) + ", block " +
                          std::to_string(key.block) + " do not match the latent shape");
      }
    }
  }
  const UNetDenoiser denoiser(unet, set);
  return diffusion::run_sampling(z_T, schedule, denoiser, steps, cache, policy, hooks);
}

ReconstructionScore score_reconstruction(const FeatureVideo& reconstruction, const FeatureVideo& reference) {
  if (!reconstruction.same_shape(reference)) throw ArgumentError("reconstruction shape differs from reference");
  const double lo = reference.tokens().minCoeff();
  const double hi = reference.tokens().maxCoeff();
  const double range = hi > lo ? hi - lo : 1.0;
  ImageSequence rec, ref;
  for (int k = 0; k < reference.frames(); ++k) {
    for (int c = 0; c < reference.channels(); ++c) {
      Image a(reference.width(), reference.height(), 1);
      Image b(reference.width(), reference.height(), 1);
      for (int y = 0; y < reference.height(); ++y) {
        for (int x = 0; x < reference.width(); ++x) {
          a.at(x, y, 0) = reconstruction.patch(k, x, y)(c);
          b.at(x, y, 0) = reference.patch(k, x, y)(c);
        }
      }
      rec.push_back(std::move(a));
      ref.push_back(std::move(b));
    }
  }
  return {metrics::psnr(rec, ref, range), metrics::ssim(rec, ref, range), relative_error(reconstruction, reference)};
}

ReconstructionReport reconstruct_experiment(const FeatureVideo& z0, const ToyUNet& unet, const traj::TrajectorySet& set,
                                            const diffusion::NoiseSchedule& schedule, int inv_steps, int samp_steps) {
  ReconstructionReport report;
  const double lo = z0.tokens().minCoeff();
  const double hi = z0.tokens().maxCoeff();
  report.data_range = hi > lo ? hi - lo : 1.0;

  const ToyUNet with(unet.blocks(), true, true);
  const ToyUNet without = unet.without_flatten();
  auto run = [&](const ToyUNet& net) {
    const auto inverted = invert_video(z0, net, set, schedule, inv_steps);
    const auto rebuilt = edit_video(inverted.latent, net, set, schedule, samp_steps, nullptr);
    return score_reconstruction(rebuilt, z0);
  };
  report.with_flatten = run(with);
  report.without_flatten = run(without);
  return report;
}

nlohmann::json to_json(const ReconstructionReport& report) {
  auto score = [](const ReconstructionScore& s) {
    return nlohmann::json{{"psnr", s.psnr_db}, {"ssim", s.ssim}, {"relative_error", s.relative_error}};
  };
  return {{"with_flatten", score(report.with_flatten)},
          {"without_flatten", score(report.without_flatten)},
          {"data_range", report.data_range}};
}

}  // namespace flatten::pipeline
