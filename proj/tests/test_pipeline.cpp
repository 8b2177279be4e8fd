#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "flatten/error.hpp"
#include "flatten/metrics.hpp"
#include "flatten/pipeline.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace flatten;
using namespace flatten::pipeline;

namespace {

/// Stack of DSTA + feed-forward blocks with no FLATTEN stage at all.
class DstaOnly final : public diffusion::Denoiser {
 public:
  explicit DstaOnly(const ToyUNet& unet) : unet_(unet) {}
  FeatureVideo predict(const FeatureVideo& z, int, const diffusion::EvalContext&) const override {
    FeatureVideo x = z;
    for (const auto& b : unet_.blocks()) x = attn::dsta_block(x, b.weights, b.params);
    return x;
  }
  int block_count() const override { return unet_.block_count(); }

 private:
  const ToyUNet& unet_;
};

PipelineConfig small_config(std::uint64_t seed = 3) {
  PipelineConfig c;
  c.seed = seed;
  c.blocks = 2;
  c.heads = 2;
  c.inv_steps = 10;
  c.samp_steps = 10;
  c.weight_scale = 0.5;
  return c;
}

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("flatten_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Config, JsonRoundTrip) {
  auto c = small_config();
  c.mode = attn::FlattenMode::reproject;
  c.injection.blocks = {1};
  c.injection.step_fraction = 0.4;
  c.total_steps = 500;
  const auto back = config_from_json(nlohmann::json::parse(to_json(c).dump()));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(back.mode, attn::FlattenMode::reproject);
  EXPECT_EQ(back.schedule().total_steps(), 500);
}

TEST(Config, InvalidValuesAreConfigErrors) {
  EXPECT_THROW(config_from_json({{"mode", "III"}}), ConfigError);
  EXPECT_THROW(config_from_json({{"blocks", 0}}), ConfigError);
  EXPECT_THROW(config_from_json({{"inv_steps", "many"}}), ConfigError);
}

TEST(ToyUNet, DeterministicFromSeed) {
  const ToyUNet a(small_config(5), 4), b(small_config(5), 4), c(small_config(6), 4);
  ASSERT_EQ(a.block_count(), 2);
  EXPECT_EQ(a.blocks()[1].weights.wk, b.blocks()[1].weights.wk);
  EXPECT_NE(a.blocks()[1].weights.wk, c.blocks()[1].weights.wk);
  EXPECT_NE(a.blocks()[0].weights.wq, a.blocks()[1].weights.wq);
  EXPECT_THROW(ToyUNet(small_config(), 5), ArgumentError);  // 2 heads do not divide 5
}

TEST(Invert, ZeroWeightsGiveClosedFormScaling) {
  auto c = small_config();
  c.weight_scale = 0.0;
  const ToyUNet unet(c, 4);
  const auto set = oracle::static_set(2, 3, 3);
  const auto z0 = random_feature_video(2, 3, 3, 4, 1);
  const auto s = c.schedule();
  const auto r = invert_video(z0, unet, set, s, 10);
  const auto grid = diffusion::timestep_grid(1000, 10);
  const auto a = oracle::alphas(1000, 0.00085L, 0.012L);
  long double f = 1;
  for (int i = 0; i < 10; ++i)
    f *= std::sqrt(a[static_cast<std::size_t>(grid[static_cast<std::size_t>(i) + 1])] /
                   a[static_cast<std::size_t>(grid[static_cast<std::size_t>(i)])]);
  EXPECT_LT(relative_error(r.latent, z0.with_tokens(static_cast<double>(f) * z0.tokens())), 1e-12);
  EXPECT_EQ(r.cache.entries.size(), 20u);
  EXPECT_LT(relative_error(edit_video(r.latent, unet, set, s, 10, &r.cache), z0), 1e-9);
  EXPECT_LT(relative_error(edit_video(r.latent, unet, set, s, 10, nullptr), z0), 1e-9);
}

TEST(Invert, ShapeMismatchIsArgumentError) {
  const ToyUNet unet(small_config(), 4);
  EXPECT_THROW(invert_video(random_feature_video(2, 3, 3, 4, 1), unet, oracle::static_set(3, 3, 3),
                            small_config().schedule(), 5),
               ArgumentError);
}

TEST(Invert, FlattenChangesLatent) {
  std::mt19937_64 rng(1);
  const auto set = traj::sample_trajectories(oracle::random_flows(3, 3, 3, 1.0, rng), 3, 3, 0);
  const ToyUNet unet(small_config(), 4);
  const auto z0 = random_feature_video(3, 3, 3, 4, 2);
  const auto s = small_config().schedule();
  const auto on = invert_video(z0, unet, set, s, 10);
  const auto off = invert_video(z0, unet.without_flatten(), set, s, 10);
  EXPECT_GT(max_abs_diff(on.latent, off.latent), 1e-9);
}

TEST(Edit, InjectionNeverWorseThanPlainSampling) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    const auto set = traj::sample_trajectories(oracle::random_flows(3, 3, 3, 1.0, rng), 3, 3, rng());
    const auto c = small_config(rng());
    const ToyUNet unet(c, 4);
    const auto z0 = random_feature_video(3, 3, 3, 4, rng());
    const auto s = c.schedule();
    const auto r = invert_video(z0, unet, set, s, 10);
    const double injected = relative_error(edit_video(r.latent, unet, set, s, 10, &r.cache), z0);
    const double plain = relative_error(edit_video(r.latent, unet, set, s, 10, nullptr), z0);
    EXPECT_LE(injected, plain);
    EXPECT_LT(injected, 1e-9);
  }
}

TEST(Edit, ModesDiffer) {
  std::mt19937_64 rng(13);
  const auto set = traj::sample_trajectories(oracle::random_flows(3, 3, 3, 1.0, rng), 3, 3, 0);
  auto c1 = small_config();
  auto c2 = small_config();
  c1.mode = attn::FlattenMode::reproject;
  const auto z = random_feature_video(3, 3, 3, 4, 2);
  const auto s = c1.schedule();
  EXPECT_GT(max_abs_diff(edit_video(z, ToyUNet(c1, 4), set, s, 5, nullptr), edit_video(z, ToyUNet(c2, 4), set, s, 5, nullptr)),
            1e-9);
}

TEST(Edit, IncompatibleCacheIsConfigError) {
  const auto c = small_config();
  const ToyUNet unet(c, 4);
  const auto set = oracle::static_set(2, 3, 3);
  const auto s = c.schedule();
  auto r = invert_video(random_feature_video(2, 3, 3, 4, 1), unet, set, s, 10);
  r.cache.entries.begin()->second = FeatureVideo(2, 3, 3, 4);
  EXPECT_NO_THROW(edit_video(r.latent, unet, set, s, 10, &r.cache));
  r.cache.entries.begin()->second = random_feature_video(1, 3, 3, 4, 1);
  EXPECT_THROW(edit_video(r.latent, unet, set, s, 10, &r.cache), ConfigError);
  auto c3 = c;
  c3.blocks = 3;
  const ToyUNet three(c3, 4);
  const auto r2 = invert_video(random_feature_video(2, 3, 3, 4, 1), unet, set, s, 10);
  EXPECT_THROW(edit_video(r2.latent, three, set, s, 10, &r2.cache), ConfigError);
}

TEST(Pipeline, StaticVideoStaysStatic) {
  const int K = 3, S = 3, C = 4;
  FeatureVideo z0(K, S, S, C);
  const auto frame = random_feature_video(1, S, S, C, 4);
  for (int k = 0; k < K; ++k) z0.tokens().middleRows(k * S * S, S * S) = frame.tokens();
  const auto set = traj::sample_trajectories(oracle::zero_flows(K, S, S), S, S, 0);
  const auto c = small_config();
  const ToyUNet unet(c, C);
  const auto s = c.schedule();
  const auto r = invert_video(z0, unet, set, s, 10);
  const auto out = edit_video(r.latent, unet, set, s, 10, &r.cache);
  for (int k = 1; k < K; ++k) EXPECT_EQ(out.tokens().middleRows(k * S * S, S * S), out.tokens().topRows(S * S));
  const auto plain = edit_video(r.latent, unet, set, s, 10, nullptr);
  for (int k = 1; k < K; ++k) EXPECT_EQ(plain.tokens().middleRows(k * S * S, S * S), plain.tokens().topRows(S * S));
}

TEST(Pipeline, FlattenOffEqualsDstaOnlyBitwise) {
  std::mt19937_64 rng(14);
  const auto set = traj::sample_trajectories(oracle::random_flows(3, 3, 3, 1.0, rng), 3, 3, 0);
  const auto c = small_config();
  const ToyUNet off = ToyUNet(c, 4).without_flatten();
  const DstaOnly reference(off);
  const auto z0 = random_feature_video(3, 3, 3, 4, 9);
  const auto s = c.schedule();
  const auto a = invert_video(z0, off, set, s, 10);
  const auto b = diffusion::run_inversion(z0, s, reference, 10);
  EXPECT_TRUE(a.latent == b.latent);
  EXPECT_TRUE(edit_video(a.latent, off, set, s, 10, nullptr) == diffusion::run_sampling(b.latent, s, reference, 10));
}

TEST(Pipeline, Deterministic) {
  std::mt19937_64 rng(15);
  const auto set = traj::sample_trajectories(oracle::random_flows(2, 3, 3, 1.0, rng), 3, 3, 0);
  const auto c = small_config();
  const auto z0 = random_feature_video(2, 3, 3, 4, 9);
  const auto s = c.schedule();
  const auto a = invert_video(z0, ToyUNet(c, 4), set, s, 10);
  const auto b = invert_video(z0, ToyUNet(c, 4), set, s, 10);
  EXPECT_TRUE(a.latent == b.latent);
  EXPECT_TRUE(edit_video(a.latent, ToyUNet(c, 4), set, s, 10, &a.cache) ==
              edit_video(b.latent, ToyUNet(c, 4), set, s, 10, &b.cache));
}

TEST(Reconstruct, ZeroDenoiserReportsCap) {
  auto c = small_config();
  c.weight_scale = 0.0;
  const auto set = oracle::static_set(2, 12, 12);
  const auto z0 = random_feature_video(2, 12, 12, 2, 1);
  const auto rep = reconstruct_experiment(z0, ToyUNet(c, 2), set, c.schedule(), 10, 10);
  EXPECT_EQ(rep.with_flatten.psnr_db, metrics::kPsnrCap);
  EXPECT_EQ(rep.without_flatten.psnr_db, metrics::kPsnrCap);
  EXPECT_NEAR(rep.with_flatten.ssim, 1.0, 1e-12);
}

TEST(Reconstruct, ReportsBothVariantsDeterministically) {
  std::mt19937_64 rng(16);
  const auto set = traj::sample_trajectories(oracle::random_flows(2, 12, 12, 1.0, rng), 12, 12, 0);
  const auto c = small_config();
  const auto z0 = random_feature_video(2, 12, 12, 2, 1);
  const auto a = reconstruct_experiment(z0, ToyUNet(c, 2), set, c.schedule(), 10, 5);
  const auto b = reconstruct_experiment(z0, ToyUNet(c, 2), set, c.schedule(), 10, 5);
  EXPECT_EQ(to_json(a), to_json(b));
  EXPECT_TRUE(std::isfinite(a.with_flatten.psnr_db));
  EXPECT_NE(a.with_flatten.relative_error, a.without_flatten.relative_error);
  EXPECT_THROW(reconstruct_experiment(random_feature_video(2, 4, 4, 2, 1), ToyUNet(c, 2), oracle::static_set(2, 4, 4),
                                      c.schedule(), 5, 5),
               ArgumentError);
}

TEST(Cache, DirectoryRoundTripAndErrors) {
  const auto dir = temp_dir("cache");
  const auto c = small_config();
  const auto set = oracle::static_set(2, 2, 2);
  const auto r = invert_video(random_feature_video(2, 2, 2, 4, 1), ToyUNet(c, 4), set, c.schedule(), 4);
  write_cache(r.cache, dir / "c");
  const auto back = read_cache(dir / "c");
  EXPECT_EQ(back.timesteps, r.cache.timesteps);
  EXPECT_EQ(back.block_count, r.cache.block_count);
  ASSERT_EQ(back.entries.size(), r.cache.entries.size());
  for (const auto& [k, v] : r.cache.entries) EXPECT_TRUE(back.entries.at(k) == v);
  EXPECT_THROW(read_cache(dir / "nowhere"), ConfigError);
  fs::remove(dir / "c" / "step0_block0.bin");
  EXPECT_THROW(read_cache(dir / "c"), ConfigError);
}

TEST(Blob, Float32AndFloat64RoundTrips) {
  const auto dir = temp_dir("blob");
  const auto z = random_feature_video(2, 3, 4, 5, 7);
  write_feature_video(z, dir / "a.bin", BlobType::float64);
  EXPECT_TRUE(read_feature_video(dir / "a.bin") == z);
  write_feature_video(z, dir / "b.bin");
  const auto f = read_feature_video(dir / "b.bin");
  EXPECT_EQ(fs::file_size(dir / "b.bin"), 2u * 3 * 4 * 5 * 4);
  EXPECT_LT(max_abs_diff(f, z), 1e-6);
  EXPECT_THROW(read_feature_video(dir / "missing.bin"), IoError);
}
