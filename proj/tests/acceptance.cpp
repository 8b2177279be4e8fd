// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>

#include "flatten/attention.hpp"
#include "flatten/cli.hpp"
#include "flatten/diffusion.hpp"
#include "flatten/metrics.hpp"
#include "flatten/pipeline.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace flatten;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, double v) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Outcome trajectory_partition() {
  std::mt19937_64 rng(20240601);
  const auto start = Clock::now();
  int failures = 0;
  for (int i = 0; i < 200; ++i) {
    const int K = 1 + static_cast<int>(rng() % 8);
    const int S = 1 + static_cast<int>(rng() % 16);
    const auto flows = oracle::random_flows(K, S, S, 0.5 + 4.0 * (i % 5) / 4.0, rng);
    const auto set = traj::sample_trajectories(flows, S, S, rng());
    const auto r = traj::validate_partition(set);
    if (!r.passed || r.total_length != static_cast<std::size_t>(K) * S * S) ++failures;
  }
  const double t = seconds_since(start);
  return {failures == 0 && t < 10.0, std::to_string(failures) + "/200 violations, " + fmt("%.2f s (< 10 s)", t)};
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(77001);
  const auto start = Clock::now();
  double worst = 0.0;
  const int heads_options[] = {1, 2, 4};
  for (int i = 0; i < 50; ++i) {
    const int K = 1 + static_cast<int>(rng() % 4);
    const int S = 1 + static_cast<int>(rng() % 6);
    const int heads = heads_options[i % 3];
    const int C = heads * (1 + static_cast<int>(rng() % (8 / heads)));
    const auto flows = oracle::random_flows(K, S, S, 1.5, rng);
    const auto set = traj::sample_trajectories(flows, S, S, rng());
    const auto z = random_feature_video(K, S, S, C, rng());
    const auto p = attn::AttentionParams::for_channels(C, heads);
    worst = std::max(worst, max_abs_diff(attn::flow_guided_attention(z, set, p),
                                         attn::masked_attention_oracle(z, oracle::trajectory_mask(set), p)));
  }
  const double t = seconds_since(start);
  return {worst <= 1e-6 && t < 30.0, fmt("max |diff| %.3e (<= 1e-6), ", worst) + fmt("%.2f s (< 30 s)", t)};
}

Outcome static_identity() {
  const int K = 4, C = 8;
  bool identity = true;
  double deviation = 0.0;
  for (int S : {3, 4, 5}) {
    FeatureVideo z(K, S, S, C);
    const auto frame = random_feature_video(1, S, S, C, 5 + S);
    for (int k = 0; k < K; ++k) z.tokens().middleRows(k * S * S, S * S) = frame.tokens();
    const auto set = traj::sample_trajectories(oracle::zero_flows(K, S, S), S, S, 11);
    for (int heads : {1, 2, 4})
      identity = identity && attn::flow_guided_attention(z, set, attn::AttentionParams::for_channels(C, heads)) == z;

    pipeline::PipelineConfig config;
    config.seed = 3;
    config.heads = 2;
    config.inv_steps = 20;
    config.samp_steps = 10;
    const pipeline::ToyUNet unet(config, C);
    const auto s = config.schedule();
    const auto inverted = pipeline::invert_video(z, unet, set, s, config.inv_steps);
    const auto edited = pipeline::edit_video(inverted.latent, unet, set, s, config.samp_steps, &inverted.cache);
    for (int k = 1; k < K; ++k)
      deviation = std::max(deviation, (edited.tokens().middleRows(k * S * S, S * S) - edited.tokens().topRows(S * S))
                                          .cwiseAbs()
                                          .maxCoeff());
  }
  return {identity && deviation == 0.0, std::string("attention identity ") + (identity ? "exact" : "broken") +
                                            fmt(", pipeline inter-frame deviation %.3e (== 0)", deviation)};
}

Outcome ddim_round_trip() {
  const auto s = diffusion::make_linear_schedule(1000);
  std::mt19937_64 rng(31);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const int steps = i % 2 == 0 ? 10 : 50;
    const int K = 1 + static_cast<int>(rng() % 4);
    const int S = 1 + static_cast<int>(rng() % 6);
    const int C = 1 + static_cast<int>(rng() % 8);
    const auto z0 = random_feature_video(K, S, S, C, rng());
    const auto fixed = diffusion::ToyDenoiser::fixed(random_feature_video(K, S, S, C, rng()));
    const auto zero = diffusion::ToyDenoiser::zero();
    for (const diffusion::ToyDenoiser* d : {&fixed, &zero}) {
      const auto inv = diffusion::run_inversion(z0, s, *d, steps);
      worst = std::max(worst, relative_error(diffusion::run_sampling(inv.latent, s, *d, steps), z0));
    }
  }
  return {worst <= 1e-9, fmt("max relative error %.3e (<= 1e-9) over 20 instances x {fixed, zero}", worst)};
}

Outcome forward_noise_statistics() {
  const auto s = diffusion::make_linear_schedule(1000);
  FeatureVideo z0(1, 1, 1, 1);
  z0.tokens()(0, 0) = 1.25;
  const int n = 10000;
  bool ok = true;
  std::string detail;
  for (int t : {1, 500, 1000}) {
    double sum = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
      const double v = diffusion::forward_noise_sample(z0, t, s, 1000003ull * t + static_cast<std::uint64_t>(i))
                           .tokens()(0, 0);
      sum += v;
      sq += v * v;
    }
    const double mean = sum / n;
    const double sd = std::sqrt((sq - n * mean * mean) / (n - 1));
    const double mu = std::sqrt(s.alpha(t)) * 1.25;
    const double sigma = std::sqrt(1.0 - s.alpha(t));
    const double z_mean = std::abs(mean - mu) / (sigma / std::sqrt(n));
    const double z_sd = std::abs(sd - sigma) / (sigma / std::sqrt(2.0 * (n - 1)));
    ok = ok && z_mean <= 3.0 && z_sd <= 3.0;
    detail += "t=" + std::to_string(t) + fmt(" mean %.2f SE", z_mean) + fmt(" std %.2f SE; ", z_sd);
  }
  return {ok, detail + "(<= 3 SE)"};
}

Outcome metric_identities() {
  std::mt19937_64 rng(404);
  double worst_warp = 0.0;
  for (int i = 0; i < 10; ++i) {
    const auto [video, flows] = oracle::warp_chain(2 + i % 4, 24, 16, 1 + i % 3, rng);
    worst_warp = std::max(worst_warp, metrics::warping_error(video, flows));
  }
  bool ssim_one = true;
  bool psnr_cap = true;
  for (int i = 0; i < 10; ++i) {
    const auto a = oracle::random_image(11 + i, 12 + i, 1 + i % 3, rng);
    ssim_one = ssim_one && metrics::ssim(a, a) == 1.0;
    psnr_cap = psnr_cap && metrics::psnr(a, a) == metrics::kPsnrCap;
  }
  return {worst_warp <= 1e-9 && ssim_one && psnr_cap,
          fmt("warp-chain E_warp max %.3e (<= 1e-9), ", worst_warp) + "ssim(a,a)=1 " + (ssim_one ? "yes" : "no") +
              ", psnr(a,a)=cap " + (psnr_cap ? "yes" : "no")};
}

Outcome table_arithmetic() {
  struct Row {
    double clip_t, e_warp, s_edit;
  };
  const Row rows[] = {{27.33, 29.23, 9.35},  {27.86, 22.07, 12.62}, {27.72, 6.81, 40.70}, {27.06, 5.79, 46.74},
                      {26.91, 5.36, 50.21},  {28.05, 4.92, 57.01},  {25.84, 15.38, 16.80}, {26.53, 11.55, 22.97},
                      {25.92, 6.32, 41.01},  {25.72, 5.10, 50.43},  {25.57, 3.15, 81.17},  {26.70, 3.16, 84.49}};
  double worst = 0.0;
  int matched = 0;
  for (const auto& r : rows) {
    const double d = std::abs(metrics::edit_score(r.clip_t, r.e_warp) - r.s_edit);
    worst = std::max(worst, d);
    if (d <= 0.02) ++matched;
  }
  return {matched == 12, std::to_string(matched) + "/12 rows within 0.02" + fmt(" (max |diff| %.4f)", worst)};
}

class DstaOnly final : public diffusion::Denoiser {
 public:
  explicit DstaOnly(const pipeline::ToyUNet& unet) : unet_(unet) {}
  FeatureVideo predict(const FeatureVideo& z, int, const diffusion::EvalContext&) const override {
    FeatureVideo x = z;
    for (const auto& b : unet_.blocks()) x = attn::dsta_block(x, b.weights, b.params);
    return x;
  }
  int block_count() const override { return unet_.block_count(); }

 private:
  const pipeline::ToyUNet& unet_;
};

Outcome ablation_witnesses() {
  std::mt19937_64 rng(55);
  const int K = 3, S = 4, C = 8;
  const auto set = traj::sample_trajectories(oracle::random_flows(K, S, S, 1.5, rng), S, S, 1);
  const auto z = random_feature_video(K, S, S, C, 2);
  const auto w = attn::ProjectionWeights::random(C, 2 * C, 1.0 / std::sqrt(C), 3);
  const attn::AttentionParams p{2, 4};
  const double mode_gap = max_abs_diff(attn::dsta_flatten_block(z, set, w, p, attn::FlattenMode::reproject),
                                       attn::dsta_flatten_block(z, set, w, p, attn::FlattenMode::direct));

  pipeline::PipelineConfig config;
  config.seed = 8;
  config.inv_steps = 20;
  config.samp_steps = 10;
  const auto off = pipeline::ToyUNet(config, C).without_flatten();
  const DstaOnly reference(off);
  const auto s = config.schedule();
  const auto a = pipeline::invert_video(z, off, set, s, config.inv_steps);
  const auto b = diffusion::run_inversion(z, s, reference, config.inv_steps);
  const bool bitwise = a.latent == b.latent && pipeline::edit_video(a.latent, off, set, s, config.samp_steps, nullptr) ==
                                                   diffusion::run_sampling(b.latent, s, reference, config.samp_steps);
  return {mode_gap > 0.0 && bitwise, fmt("mode I vs II max |diff| %.3e (> 0), ", mode_gap) +
                                         "FLATTEN-off vs DSTA-only " + (bitwise ? "bitwise equal" : "differ")};
}

std::string file_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

Outcome flow_noise_robustness() {
  const fs::path dir = fs::temp_directory_path() / "flatten_acceptance_flow_noise";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::mt19937_64 rng(909);
  int violations = 0;
  int runs = 0;
  bool identical = true;
  std::ostringstream out, err;
  auto cli = [&](std::vector<std::string> args) {
    args.insert(args.begin(), {"--out-dir", dir.string()});
    return cli::run(args, out, err);
  };
  for (int i = 0; i < 200; ++i) {
    const int K = 2 + static_cast<int>(rng() % 7);
    const int S = 1 + static_cast<int>(rng() % 16);
    const auto flows = oracle::random_flows(K, S, S, 2.0, rng);
    std::vector<std::string> clean;
    for (int k = 0; k + 1 < K; ++k) {
      const auto name = "in" + std::to_string(k) + ".flo";
      flow::write_flo(flows[static_cast<std::size_t>(k)], dir / name);
      clean.push_back((dir / name).string());
    }
    for (const char* sigma : {"0", "0.5", "1"}) {
      std::vector<std::string> noisy;
      for (int k = 0; k + 1 < K; ++k) {
        const auto name = std::string("noisy_") + sigma + "_" + std::to_string(k) + ".flo";
        if (cli({"--seed", std::to_string(i * 100 + k), "flow", "noise", "-i", clean[static_cast<std::size_t>(k)],
                 "--sigma", sigma, "-o", name}) != 0)
          ++violations;
        if (std::string(sigma) == "0") identical = identical && file_bytes(dir / name) == file_bytes(clean[static_cast<std::size_t>(k)]);
        noisy.push_back((dir / name).string());
      }
      std::vector<std::string> sample{"--seed", std::to_string(i), "traj", "sample", "-o", "t.json", "--flows"};
      sample.insert(sample.end(), noisy.begin(), noisy.end());
      ++runs;
      if (cli(sample) != 0 || cli({"traj", "check", "-i", (dir / "t.json").string()}) != 0) ++violations;
    }
  }
  fs::remove_all(dir);
  return {violations == 0 && identical, std::to_string(violations) + "/" + std::to_string(runs) +
                                            " sigma runs with partition violations, sigma=0 " +
                                            (identical ? "byte-identical" : "differs")};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> check;
  };
  const Criterion criteria[] = {
      {"trajectory partition", trajectory_partition},
      {"flow-guided attention vs masked oracle", oracle_equivalence},
      {"static-video identity", static_identity},
      {"DDIM round trip", ddim_round_trip},
      {"forward-noise statistics", forward_noise_statistics},
      {"metric identities", metric_identities},
      {"published-table arithmetic", table_arithmetic},
      {"ablation witnesses", ablation_witnesses},
      {"flow-noise robustness", flow_noise_robustness},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.passed) ++failed;
    std::printf("%s  %-40s %s\n", o.passed ? "PASS" : "FAIL", c.name, o.detail.c_str());
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failed, std::size(criteria));
  return failed == 0 ? 0 : 1;
}
