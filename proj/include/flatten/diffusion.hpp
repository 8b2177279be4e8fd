#pragma once

#include <any>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include <nlohmann/json.hpp>

#include "flatten/attention.hpp"
#include "flatten/feature_video.hpp"
#include "flatten/trajectory.hpp"

namespace flatten::diffusion {

/// Linear-beta variance schedule. Timesteps run 0..T; alpha(0) == 1 is the
/// clean latent and alpha(t) = prod_{i<=t} (1 - beta_i) for t >= 1.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  int total_steps() const { return static_cast<int>(betas_.size()); }
  double beta_start() const { return beta_start_; }
  double beta_end() const { return beta_end_; }

  /// beta_t for t in [1, T].
  double beta(int t) const;
  /// Cumulative alpha for t in [0, T].
  double alpha(int t) const;

  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alphas_cum() const { return alphas_cum_; }

  friend NoiseSchedule make_linear_schedule(int total_steps, double beta_start, double beta_end);

 private:
  double beta_start_ = 0.0;
  double beta_end_ = 0.0;
  std::vector<double> betas_;
  std::vector<double> alphas_cum_;
};

inline constexpr int kDefaultTotalSteps = 1000;
inline constexpr double kDefaultBetaStart = 0.00085;
inline constexpr double kDefaultBetaEnd = 0.012;

/// Betas linearly interpolated from beta_start to beta_end inclusive.
NoiseSchedule make_linear_schedule(int total_steps = kDefaultTotalSteps, double beta_start = kDefaultBetaStart,
                                   double beta_end = kDefaultBetaEnd);

// {"T": ..., "beta_start": ..., "beta_end": ...}
nlohmann::json to_json(const NoiseSchedule& schedule);
NoiseSchedule schedule_from_json(const nlohmann::json& doc);

/// z_t = sqrt(alpha_t) z0 + sqrt(1 - alpha_t) eps with eps ~ N(0, I) drawn
/// from `seed`. t must lie in [1, T].
FeatureVideo forward_noise_sample(const FeatureVideo& z0, int t, const NoiseSchedule& schedule, std::uint64_t seed);

/// The seeded eps used by forward_noise_sample.
FeatureVideo standard_normal_like(const FeatureVideo& shape, std::uint64_t seed);

// Hooks ------------------------------------------------------------------------

enum class Phase { none, inversion, sampling };

/// One deterministic DDIM update: z_to = state_scale * z_from + noise_scale * eps.
struct StepRecord {
  int step = 0;
  int t_from = 0;
  int t_to = 0;
  double state_scale = 1.0;
  double noise_scale = 0.0;
};

/// Observer/injector interface threaded through a denoiser evaluation.
/// `on_features` sees every block's post-DSTA features H; `inject` may return
/// a replacement for them.
class FeatureHooks {
 public:
  virtual ~FeatureHooks() = default;
  virtual void on_features(int /*step*/, int /*block*/, const FeatureVideo& /*h*/) {}
  virtual std::optional<FeatureVideo> inject(int /*step*/, int /*block*/) { return std::nullopt; }
  virtual void on_step(const StepRecord& /*record*/) {}
  /// Called after cached features replaced block `block`'s output.
  virtual void on_injected(int /*step*/, int /*block*/) {}
};

struct EvalContext {
  Phase phase = Phase::none;
  int step = -1;
  FeatureHooks* hooks = nullptr;
  std::any conditioning;  // opaque to the scheduler
};

/// Noise predictor eps(z_t, t). Implementations must be deterministic and
/// return a video of the same shape as `z`.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual FeatureVideo predict(const FeatureVideo& z, int t, const EvalContext& ctx) const = 0;
  /// Number of attention blocks reporting features through the hooks.
  virtual int block_count() const { return 0; }
};

/// One attention block of a toy denoiser.
struct AttentionBlock {
  attn::ProjectionWeights weights;
  attn::AttentionParams params;
  attn::FlattenMode mode = attn::FlattenMode::direct;
};

/// DSTA, hook calls, optional FLATTEN stage and feed-forward for block
/// `block_id`. `set` may be null only when `flatten` is false.
FeatureVideo apply_block(const AttentionBlock& block, const FeatureVideo& x, const traj::TrajectorySet* set,
                         bool flatten, int block_id, const EvalContext& ctx);

/// Analytic stand-ins for a trained denoiser.
class ToyDenoiser final : public Denoiser {
 public:
  enum class Kind { zero, linear, fixed, attention_block };

  /// eps == 0.
  static ToyDenoiser zero();
  /// eps = scale * z.
  static ToyDenoiser linear(double scale);
  /// eps = `noise` regardless of state and timestep.
  static ToyDenoiser fixed(FeatureVideo noise);
  /// eps = one attention block applied to z; FLATTEN runs when
  /// `flatten` is set.
  static ToyDenoiser attention_block(AttentionBlock block, traj::TrajectorySet set, bool flatten);

  Kind kind() const { return kind_; }
  FeatureVideo predict(const FeatureVideo& z, int t, const EvalContext& ctx) const override;
  int block_count() const override { return kind_ == Kind::attention_block ? 1 : 0; }

 private:
  Kind kind_ = Kind::zero;
  double scale_ = 0.0;
  std::optional<FeatureVideo> noise_;
  std::optional<AttentionBlock> block_;
  std::optional<traj::TrajectorySet> set_;
  bool flatten_ = false;
};

// DDIM ---------------------------------------------------------------------------

/// Coefficients of the deterministic DDIM move from t_from to t_to:
/// z_to = sqrt(a_to / a_from) z_from + sqrt(a_to) (sqrt(1/a_to - 1) - sqrt(1/a_from - 1)) eps.
StepRecord ddim_coefficients(const NoiseSchedule& schedule, int t_from, int t_to);

/// Applies the DDIM move with a given noise prediction.
FeatureVideo ddim_move(const FeatureVideo& z, const FeatureVideo& eps, const StepRecord& coefficients);

/// z_t -> z_{t+1}; requires 0 <= t < T.
FeatureVideo ddim_inversion_step(const FeatureVideo& z_t, int t, const NoiseSchedule& schedule,
                                 const Denoiser& denoiser, const EvalContext& ctx = {});

/// z_t -> z_{t-1}; requires 1 <= t <= T.
FeatureVideo ddim_sampling_step(const FeatureVideo& z_t, int t, const NoiseSchedule& schedule,
                                const Denoiser& denoiser, const EvalContext& ctx = {});

/// Evenly spaced timesteps 0 = tau_0 < ... < tau_steps = T with
/// tau_i = floor(i * T / steps). Throws ArgumentError unless 1 <= steps <= T.
std::vector<int> timestep_grid(int total_steps, int steps);

struct CacheKey {
  int step = 0;
  int block = 0;
  friend auto operator<=>(const CacheKey&, const CacheKey&) = default;
};

/// Block features recorded during inversion. Entry (i, b) holds block b's
/// post-DSTA features from inversion step i, which moved tau_i -> tau_{i+1}
/// of `timesteps`.
struct FeatureCache {
  std::vector<int> timesteps;
  int block_count = 0;
  std::map<CacheKey, FeatureVideo> entries;
};

struct InversionResult {
  FeatureVideo latent;
  FeatureCache cache;
};

/// DDIM inversion over timestep_grid(T, steps), evaluating the denoiser at
/// the start of every interval. Every block's features are cached and also
/// forwarded to `hooks`.
InversionResult run_inversion(const FeatureVideo& z0, const NoiseSchedule& schedule, const Denoiser& denoiser,
                              int steps, FeatureHooks* hooks = nullptr, std::any conditioning = {});

/// Which cached features are injected during sampling.
struct InjectionPolicy {
  std::set<int> blocks;       // empty: every block
  double step_fraction = 1.0; // share of sampling steps, counted from the noisy end
};

/// Inversion step whose interval start is nearest to `t`; the earlier step
/// wins ties.
int nearest_inversion_step(const std::vector<int>& inversion_timesteps, int t);

/// Deterministic DDIM sampling from z_T down to z_0. With `injection`, the
/// sampling step that moves tau_{j+1} -> tau_j replaces block features with
/// the entry of the inversion step whose interval starts nearest to tau_j.
/// Throws ConfigError when a needed cache entry is missing or has the wrong
/// shape.
FeatureVideo run_sampling(const FeatureVideo& z_T, const NoiseSchedule& schedule, const Denoiser& denoiser, int steps,
                          const FeatureCache* injection = nullptr, const InjectionPolicy& policy = {},
                          FeatureHooks* hooks = nullptr, std::any conditioning = {});

}  // namespace flatten::diffusion
