#include "flatten/diffusion.hpp"

#include <cmath>
#include <random>
#include <string>

#include "flatten/error.hpp"

namespace flatten::diffusion {

double NoiseSchedule::beta(int t) const {
  if (t < 1 || t > total_steps()) throw ArgumentError("beta index " + std::to_string(t) + " outside [1, T]");
  return betas_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha(int t) const {
  if (t < 0 || t > total_steps()) throw ArgumentError("timestep " + std::to_string(t) + " outside [0, T]");
  return t == 0 ? 1.0 : alphas_cum_[static_cast<std::size_t>(t - 1)];
}

NoiseSchedule make_linear_schedule(int total_steps, double beta_start, double beta_end) {
  if (total_steps < 1) throw ArgumentError("schedule needs at least one step");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ArgumentError("need 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.beta_start_ = beta_start;
  s.beta_end_ = beta_end;
  s.betas_.resize(static_cast<std::size_t>(total_steps));
  s.alphas_cum_.resize(static_cast<std::size_t>(total_steps));
  double running = 1.0;
  for (int i = 0; i < total_steps; ++i) {
    const double frac = total_steps == 1 ? 0.0 : static_cast<double>(i) / (total_steps - 1);
    const double beta = beta_start + (beta_end - beta_start) * frac;
    running *= 1.0 - beta;
    s.betas_[static_cast<std::size_t>(i)] = beta;
    s.alphas_cum_[static_cast<std::size_t>(i)] = running;
  }
  return s;
}

nlohmann::json to_json(const NoiseSchedule& schedule) {
  return {{"T", schedule.total_steps()}, {"beta_start", schedule.beta_start()}, {"beta_end", schedule.beta_end()}};
}

NoiseSchedule schedule_from_json(const nlohmann::json& doc) {
  try {
    return make_linear_schedule(doc.at("T").get<int>(), doc.at("beta_start").get<double>(),
                                doc.at("beta_end").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed schedule JSON: ") + e.what());
  }
}

FeatureVideo standard_normal_like(const FeatureVideo& shape, std::uint64_t seed) {
  return random_feature_video(shape.frames(), shape.height(), shape.width(), shape.channels(), seed);
}

FeatureVideo forward_noise_sample(const FeatureVideo& z0, int t, const NoiseSchedule& schedule, std::uint64_t seed) {
  if (t < 1 || t > schedule.total_steps()) {
    throw ArgumentError("forward noising timestep " + std::to_string(t) + " outside [1, T]");
  }
  const double a = schedule.alpha(t);
  const auto eps = standard_normal_like(z0, seed);
  return z0.with_tokens(std::sqrt(a) * z0.tokens() + std::sqrt(1.0 - a) * eps.tokens());
}

// Toy denoisers -------------------------------------------------------------------

FeatureVideo apply_block(const AttentionBlock& block, const FeatureVideo& x, const traj::TrajectorySet* set,
                         bool flatten, int block_id, const EvalContext& ctx) {
  auto h = attn::dense_spatio_temporal_attention(x, block.weights, block.params);
  if (ctx.hooks) {
    ctx.hooks->on_features(ctx.step, block_id, h);
    if (auto replacement = ctx.hooks->inject(ctx.step, block_id)) {
      if (!replacement->same_shape(h)) throw ConfigError("injected features do not match block output shape");
      h = std::move(*replacement);
    }
  }
  if (flatten) {
    if (!set) throw ConfigError("FLATTEN enabled without a trajectory set");
    h = attn::flatten_stage(h, *set, block.weights, block.params, block.mode);
  }
  return attn::feed_forward(h, block.weights.ff);
}

ToyDenoiser ToyDenoiser::zero() { return ToyDenoiser{}; }

ToyDenoiser ToyDenoiser::linear(double scale) {
  ToyDenoiser d;
  d.kind_ = Kind::linear;
  d.scale_ = scale;
  return d;
}

ToyDenoiser ToyDenoiser::fixed(FeatureVideo noise) {
  noise.validate();
  ToyDenoiser d;
  d.kind_ = Kind::fixed;
  d.noise_ = std::move(noise);
  return d;
}

ToyDenoiser ToyDenoiser::attention_block(AttentionBlock block, traj::TrajectorySet set, bool flatten) {
  ToyDenoiser d;
  d.kind_ = Kind::attention_block;
  d.block_ = std::move(block);
  d.set_ = std::move(set);
  d.flatten_ = flatten;
  return d;
}

FeatureVideo ToyDenoiser::predict(const FeatureVideo& z, int /*t*/, const EvalContext& ctx) const {
  switch (kind_) {
    case Kind::zero:
      return z.with_tokens(Matrix::Zero(z.tokens().rows(), z.tokens().cols()));
    case Kind::linear:
      return z.with_tokens(scale_ * z.tokens());
    case Kind::fixed:
      if (!noise_->same_shape(z)) throw ArgumentError("fixed noise does not match the latent shape");
      return *noise_;
    case Kind::attention_block:
      return apply_block(*block_, z, &*set_, flatten_, 0, ctx);
  }
  throw ArgumentError("unknown toy denoiser kind");
}

// DDIM ---------------------------------------------------------------------------

StepRecord ddim_coefficients(const NoiseSchedule& schedule, int t_from, int t_to) {
  const double a_from = schedule.alpha(t_from);
  const double a_to = schedule.alpha(t_to);
  StepRecord r;
  r.t_from = t_from;
  r.t_to = t_to;
  r.state_scale = std::sqrt(a_to / a_from);
  r.noise_scale = std::sqrt(a_to) * (std::sqrt(1.0 / a_to - 1.0) - std::sqrt(1.0 / a_from - 1.0));
  return r;
}

FeatureVideo ddim_move(const FeatureVideo& z, const FeatureVideo& eps, const StepRecord& c) {
  if (!eps.same_shape(z)) throw ArgumentError("noise prediction shape differs from the latent");
  eps.validate();
  return z.with_tokens(c.state_scale * z.tokens() + c.noise_scale * eps.tokens());
}

namespace {

FeatureVideo move(const FeatureVideo& z, int t_from, int t_to, const NoiseSchedule& schedule,
                  const Denoiser& denoiser, const EvalContext& ctx) {
  auto coeff = ddim_coefficients(schedule, t_from, t_to);
  coeff.step = ctx.step;
  const auto eps = denoiser.predict(z, t_from, ctx);
  if (ctx.hooks) ctx.hooks->on_step(coeff);
  return ddim_move(z, eps, coeff);
}

}  // namespace

FeatureVideo ddim_inversion_step(const FeatureVideo& z_t, int t, const NoiseSchedule& schedule,
                                 const Denoiser& denoiser, const EvalContext& ctx) {
  if (t < 0 || t >= schedule.total_steps()) {
    throw ArgumentError("inversion step from t=" + std::to_string(t) + " leaves the schedule");
  }
  return move(z_t, t, t + 1, schedule, denoiser, ctx);
}

FeatureVideo ddim_sampling_step(const FeatureVideo& z_t, int t, const NoiseSchedule& schedule,
                                const Denoiser& denoiser, const EvalContext& ctx) {
  if (t < 1 || t > schedule.total_steps()) {
    throw ArgumentError("sampling step from t=" + std::to_string(t) + " leaves the schedule");
  }
  return move(z_t, t, t - 1, schedule, denoiser, ctx);
}

std::vector<int> timestep_grid(int total_steps, int steps) {
  if (steps < 1 || steps > total_steps) {
    throw ArgumentError("step count " + std::to_string(steps) + " must lie in [1, " + std::to_string(total_steps) +
                        "]");
  }
  std::vector<int> grid(static_cast<std::size_t>(steps) + 1);
  for (int i = 0; i <= steps; ++i) {
    grid[static_cast<std::size_t>(i)] =
        static_cast<int>((static_cast<long long>(i) * total_steps) / steps);
  }
  return grid;
}

namespace {

class RecordingHooks final : public FeatureHooks {
 public:
  RecordingHooks(FeatureCache& cache, FeatureHooks* next) : cache_(cache), next_(next) {}

  void on_features(int step, int block, const FeatureVideo& h) override {
    cache_.entries.insert_or_assign(CacheKey{step, block}, h);
    if (next_) next_->on_features(step, block, h);
  }
  std::optional<FeatureVideo> inject(int step, int block) override {
    return next_ ? next_->inject(step, block) : std::nullopt;
  }
  void on_step(const StepRecord& r) override {
    if (next_) next_->on_step(r);
  }
  void on_injected(int step, int block) override {
    if (next_) next_->on_injected(step, block);
  }

 private:
  FeatureCache& cache_;
  FeatureHooks* next_;
};

class InjectingHooks final : public FeatureHooks {
 public:
  InjectingHooks(const FeatureCache& cache, const InjectionPolicy& policy, std::vector<int> sampling_grid,
                 int injected_steps, FeatureHooks* next)
      : cache_(cache),
        policy_(policy),
        grid_(std::move(sampling_grid)),
        injected_steps_(injected_steps),
        next_(next) {}

  void on_features(int step, int block, const FeatureVideo& h) override {
    if (next_) next_->on_features(step, block, h);
  }

  std::optional<FeatureVideo> inject(int step, int block) override {
    const int steps = static_cast<int>(grid_.size()) - 1;
    const int executed = steps - 1 - step;  // 0 for the noisiest step
    const bool block_selected = policy_.blocks.empty() || policy_.blocks.count(block) > 0;
    if (executed >= injected_steps_ || !block_selected) {
      return next_ ? next_->inject(step, block) : std::nullopt;
    }
    const int source = nearest_inversion_step(cache_.timesteps, grid_[static_cast<std::size_t>(step)]);
    const auto it = cache_.entries.find(CacheKey{source, block});
    if (it == cache_.entries.end()) {
      throw ConfigError("injection cache has no entry for inversion step " + std::to_string(source) + ", block " +
                        std::to_string(block));
    }
    if (next_) next_->on_injected(step, block);
    return it->second;
  }

  void on_step(const StepRecord& r) override {
    if (next_) next_->on_step(r);
  }
  void on_injected(int step, int block) override {
    if (next_) next_->on_injected(step, block);
  }

 private:
  const FeatureCache& cache_;
  const InjectionPolicy& policy_;
  std::vector<int> grid_;
  int injected_steps_;
  FeatureHooks* next_;
};

}  // namespace

InversionResult run_inversion(const FeatureVideo& z0, const NoiseSchedule& schedule, const Denoiser& denoiser,
                              int steps, FeatureHooks* hooks, std::any conditioning) {
  const auto grid = timestep_grid(schedule.total_steps(), steps);
  InversionResult result;
  result.cache.timesteps = grid;
  result.cache.block_count = denoiser.block_count();
  RecordingHooks recorder(result.cache, hooks);
  EvalContext ctx{Phase::inversion, 0, &recorder, std::move(conditioning)};
  FeatureVideo z = z0;
  for (int i = 0; i < steps; ++i) {
    ctx.step = i;
    z = move(z, grid[static_cast<std::size_t>(i)], grid[static_cast<std::size_t>(i) + 1], schedule, denoiser, ctx);
  }
  result.latent = std::move(z);
  return result;
}

int nearest_inversion_step(const std::vector<int>& inversion_timesteps, int t) {
  if (inversion_timesteps.size() < 2) throw ConfigError("inversion timestep grid is empty");
  int best = 0;
  int best_gap = std::abs(inversion_timesteps[0] - t);
  for (std::size_t i = 1; i + 1 < inversion_timesteps.size(); ++i) {
    const int gap = std::abs(inversion_timesteps[i] - t);
    if (gap < best_gap) {
      best = static_cast<int>(i);
      best_gap = gap;
    }
  }
  return best;
}

FeatureVideo run_sampling(const FeatureVideo& z_T, const NoiseSchedule& schedule, const Denoiser& denoiser, int steps,
                          const FeatureCache* injection, const InjectionPolicy& policy, FeatureHooks* hooks,
                          std::any conditioning) {
  const auto grid = timestep_grid(schedule.total_steps(), steps);
  std::optional<InjectingHooks> injector;
  FeatureHooks* active = hooks;
  if (injection) {
    if (injection->block_count != denoiser.block_count()) {
      throw ConfigError("injection cache was recorded for " + std::to_string(injection->block_count) +
                        " blocks, denoiser has " + std::to_string(denoiser.block_count()));
    }
    if (injection->timesteps.empty() || injection->timesteps.back() != schedule.total_steps()) {
      throw ConfigError("injection cache was recorded on a different schedule");
    }
    if (!(policy.step_fraction >= 0.0 && policy.step_fraction <= 1.0)) {
      throw ConfigError("injection step fraction must lie in [0, 1]");
    }
    const int injected = static_cast<int>(std::ceil(policy.step_fraction * steps));
    injector.emplace(*injection, policy, grid, injected, hooks);
    active = &*injector;
  }
  EvalContext ctx{Phase::sampling, 0, active, std::move(conditioning)};
  FeatureVideo z = z_T;
  for (int j = steps - 1; j >= 0; --j) {
    ctx.step = j;
    z = move(z, grid[static_cast<std::size_t>(j) + 1], grid[static_cast<std::size_t>(j)], schedule, denoiser, ctx);
  }
  return z;
}

}  // namespace flatten::diffusion
