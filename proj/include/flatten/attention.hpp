#pragma once

#include <cstdint>
#include <vector>

#include "flatten/feature_video.hpp"
#include "flatten/trajectory.hpp"

namespace flatten::attn {

/// Multi-head layout: channel c belongs to head c / head_dim.
struct AttentionParams {
  int head_count = 1;
  int head_dim = 1;

  /// Splits `channels` into `heads` equal heads; throws ArgumentError when
  /// the split is not exact.
  static AttentionParams for_channels(int channels, int heads);

  int channels() const { return head_count * head_dim; }
  void check(int channels) const;
};

/// Two linear maps around an erf-based GELU: gelu(x W1 + b1) W2 + b2.
struct FeedForward {
  Matrix w1;
  RowVector b1;
  Matrix w2;
  RowVector b2;
};

/// Per-block weights. Row vectors multiply from the left: q = x * wq.
struct ProjectionWeights {
  Matrix wq;
  Matrix wk;
  Matrix wv;
  Matrix wo;
  FeedForward ff;

  int channels() const { return static_cast<int>(wq.rows()); }
  void check(int channels) const;

  /// Gaussian entries with standard deviation `std` (biases included).
  static ProjectionWeights random(int channels, int hidden, double std, std::uint64_t seed);
  static ProjectionWeights zeros(int channels, int hidden);
};

double gelu(double x);

/// Single-head softmax weights of `q` against the rows of `keys`, scaled by
/// 1/sqrt(d). Throws ArgumentError for an empty key set.
Eigen::VectorXd attention_weights(const RowVector& q, const Matrix& keys);

/// Softmax(q K^T / sqrt(d)) V for one query. The weighted mean is
/// accumulated incrementally, so identical value rows reproduce that row
/// exactly. Throws ArgumentError for an empty key set.
RowVector scaled_dot_attention(const RowVector& q, const Matrix& keys, const Matrix& values);

/// Each patch attends to the patches of its own frame.
FeatureVideo spatial_attention(const FeatureVideo& z, const ProjectionWeights& w, const AttentionParams& p);

/// Each patch attends to every patch of the video (itself included). Returns
/// the attended features before the feed-forward network.
FeatureVideo dense_spatio_temporal_attention(const FeatureVideo& z, const ProjectionWeights& w,
                                             const AttentionParams& p);

/// Flow-guided attention. For every patch the query is its own row of `h`;
/// keys and values are the rows of the other patches on its trajectory. No
/// projections and no positional encoding. Patches alone on their trajectory
/// are copied through.
FeatureVideo flow_guided_attention(const FeatureVideo& h, const traj::TrajectorySet& set, const AttentionParams& p);

/// Trajectory attention with separate query/key/value sources; rows whose key
/// set is empty take their value from `passthrough`.
FeatureVideo trajectory_attention(const FeatureVideo& queries, const FeatureVideo& keys, const FeatureVideo& values,
                                  const FeatureVideo& passthrough, const traj::TrajectorySet& set,
                                  const AttentionParams& p);

/// Dense boolean mask over the token grid: allowed(i, j) lets query i see key j.
class AttentionMask {
 public:
  AttentionMask() = default;
  explicit AttentionMask(Eigen::Index tokens, bool fill = false)
      : size_(tokens), bits_(static_cast<std::size_t>(tokens * tokens), fill ? 1 : 0) {}

  Eigen::Index size() const { return size_; }
  bool allowed(Eigen::Index i, Eigen::Index j) const { return bits_[static_cast<std::size_t>(i * size_ + j)] != 0; }
  void set(Eigen::Index i, Eigen::Index j, bool v = true) { bits_[static_cast<std::size_t>(i * size_ + j)] = v; }

 private:
  Eigen::Index size_ = 0;
  std::vector<unsigned char> bits_;
};

/// Reference O(N^2) attention without projections. Uses a textbook
/// exp/normalise/sum evaluation; rows with no allowed key pass through.
FeatureVideo masked_attention_oracle(const FeatureVideo& z, const AttentionMask& mask, const AttentionParams& p);

FeatureVideo feed_forward(const FeatureVideo& h, const FeedForward& ff);

enum class FlattenMode {
  reproject,  // mode I: H goes through wq/wk/wv again
  direct,     // mode II: H is used as queries, keys and values
};

/// The flow-guided stage of a block on DSTA output `h`.
FeatureVideo flatten_stage(const FeatureVideo& h, const traj::TrajectorySet& set, const ProjectionWeights& w,
                           const AttentionParams& p, FlattenMode mode);

/// feed_forward(flatten_stage(dense_spatio_temporal_attention(z))).
FeatureVideo dsta_flatten_block(const FeatureVideo& z, const traj::TrajectorySet& set, const ProjectionWeights& w,
                                const AttentionParams& p, FlattenMode mode);

/// feed_forward(dense_spatio_temporal_attention(z)); the block with FLATTEN
/// removed.
FeatureVideo dsta_block(const FeatureVideo& z, const ProjectionWeights& w, const AttentionParams& p);

}  // namespace flatten::attn
