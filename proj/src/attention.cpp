#include "flatten/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "flatten/error.hpp"

namespace flatten::attn {

using Index = Eigen::Index;

AttentionParams AttentionParams::for_channels(int channels, int heads) {
  if (heads < 1 || channels < 1 || channels % heads != 0) {
    throw ArgumentError(std::to_string(heads) + " heads do not divide " + std::to_string(channels) + " channels");
  }
  return {heads, channels / heads};
}

void AttentionParams::check(int channels) const {
  if (head_count < 1 || head_dim < 1) throw ArgumentError("head count and head dim must be positive");
  if (head_count * head_dim != channels) {
    throw ArgumentError(std::to_string(head_count) + " heads x " + std::to_string(head_dim) +
                        " dims does not match " + std::to_string(channels) + " channels");
  }
}

void ProjectionWeights::check(int channels) const {
  const auto square = [channels](const Matrix& m) { return m.rows() == channels && m.cols() == channels; };
  if (!square(wq) || !square(wk) || !square(wv) || !square(wo)) {
    throw ArgumentError("projection matrices must be " + std::to_string(channels) + "x" + std::to_string(channels));
  }
  const Index hidden = ff.w1.cols();
  if (ff.w1.rows() != channels || ff.b1.size() != hidden || ff.w2.rows() != hidden || ff.w2.cols() != channels ||
      ff.b2.size() != channels) {
    throw ArgumentError("feed-forward weights do not match the channel count");
  }
}

ProjectionWeights ProjectionWeights::random(int channels, int hidden, double std, std::uint64_t seed) {
  if (channels < 1 || hidden < 1) throw ArgumentError("weight dimensions must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](Index rows, Index cols) {
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = std * normal(rng);
    return m;
  };
  ProjectionWeights w;
  w.wq = fill(channels, channels);
  w.wk = fill(channels, channels);
  w.wv = fill(channels, channels);
  w.wo = fill(channels, channels);
  w.ff.w1 = fill(channels, hidden);
  w.ff.b1 = fill(1, hidden);
  w.ff.w2 = fill(hidden, channels);
  w.ff.b2 = fill(1, channels);
  return w;
}

ProjectionWeights ProjectionWeights::zeros(int channels, int hidden) {
  ProjectionWeights w;
  w.wq = Matrix::Zero(channels, channels);
  w.wk = Matrix::Zero(channels, channels);
  w.wv = Matrix::Zero(channels, channels);
  w.wo = Matrix::Zero(channels, channels);
  w.ff.w1 = Matrix::Zero(channels, hidden);
  w.ff.b1 = RowVector::Zero(hidden);
  w.ff.w2 = Matrix::Zero(hidden, channels);
  w.ff.b2 = RowVector::Zero(channels);
  return w;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

namespace {

// Applies a linear map token by token so a token's result never depends on its
// row position (blocked GEMM kernels treat remainder rows differently).
Matrix tokenwise(const Matrix& x, const Matrix& w) {
  Matrix out(x.rows(), w.cols());
  for (Index i = 0; i < x.rows(); ++i) out.row(i).noalias() = x.row(i) * w;
  return out;
}

// Softmax-weighted mean of value rows for one head of one query. Keys are
// visited in the order given; logits are shifted by their maximum and the
// mean is updated incrementally (acc += w/W * (v - acc)).
void attend_head(const Matrix& q, const Matrix& k, const Matrix& v, Index query, const std::vector<Index>& keys,
                 Index offset, Index dim, double scale, std::vector<double>& logits, Matrix& out) {
  logits.resize(keys.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < keys.size(); ++j) {
    double dot = 0.0;
    for (Index c = 0; c < dim; ++c) dot += q(query, offset + c) * k(keys[j], offset + c);
    logits[j] = dot * scale;
    top = std::max(top, logits[j]);
  }
  double total = 0.0;
  for (std::size_t j = 0; j < keys.size(); ++j) {
    const double weight = std::exp(logits[j] - top);
    if (weight == 0.0) continue;
    total += weight;
    const double step = weight / total;
    for (Index c = 0; c < dim; ++c) {
      double& acc = out(query, offset + c);
      if (step == 1.0) {
        acc = v(keys[j], offset + c);
      } else {
        acc += step * (v(keys[j], offset + c) - acc);
      }
    }
  }
}

// Multi-head attention of every query over the key set produced by
// `keys_for(query, buffer)`. Queries with an empty key set copy their row of
// `passthrough`.
template <typename KeysFor>
Matrix attend_all(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& passthrough,
                  const AttentionParams& p, KeysFor&& keys_for) {
  const Index n = q.rows();
  Matrix out = Matrix::Zero(n, q.cols());
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.head_dim));
  std::vector<Index> keys;
  std::vector<double> logits;
  for (Index i = 0; i < n; ++i) {
    keys_for(i, keys);
    if (keys.empty()) {
      out.row(i) = passthrough.row(i);
      continue;
    }
    for (int h = 0; h < p.head_count; ++h) {
      attend_head(q, k, v, i, keys, static_cast<Index>(h) * p.head_dim, p.head_dim, scale, logits, out);
    }
  }
  return out;
}

void check_block_inputs(const FeatureVideo& z, const ProjectionWeights& w, const AttentionParams& p) {
  p.check(z.channels());
  w.check(z.channels());
}

void check_set(const FeatureVideo& h, const traj::TrajectorySet& set) {
  if (h.frames() != set.frame_count() || h.height() != set.height() || h.width() != set.width()) {
    throw ArgumentError("feature video " + std::to_string(h.frames()) + "x" + std::to_string(h.height()) + "x" +
                        std::to_string(h.width()) + " does not match trajectory grid " +
                        std::to_string(set.frame_count()) + "x" + std::to_string(set.height()) + "x" +
                        std::to_string(set.width()));
  }
}

FeatureVideo projected_attention(const FeatureVideo& z, const ProjectionWeights& w, const AttentionParams& p,
                                 bool same_frame_only) {
  check_block_inputs(z, w, p);
  const Matrix q = tokenwise(z.tokens(), w.wq);
  const Matrix k = tokenwise(z.tokens(), w.wk);
  const Matrix v = tokenwise(z.tokens(), w.wv);
  const Index per_frame = static_cast<Index>(z.height()) * z.width();
  const Index n = z.token_count();
  std::vector<Index> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), Index{0});
  Matrix attended = attend_all(q, k, v, v, p, [&](Index i, std::vector<Index>& keys) {
    if (!same_frame_only) {
      keys = all;
      return;
    }
    const Index first = (i / per_frame) * per_frame;
    keys.assign(all.begin() + first, all.begin() + first + per_frame);
  });
  return z.with_tokens(tokenwise(attended, w.wo));
}

}  // namespace

Eigen::VectorXd attention_weights(const RowVector& q, const Matrix& keys) {
  if (keys.rows() == 0) throw ArgumentError("attention over an empty key set");
  if (keys.cols() != q.size()) throw ArgumentError("query and key dimensions differ");
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.size()));
  Eigen::VectorXd logits = (keys * q.transpose()) * scale;
  const double top = logits.maxCoeff();
  Eigen::VectorXd w = (logits.array() - top).exp().matrix();
  return w / w.sum();
}

RowVector scaled_dot_attention(const RowVector& q, const Matrix& keys, const Matrix& values) {
  if (keys.rows() == 0) throw ArgumentError("attention over an empty key set");
  if (keys.cols() != q.size() || values.rows() != keys.rows() || values.cols() != q.size()) {
    throw ArgumentError("query, key and value dimensions disagree");
  }
  const Matrix qm = q;
  Matrix out = Matrix::Zero(1, values.cols());
  std::vector<Index> idx(static_cast<std::size_t>(keys.rows()));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::vector<double> logits;
  attend_head(qm, keys, values, 0, idx, 0, q.size(), 1.0 / std::sqrt(static_cast<double>(q.size())), logits, out);
  return out.row(0);
}

FeatureVideo spatial_attention(const FeatureVideo& z, const ProjectionWeights& w, const AttentionParams& p) {
  return projected_attention(z, w, p, true);
}

FeatureVideo dense_spatio_temporal_attention(const FeatureVideo& z, const ProjectionWeights& w,
                                             const AttentionParams& p) {
  return projected_attention(z, w, p, false);
}

FeatureVideo trajectory_attention(const FeatureVideo& queries, const FeatureVideo& keys, const FeatureVideo& values,
                                  const FeatureVideo& passthrough, const traj::TrajectorySet& set,
                                  const AttentionParams& p) {
  check_set(queries, set);
  if (!queries.same_shape(keys) || !queries.same_shape(values) || !queries.same_shape(passthrough)) {
    throw ArgumentError("trajectory attention inputs must share one shape");
  }
  p.check(queries.channels());
  const auto& paths = set.trajectories();
  Matrix out = attend_all(queries.tokens(), keys.tokens(), values.tokens(), passthrough.tokens(), p,
                          [&](Index i, std::vector<Index>& key_rows) {
                            key_rows.clear();
                            const int frame = static_cast<int>(i / (static_cast<Index>(set.height()) * set.width()));
                            const int rem = static_cast<int>(i % (static_cast<Index>(set.height()) * set.width()));
                            const traj::PatchRef self{frame, rem % set.width(), rem / set.width()};
                            const auto m = set.lookup(self);
                            if (m.trajectory < 0) return;
                            for (const auto& other : paths[static_cast<std::size_t>(m.trajectory)].patches) {
                              if (other == self || !set.contains(other)) continue;
                              key_rows.push_back(static_cast<Index>(set.flat_index(other)));
                            }
                          });
  return queries.with_tokens(std::move(out));
}

FeatureVideo flow_guided_attention(const FeatureVideo& h, const traj::TrajectorySet& set, const AttentionParams& p) {
  return trajectory_attention(h, h, h, h, set, p);
}

FeatureVideo masked_attention_oracle(const FeatureVideo& z, const AttentionMask& mask, const AttentionParams& p) {
  p.check(z.channels());
  const Index n = z.token_count();
  if (mask.size() != n) {
    throw ArgumentError("mask is " + std::to_string(mask.size()) + " tokens wide, video has " + std::to_string(n));
  }
  const Matrix& x = z.tokens();
  Matrix out = x;
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.head_dim));
  for (Index i = 0; i < n; ++i) {
    std::vector<Index> keys;
    for (Index j = 0; j < n; ++j)
      if (mask.allowed(i, j)) keys.push_back(j);
    if (keys.empty()) continue;
    for (int h = 0; h < p.head_count; ++h) {
      const Index off = static_cast<Index>(h) * p.head_dim;
      std::vector<double> e(keys.size());
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < keys.size(); ++j) {
        e[j] = x.row(i).segment(off, p.head_dim).dot(x.row(keys[j]).segment(off, p.head_dim)) * scale;
        top = std::max(top, e[j]);
      }
      double sum = 0.0;
      for (double& v : e) {
        v = std::exp(v - top);
        sum += v;
      }
      RowVector acc = RowVector::Zero(p.head_dim);
      for (std::size_t j = 0; j < keys.size(); ++j) acc += (e[j] / sum) * x.row(keys[j]).segment(off, p.head_dim);
      out.row(i).segment(off, p.head_dim) = acc;
    }
  }
  return z.with_tokens(std::move(out));
}

FeatureVideo feed_forward(const FeatureVideo& h, const FeedForward& ff) {
  if (ff.w1.rows() != h.channels()) throw ArgumentError("feed-forward input width mismatch");
  Matrix hidden = tokenwise(h.tokens(), ff.w1).rowwise() + ff.b1;
  hidden = hidden.unaryExpr([](double v) { return gelu(v); });
  Matrix out = tokenwise(hidden, ff.w2).rowwise() + ff.b2;
  return h.with_tokens(std::move(out));
}

FeatureVideo flatten_stage(const FeatureVideo& h, const traj::TrajectorySet& set, const ProjectionWeights& w,
                           const AttentionParams& p, FlattenMode mode) {
  if (mode == FlattenMode::direct) return flow_guided_attention(h, set, p);
  check_block_inputs(h, w, p);
  const auto q = h.with_tokens(tokenwise(h.tokens(), w.wq));
  const auto k = h.with_tokens(tokenwise(h.tokens(), w.wk));
  const auto v = h.with_tokens(tokenwise(h.tokens(), w.wv));
  return trajectory_attention(q, k, v, h, set, p);
}

FeatureVideo dsta_flatten_block(const FeatureVideo& z, const traj::TrajectorySet& set, const ProjectionWeights& w,
                                const AttentionParams& p, FlattenMode mode) {
  check_set(z, set);
  const auto h = dense_spatio_temporal_attention(z, w, p);
  return feed_forward(flatten_stage(h, set, w, p, mode), w.ff);
}

FeatureVideo dsta_block(const FeatureVideo& z, const ProjectionWeights& w, const AttentionParams& p) {
  return feed_forward(dense_spatio_temporal_attention(z, w, p), w.ff);
}

}  // namespace flatten::attn
