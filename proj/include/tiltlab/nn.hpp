#pragma once

// Minimal Q-network: one valid 5x5 convolution (stride 1, no pooling) and a dense stack over the
// image stream, a pass-through history stream, concatenation, a common dense head and a linear
// output of P*C action values. Trained with mean Huber loss on the taken actions and RMSprop.

#include "tiltlab/types.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace tiltlab::nn {

template <typename S>
using RowMatrix = Eigen::Matrix<S, Dynamic, Dynamic, Eigen::RowMajor>;
template <typename S>
using RowVec = Eigen::Matrix<S, 1, Dynamic>;

template <typename S>
struct NamedTensor {
  std::string name;
  RowMatrix<S> value;
};

/// Parameters (or gradients, or optimizer slots) in a fixed layer order.
template <typename S>
using ParameterSet = std::vector<NamedTensor<S>>;

struct QNetworkSpec {
  int in_channels = 3;
  int rows = 0;
  int cols = 0;
  int conv_filters = 8;
  int kernel = 5;
  std::vector<int> image_dense{128, 64, 32};
  int history_width = 0;
  std::vector<int> head{64};
  int outputs = 0;

  int conv_rows() const { return rows - kernel + 1; }
  int conv_cols() const { return cols - kernel + 1; }
  int image_size() const { return in_channels * rows * cols; }
  int patch_size() const { return in_channels * kernel * kernel; }
  int conv_positions() const { return conv_rows() * conv_cols(); }

  void validate() const {
    if (rows < kernel || cols < kernel) throw ConfigError("QNetworkSpec: image smaller than the kernel");
    if (conv_filters < 1 || image_dense.empty() || outputs < 1 || history_width < 0)
      throw ConfigError("QNetworkSpec: bad layer widths");
  }
};

/// A mini-batch of observations: one row per sample.
template <typename S>
struct Batch {
  RowMatrix<S> images;   // B x (channels * rows * cols), channel-major planes
  RowMatrix<S> history;  // B x history_width
  Index size() const { return images.rows(); }
};

template <typename S>
S huber(S x) {
  const S a = std::abs(x);
  return a <= S(1) ? S(0.5) * x * x : a - S(0.5);
}

template <typename S>
S huber_grad(S x) {
  return std::clamp(x, S(-1), S(1));
}

template <typename S>
ParameterSet<S> zeros_like(const ParameterSet<S>& params) {
  ParameterSet<S> out = params;
  for (auto& t : out) t.value.setZero();
  return out;
}

template <typename S>
class QNetwork {
 public:
  QNetwork() = default;
  explicit QNetwork(QNetworkSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    auto add = [&](std::string name, Index r, Index c) { params_.push_back({std::move(name), RowMatrix<S>::Zero(r, c)}); };
    add("conv.w", spec_.patch_size(), spec_.conv_filters);
    add("conv.b", 1, spec_.conv_filters);
    Index in = static_cast<Index>(spec_.conv_positions()) * spec_.conv_filters;
    for (std::size_t i = 0; i < spec_.image_dense.size(); ++i) {
      add("image" + std::to_string(i) + ".w", in, spec_.image_dense[i]);
      add("image" + std::to_string(i) + ".b", 1, spec_.image_dense[i]);
      in = spec_.image_dense[i];
    }
    in += spec_.history_width;
    for (std::size_t i = 0; i < spec_.head.size(); ++i) {
      add("head" + std::to_string(i) + ".w", in, spec_.head[i]);
      add("head" + std::to_string(i) + ".b", 1, spec_.head[i]);
      in = spec_.head[i];
    }
    add("out.w", in, spec_.outputs);
    add("out.b", 1, spec_.outputs);
  }

  const QNetworkSpec& spec() const { return spec_; }
  ParameterSet<S>& params() { return params_; }
  const ParameterSet<S>& params() const { return params_; }

  /// Fan-in scaled uniform weights (He range for ReLU layers), zero biases.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < params_.size(); i += 2) {
      auto& w = params_[i].value;
      const bool output = i + 2 == params_.size();
      const S fan_in = static_cast<S>(w.rows());
      const S limit = output ? S(1) / std::sqrt(fan_in) : std::sqrt(S(6) / fan_in);
      std::uniform_real_distribution<S> u(-limit, limit);
      for (Index k = 0; k < w.size(); ++k) w.data()[k] = u(rng);
      params_[i + 1].value.setZero();
    }
  }

  RowMatrix<S> forward(const Batch<S>& batch) const {
    Cache cache;
    return forward(batch, cache);
  }

  /// Mean Huber loss of Q(s_b, a_b) against targets; fills `grads` (same layout as params()).
  S loss_and_gradients(const Batch<S>& batch, std::span<const int> actions, std::span<const S> targets,
                       ParameterSet<S>& grads) const {
    const Index B = batch.size();
    if (static_cast<Index>(actions.size()) != B || static_cast<Index>(targets.size()) != B)
      throw ConfigError("loss_and_gradients: batch, actions and targets must have equal length");
    Cache cache;
    const RowMatrix<S> q = forward(batch, cache);
    RowMatrix<S> dq = RowMatrix<S>::Zero(B, spec_.outputs);
    S loss = 0;
    for (Index b = 0; b < B; ++b) {
      const S diff = q(b, actions[b]) - targets[b];
      if (!std::isfinite(diff)) throw NumericalError("non-finite TD error at batch index " + std::to_string(b));
      loss += huber(diff);
      dq(b, actions[b]) = huber_grad(diff) / static_cast<S>(B);
    }
    loss /= static_cast<S>(B);
    backward(cache, dq, grads);
    return loss;
  }

  S loss(const Batch<S>& batch, std::span<const int> actions, std::span<const S> targets) const {
    const RowMatrix<S> q = forward(batch);
    S total = 0;
    for (Index b = 0; b < batch.size(); ++b) total += huber(q(b, actions[b]) - targets[b]);
    return total / static_cast<S>(batch.size());
  }

 private:
  struct Cache {
    RowMatrix<S> patches;                 // (B * positions) x patch
    RowMatrix<S> conv_pre;                // (B * positions) x filters
    std::vector<RowMatrix<S>> inputs;     // input of every dense layer after the conv
    std::vector<RowMatrix<S>> pre;        // pre-activations of every dense layer
    Index batch = 0;
  };

  void im2col(const Batch<S>& batch, RowMatrix<S>& patches) const {
    const int K = spec_.kernel, H = spec_.rows, W = spec_.cols, C = spec_.in_channels;
    const int Ho = spec_.conv_rows(), Wo = spec_.conv_cols();
    const Index B = batch.size();
    patches.resize(B * Ho * Wo, spec_.patch_size());
    for (Index b = 0; b < B; ++b) {
      const S* img = batch.images.row(b).data();
      for (int oy = 0; oy < Ho; ++oy) {
        for (int ox = 0; ox < Wo; ++ox) {
          S* dst = patches.row((b * Ho + oy) * Wo + ox).data();
          for (int c = 0; c < C; ++c)
            for (int ky = 0; ky < K; ++ky) {
              const S* src = img + (static_cast<Index>(c) * H + oy + ky) * W + ox;
              std::memcpy(dst, src, sizeof(S) * K);
              dst += K;
            }
        }
      }
    }
  }

  RowMatrix<S> forward(const Batch<S>& batch, Cache& cache) const {
    const Index B = batch.size();
    if (batch.images.cols() != spec_.image_size() || batch.history.cols() != spec_.history_width ||
        batch.history.rows() != B)
      throw ConfigError("QNetwork: observation shape does not match the network spec");
    cache.batch = B;
    im2col(batch, cache.patches);
    cache.conv_pre.noalias() = cache.patches * params_[0].value;
    cache.conv_pre.rowwise() += params_[1].value.row(0);

    // Flattened conv features: sample-major, then position, then filter.
    const Index flat = static_cast<Index>(spec_.conv_positions()) * spec_.conv_filters;
    RowMatrix<S> x = Eigen::Map<const RowMatrix<S>>(cache.conv_pre.data(), B, flat).cwiseMax(S(0));

    cache.inputs.clear();
    cache.pre.clear();
    std::size_t p = 2;
    const std::size_t n_image = spec_.image_dense.size();
    const std::size_t n_head = spec_.head.size();
    for (std::size_t l = 0; l < n_image + n_head + 1; ++l, p += 2) {
      if (l == n_image) {
        RowMatrix<S> cat(B, x.cols() + spec_.history_width);
        cat << x, batch.history;
        x = std::move(cat);
      }
      cache.inputs.push_back(x);
      RowMatrix<S> z = x * params_[p].value;
      z.rowwise() += params_[p + 1].value.row(0);
      cache.pre.push_back(z);
      x = l + 1 == n_image + n_head + 1 ? z : z.cwiseMax(S(0));
    }
    return x;
  }

  void backward(const Cache& cache, const RowMatrix<S>& dq, ParameterSet<S>& grads) const {
    if (grads.size() != params_.size()) grads = zeros_like(params_);
    const std::size_t n_image = spec_.image_dense.size();
    const std::size_t n_dense = n_image + spec_.head.size() + 1;
    RowMatrix<S> delta = dq;  // gradient w.r.t. pre-activation of the current layer
    for (std::size_t l = n_dense; l-- > 0;) {
      const std::size_t p = 2 + 2 * l;
      grads[p].value.noalias() = cache.inputs[l].transpose() * delta;
      grads[p + 1].value = delta.colwise().sum();
      RowMatrix<S> dx = delta * params_[p].value.transpose();
      if (l == n_image) dx = dx.leftCols(dx.cols() - spec_.history_width).eval();
      if (l == 0) {
        delta = std::move(dx);
        break;
      }
      delta = dx.cwiseProduct((cache.pre[l - 1].array() > S(0)).template cast<S>().matrix());
    }
    // delta: B x (positions * filters) w.r.t. ReLU(conv); map back to (B * positions) x filters.
    const Eigen::Map<const RowMatrix<S>> dconv_out(delta.data(), cache.conv_pre.rows(), cache.conv_pre.cols());
    const RowMatrix<S> dconv = dconv_out.cwiseProduct((cache.conv_pre.array() > S(0)).template cast<S>().matrix());
    grads[0].value.noalias() = cache.patches.transpose() * dconv;
    grads[1].value = dconv.colwise().sum();
  }

  QNetworkSpec spec_;
  ParameterSet<S> params_;
};

struct RmspropConfig {
  double learning_rate = 2.5e-4;
  double rho = 0.95;
  double momentum = 0.0;
  double epsilon = 1e-7;
};

template <typename S>
class Rmsprop {
 public:
  Rmsprop() = default;
  Rmsprop(RmspropConfig cfg, const ParameterSet<S>& params) : cfg_(cfg), accum_(zeros_like(params)) {
    if (cfg_.momentum != 0.0) velocity_ = zeros_like(params);
  }

  void apply(ParameterSet<S>& params, const ParameterSet<S>& grads) {
    if (params.size() != accum_.size() || grads.size() != accum_.size())
      throw ConfigError("Rmsprop: parameter layout mismatch");
    const S rho = static_cast<S>(cfg_.rho);
    const S lr = static_cast<S>(cfg_.learning_rate);
    const S eps = static_cast<S>(cfg_.epsilon);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& shape = accum_[i].value;
      if (params[i].value.rows() != shape.rows() || params[i].value.cols() != shape.cols() ||
          grads[i].value.rows() != shape.rows() || grads[i].value.cols() != shape.cols())
        throw ConfigError("Rmsprop: parameter layout mismatch");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto a = accum_[i].value.array();
      const auto g = grads[i].value.array();
      a = rho * a + (S(1) - rho) * g.square();
      const auto step = (lr * g / (a + eps).sqrt()).eval();
      if (velocity_.empty()) {
        params[i].value.array() -= step;
      } else {
        auto v = velocity_[i].value.array();
        v = static_cast<S>(cfg_.momentum) * v + step;
        params[i].value.array() -= v;
      }
    }
  }

  const ParameterSet<S>& accumulators() const { return accum_; }

 private:
  RmspropConfig cfg_;
  ParameterSet<S> accum_;
  ParameterSet<S> velocity_;
};

template <typename S>
bool all_finite(const ParameterSet<S>& params) {
  for (const auto& t : params)
    if (!t.value.allFinite()) return false;
  return true;
}

inline constexpr char kCheckpointMagic[4] = {'T', 'L', 'Q', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Header: magic, version, scalar size in bytes, tensor count, then (name length, name, rows, cols)
/// per tensor; then every tensor's row-major data in header order.
template <typename S>
void save_checkpoint(const std::filesystem::path& path, const ParameterSet<S>& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write checkpoint " + path.string());
  auto put = [&](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put(kCheckpointVersion);
  put(static_cast<std::uint32_t>(sizeof(S)));
  put(static_cast<std::uint32_t>(params.size()));
  for (const auto& t : params) {
    put(static_cast<std::uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put(static_cast<std::uint32_t>(t.value.rows()));
    put(static_cast<std::uint32_t>(t.value.cols()));
  }
  for (const auto& t : params)
    os.write(reinterpret_cast<const char*>(t.value.data()), static_cast<std::streamsize>(sizeof(S) * t.value.size()));
}

template <typename S>
ParameterSet<S> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read checkpoint " + path.string());
  auto get = [&] {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
  };
  char magic[4];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) throw ConfigError("checkpoint: bad magic");
  if (get() != kCheckpointVersion) throw ConfigError("checkpoint: unsupported version");
  if (get() != sizeof(S)) throw ConfigError("checkpoint: scalar type mismatch");
  const std::uint32_t n = get();
  ParameterSet<S> params(n);
  for (auto& t : params) {
    const std::uint32_t len = get();
    t.name.resize(len);
    is.read(t.name.data(), len);
    const std::uint32_t r = get();
    const std::uint32_t c = get();
    t.value.resize(r, c);
  }
  for (auto& t : params)
    is.read(reinterpret_cast<char*>(t.value.data()), static_cast<std::streamsize>(sizeof(S) * t.value.size()));
  if (!is) throw ConfigError("checkpoint: truncated");
  return params;
}

}  // namespace tiltlab::nn
