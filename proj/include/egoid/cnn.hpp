#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "egoid/flowgrid.hpp"
#include "egoid/image.hpp"

namespace egoid::cnn {

struct CnnConfig {
  int k_t = 20;         // temporal kernel length, frames
  int m = 128;          // number of kernels
  int pool_len = 20;
  int pool_stride = 15;
  int n1 = 128;         // hidden width
  int n_classes = 2;
  double lr = 0.01;
  int batch = 200;
  int epochs = 50;
  std::uint64_t seed = 1;
  bool average_pool = false;
  bool early_stop = true;      // stop once the loss improves < plateau_rel over plateau_epochs
  double plateau_rel = 1e-4;
  int plateau_epochs = 5;
  // Input geometry.
  int m_x = 10;
  int m_y = 5;
  int frames = 60;

  int series() const { return 2 * m_x * m_y; }
  int conv_len() const { return frames - k_t + 1; }
  int pooled_len() const { return (conv_len() - pool_len) / pool_stride + 1; }
  int flat_len() const { return m * pooled_len(); }
  void validate() const;
};

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// Layer tensors. conv_w row m holds kernel m laid out [series][k_t];
/// fc1 input index is kernel * pooled_len + pooled position.
template <typename S>
struct Params {
  Mat<S> conv_w;  // m x (series * k_t)
  Vec<S> conv_b;  // m
  Mat<S> fc1_w;   // n1 x (m * pooled_len)
  Vec<S> fc1_b;   // n1
  Mat<S> fc2_w;   // n_classes x n1
  Vec<S> fc2_b;   // n_classes

  static Params zeros(const CnnConfig& cfg);
  std::size_t count() const;
  /// Visits the six tensors in declared order as flat spans.
  template <typename F>
  void for_each(F&& f) {
    f(std::span<S>(conv_w.data(), conv_w.size()));
    f(std::span<S>(conv_b.data(), conv_b.size()));
    f(std::span<S>(fc1_w.data(), fc1_w.size()));
    f(std::span<S>(fc1_b.data(), fc1_b.size()));
    f(std::span<S>(fc2_w.data(), fc2_w.size()));
    f(std::span<S>(fc2_b.data(), fc2_b.size()));
  }
  template <typename T>
  Params<T> cast() const {
    return {conv_w.template cast<T>(), conv_b.template cast<T>(), fc1_w.template cast<T>(),
            fc1_b.template cast<T>(), fc2_w.template cast<T>(), fc2_b.template cast<T>()};
  }
};

/// Glorot-uniform weights, zero biases.
Params<float> init_params(const CnnConfig& cfg, std::uint64_t seed);

template <typename S>
struct Forward {
  Mat<S> cols;    // im2col, (batch * conv_len) x (series * k_t)
  Mat<S> conv;    // pre-activation, (batch * conv_len) x m
  Mat<S> pooled;  // batch x flat_len
  std::vector<int> argmax;  // per pooled cell, conv row offset within the sample
  Mat<S> hidden;  // batch x n1, sigmoid outputs
  Mat<S> probs;   // batch x n_classes
};

/// x holds one prepared window per row, laid out [series][frame].
template <typename S>
Forward<S> forward(const CnnConfig& cfg, const Params<S>& p, const Mat<S>& x);

/// Mean cross-entropy over the batch; fills `grads` (same shapes as p).
template <typename S>
S loss_and_grads(const CnnConfig& cfg, const Params<S>& p, const Mat<S>& x,
                 std::span<const int> labels, Params<S>& grads);

template <typename S>
S loss_only(const CnnConfig& cfg, const Params<S>& p, const Mat<S>& x, std::span<const int> labels);

/// accum += g^2; p -= lr * g / (sqrt(accum) + 1e-8), element-wise.
template <typename S>
void adagrad_step(Params<S>& p, const Params<S>& g, Params<S>& accum, double lr);

struct CnnModel {
  CnnConfig config;
  Params<float> params;
  std::vector<float> input_mean;  // series * frames
  std::string feature_kind = "cnn";
  std::vector<std::string> class_names;
  std::vector<double> loss_history;  // per epoch; sidecar only

  /// sqrt-normalizes the window and subtracts input_mean.
  std::vector<float> prepare(const flowgrid::FeatureWindow& w) const;
  Mat<float> prepare_batch(std::span<const flowgrid::FeatureWindow* const> windows) const;
  /// Per-window class distributions, one row per window.
  Mat<float> predict_proba(std::span<const flowgrid::FeatureWindow> windows) const;
  /// Hidden-layer (fc1 + sigmoid) activations, one row per window.
  Mat<float> extract_descriptor(std::span<const flowgrid::FeatureWindow> windows) const;
};

/// Labels are class indices in [0, cfg.n_classes).
CnnModel train(std::span<const flowgrid::FeatureWindow* const> windows, std::span<const int> labels,
               const CnnConfig& cfg);
CnnModel train(std::span<const flowgrid::FeatureWindow> windows, std::span<const int> labels,
               const CnnConfig& cfg);

/// Horizontal and vertical weights of kernel `index` as (cells x k_t) images,
/// each normalized to [0, 1]; a constant kernel maps to 0.5.
std::pair<Image, Image> visualize_filter(const CnnModel& model, int index);

inline constexpr std::uint16_t kCnnModelVersion = 1;

std::vector<std::uint8_t> encode_model(const CnnModel& model);
CnnModel decode_model(std::span<const std::uint8_t> bytes, const std::string& source);
void save_model(const std::string& path, const CnnModel& model);
CnnModel load_model(const std::string& path);

}  // namespace egoid::cnn
