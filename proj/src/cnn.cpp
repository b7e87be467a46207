#include "egoid/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "egoid/binary_io.hpp"
#include "egoid/error.hpp"
#include "egoid/rng.hpp"

namespace egoid::cnn {
namespace {

template <typename S>
S sigmoid(S z) {
  return z >= 0 ? S(1) / (S(1) + std::exp(-z)) : std::exp(z) / (S(1) + std::exp(z));
}

template <typename S>
void check_input(const CnnConfig& cfg, const Params<S>& p, const Mat<S>& x) {
  if (x.cols() != static_cast<Eigen::Index>(cfg.series()) * cfg.frames) {
    fail(ErrorCode::kShapeMismatch, "network input has " + std::to_string(x.cols()) +
                                        " values per window, expected " +
                                        std::to_string(cfg.series() * cfg.frames));
  }
  if (p.conv_w.rows() != cfg.m || p.conv_w.cols() != cfg.series() * cfg.k_t ||
      p.fc1_w.rows() != cfg.n1 || p.fc1_w.cols() != cfg.flat_len() ||
      p.fc2_w.rows() != cfg.n_classes || p.fc2_w.cols() != cfg.n1) {
    fail(ErrorCode::kShapeMismatch, "network parameters do not match the configuration");
  }
}

template <typename S>
void check_labels(const CnnConfig& cfg, Eigen::Index rows, std::span<const int> labels) {
  if (rows == 0) fail(ErrorCode::kInvalidArgument, "empty batch");
  if (static_cast<std::size_t>(rows) != labels.size()) {
    fail(ErrorCode::kShapeMismatch, "label count differs from batch size");
  }
  for (int l : labels) {
    if (l < 0 || l >= cfg.n_classes) fail(ErrorCode::kInvalidArgument, "label out of range");
  }
}

template <typename S>
S cross_entropy(const Mat<S>& probs, std::span<const int> labels) {
  S total = 0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    total -= std::log(std::max(probs(static_cast<Eigen::Index>(b), labels[b]), S(1e-30)));
  }
  return total / static_cast<S>(labels.size());
}

void write_config(ByteWriter& w, const CnnConfig& c) {
  for (int v : {c.k_t, c.m, c.pool_len, c.pool_stride, c.n1, c.n_classes, c.batch, c.epochs,
                c.plateau_epochs, c.m_x, c.m_y, c.frames}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.f64(c.lr);
  w.f64(c.plateau_rel);
  w.u64(c.seed);
  w.u8(c.average_pool ? 1 : 0);
  w.u8(c.early_stop ? 1 : 0);
}

CnnConfig read_config(ByteReader& r) {
  CnnConfig c;
  for (int* v : {&c.k_t, &c.m, &c.pool_len, &c.pool_stride, &c.n1, &c.n_classes, &c.batch,
                 &c.epochs, &c.plateau_epochs, &c.m_x, &c.m_y, &c.frames}) {
    *v = static_cast<int>(r.u32());
  }
  c.lr = r.f64();
  c.plateau_rel = r.f64();
  c.seed = r.u64();
  c.average_pool = r.u8() != 0;
  c.early_stop = r.u8() != 0;
  return c;
}

}  // namespace

void CnnConfig::validate() const {
  if (k_t <= 0 || m <= 0 || pool_len <= 0 || pool_stride <= 0 || n1 <= 0 || batch <= 0 ||
      epochs <= 0 || m_x <= 0 || m_y <= 0 || frames <= 0 || plateau_epochs <= 0) {
    fail(ErrorCode::kInvalidArgument, "network sizes must be positive");
  }
  if (n_classes < 2) fail(ErrorCode::kInvalidArgument, "network needs at least 2 classes");
  if (k_t > frames) fail(ErrorCode::kInvalidArgument, "k_t exceeds the window length");
  if (conv_len() < pool_len) {
    fail(ErrorCode::kInvalidArgument, "pooling window longer than the convolution output");
  }
  if (!(lr > 0.0)) fail(ErrorCode::kInvalidArgument, "learning rate must be positive");
}

template <typename S>
Params<S> Params<S>::zeros(const CnnConfig& cfg) {
  Params<S> p;
  p.conv_w = Mat<S>::Zero(cfg.m, cfg.series() * cfg.k_t);
  p.conv_b = Vec<S>::Zero(cfg.m);
  p.fc1_w = Mat<S>::Zero(cfg.n1, cfg.flat_len());
  p.fc1_b = Vec<S>::Zero(cfg.n1);
  p.fc2_w = Mat<S>::Zero(cfg.n_classes, cfg.n1);
  p.fc2_b = Vec<S>::Zero(cfg.n_classes);
  return p;
}

template <typename S>
std::size_t Params<S>::count() const {
  return static_cast<std::size_t>(conv_w.size() + conv_b.size() + fc1_w.size() + fc1_b.size() +
                                  fc2_w.size() + fc2_b.size());
}

Params<float> init_params(const CnnConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  auto p = Params<float>::zeros(cfg);
  Rng rng(seed);
  auto glorot = [&](Mat<float>& w, double fan_in, double fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      w.data()[i] = static_cast<float>(rng.uniform(-limit, limit));
    }
  };
  // A conv unit sees series * k_t inputs and feeds m * k_t outputs.
  glorot(p.conv_w, cfg.series() * cfg.k_t, cfg.m * cfg.k_t);
  glorot(p.fc1_w, cfg.flat_len(), cfg.n1);
  glorot(p.fc2_w, cfg.n1, cfg.n_classes);
  return p;
}

template <typename S>
Forward<S> forward(const CnnConfig& cfg, const Params<S>& p, const Mat<S>& x) {
  check_input(cfg, p, x);
  const Eigen::Index batch = x.rows();
  const int len = cfg.conv_len();
  const int k = cfg.k_t;
  const int frames = cfg.frames;
  const int series = cfg.series();
  const int pooled = cfg.pooled_len();

  Forward<S> f;
  f.cols.resize(batch * len, static_cast<Eigen::Index>(series) * k);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const S* src = x.row(b).data();
    for (int t = 0; t < len; ++t) {
      S* dst = f.cols.row(b * len + t).data();
      for (int s = 0; s < series; ++s) {
        std::copy_n(src + static_cast<std::size_t>(s) * frames + t, k, dst + static_cast<std::size_t>(s) * k);
      }
    }
  }
  f.conv.noalias() = f.cols * p.conv_w.transpose();
  f.conv.rowwise() += p.conv_b.transpose();

  f.pooled.resize(batch, cfg.flat_len());
  f.argmax.assign(static_cast<std::size_t>(batch) * cfg.flat_len(), 0);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int m = 0; m < cfg.m; ++m) {
      for (int q = 0; q < pooled; ++q) {
        const int t0 = q * cfg.pool_stride;
        const std::size_t cell = static_cast<std::size_t>(b) * cfg.flat_len() + m * pooled + q;
        if (cfg.average_pool) {
          S acc = 0;
          for (int t = t0; t < t0 + cfg.pool_len; ++t) acc += std::max(f.conv(b * len + t, m), S(0));
          f.pooled(b, m * pooled + q) = acc / static_cast<S>(cfg.pool_len);
          f.argmax[cell] = t0;
        } else {
          int best = t0;
          S best_v = std::max(f.conv(b * len + t0, m), S(0));
          for (int t = t0 + 1; t < t0 + cfg.pool_len; ++t) {
            const S v = std::max(f.conv(b * len + t, m), S(0));
            if (v > best_v) {
              best_v = v;
              best = t;
            }
          }
          f.pooled(b, m * pooled + q) = best_v;
          f.argmax[cell] = best;
        }
      }
    }
  }

  f.hidden.noalias() = f.pooled * p.fc1_w.transpose();
  f.hidden.rowwise() += p.fc1_b.transpose();
  f.hidden = f.hidden.unaryExpr([](S z) { return sigmoid(z); });

  f.probs.noalias() = f.hidden * p.fc2_w.transpose();
  f.probs.rowwise() += p.fc2_b.transpose();
  for (Eigen::Index b = 0; b < batch; ++b) {
    const S top = f.probs.row(b).maxCoeff();
    f.probs.row(b) = (f.probs.row(b).array() - top).exp().matrix();
    f.probs.row(b) /= f.probs.row(b).sum();
  }
  return f;
}

template <typename S>
S loss_only(const CnnConfig& cfg, const Params<S>& p, const Mat<S>& x, std::span<const int> labels) {
  check_labels<S>(cfg, x.rows(), labels);
  return cross_entropy(forward(cfg, p, x).probs, labels);
}

template <typename S>
S loss_and_grads(const CnnConfig& cfg, const Params<S>& p, const Mat<S>& x,
                 std::span<const int> labels, Params<S>& g) {
  check_labels<S>(cfg, x.rows(), labels);
  const Forward<S> f = forward(cfg, p, x);
  const Eigen::Index batch = x.rows();
  const int len = cfg.conv_len();
  const int pooled = cfg.pooled_len();

  Mat<S> dz2 = f.probs;
  for (Eigen::Index b = 0; b < batch; ++b) dz2(b, labels[b]) -= S(1);
  dz2 /= static_cast<S>(batch);
  g.fc2_w.noalias() = dz2.transpose() * f.hidden;
  g.fc2_b = dz2.colwise().sum().transpose();

  Mat<S> dz1 = dz2 * p.fc2_w;
  dz1.array() *= f.hidden.array() * (S(1) - f.hidden.array());
  g.fc1_w.noalias() = dz1.transpose() * f.pooled;
  g.fc1_b = dz1.colwise().sum().transpose();

  const Mat<S> dpool = dz1 * p.fc1_w;
  Mat<S> dconv = Mat<S>::Zero(f.conv.rows(), f.conv.cols());
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int m = 0; m < cfg.m; ++m) {
      for (int q = 0; q < pooled; ++q) {
        const S d = dpool(b, m * pooled + q);
        if (cfg.average_pool) {
          const int t0 = q * cfg.pool_stride;
          for (int t = t0; t < t0 + cfg.pool_len; ++t) {
            dconv(b * len + t, m) += d / static_cast<S>(cfg.pool_len);
          }
        } else {
          const int t = f.argmax[static_cast<std::size_t>(b) * cfg.flat_len() + m * pooled + q];
          dconv(b * len + t, m) += d;
        }
      }
    }
  }
  dconv.array() *= (f.conv.array() > S(0)).template cast<S>();
  g.conv_w.noalias() = dconv.transpose() * f.cols;
  g.conv_b = dconv.colwise().sum().transpose();
  return cross_entropy(f.probs, labels);
}

template <typename S>
void adagrad_step(Params<S>& p, const Params<S>& g, Params<S>& accum, double lr) {
  auto step = [lr](auto& w, const auto& gw, auto& acc) {
    if (w.size() != gw.size() || w.size() != acc.size()) {
      fail(ErrorCode::kShapeMismatch, "AdaGrad tensors differ in shape");
    }
    acc.array() += gw.array().square();
    w.array() -= static_cast<S>(lr) * gw.array() / (acc.array().sqrt() + static_cast<S>(1e-8));
  };
  step(p.conv_w, g.conv_w, accum.conv_w);
  step(p.conv_b, g.conv_b, accum.conv_b);
  step(p.fc1_w, g.fc1_w, accum.fc1_w);
  step(p.fc1_b, g.fc1_b, accum.fc1_b);
  step(p.fc2_w, g.fc2_w, accum.fc2_w);
  step(p.fc2_b, g.fc2_b, accum.fc2_b);
}

template struct Params<float>;
template struct Params<double>;
template Forward<float> forward(const CnnConfig&, const Params<float>&, const Mat<float>&);
template Forward<double> forward(const CnnConfig&, const Params<double>&, const Mat<double>&);
template float loss_and_grads(const CnnConfig&, const Params<float>&, const Mat<float>&,
                              std::span<const int>, Params<float>&);
template double loss_and_grads(const CnnConfig&, const Params<double>&, const Mat<double>&,
                               std::span<const int>, Params<double>&);
template float loss_only(const CnnConfig&, const Params<float>&, const Mat<float>&,
                         std::span<const int>);
template double loss_only(const CnnConfig&, const Params<double>&, const Mat<double>&,
                          std::span<const int>);
template void adagrad_step(Params<float>&, const Params<float>&, Params<float>&, double);
template void adagrad_step(Params<double>&, const Params<double>&, Params<double>&, double);

std::vector<float> CnnModel::prepare(const flowgrid::FeatureWindow& w) const {
  if (w.m_x != config.m_x || w.m_y != config.m_y || w.frames != config.frames) {
    fail(ErrorCode::kShapeMismatch,
         "window " + std::to_string(w.m_x) + "x" + std::to_string(w.m_y) + "x" +
             std::to_string(w.frames) + " does not match network input " +
             std::to_string(config.m_x) + "x" + std::to_string(config.m_y) + "x" +
             std::to_string(config.frames));
  }
  std::vector<float> out(w.data.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = w.data[i];
    out[i] = static_cast<float>(std::copysign(std::sqrt(std::abs(x)), x)) - input_mean[i];
  }
  return out;
}

Mat<float> CnnModel::prepare_batch(std::span<const flowgrid::FeatureWindow* const> windows) const {
  Mat<float> x(static_cast<Eigen::Index>(windows.size()), config.series() * config.frames);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto row = prepare(*windows[i]);
    std::copy(row.begin(), row.end(), x.row(static_cast<Eigen::Index>(i)).data());
  }
  return x;
}

namespace {

std::vector<const flowgrid::FeatureWindow*> pointers(std::span<const flowgrid::FeatureWindow> windows) {
  std::vector<const flowgrid::FeatureWindow*> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(&w);
  return out;
}

}  // namespace

Mat<float> CnnModel::predict_proba(std::span<const flowgrid::FeatureWindow> windows) const {
  const auto ptrs = pointers(windows);
  Mat<float> out(static_cast<Eigen::Index>(windows.size()), config.n_classes);
  for (std::size_t start = 0; start < windows.size(); start += config.batch) {
    const std::size_t n = std::min<std::size_t>(config.batch, windows.size() - start);
    const auto f = forward(config, params, prepare_batch(std::span(ptrs).subspan(start, n)));
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) = f.probs;
  }
  return out;
}

Mat<float> CnnModel::extract_descriptor(std::span<const flowgrid::FeatureWindow> windows) const {
  const auto ptrs = pointers(windows);
  Mat<float> out(static_cast<Eigen::Index>(windows.size()), config.n1);
  for (std::size_t start = 0; start < windows.size(); start += config.batch) {
    const std::size_t n = std::min<std::size_t>(config.batch, windows.size() - start);
    const auto f = forward(config, params, prepare_batch(std::span(ptrs).subspan(start, n)));
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) = f.hidden;
  }
  return out;
}

CnnModel train(std::span<const flowgrid::FeatureWindow> windows, std::span<const int> labels,
               const CnnConfig& cfg) {
  const auto ptrs = pointers(windows);
  return train(std::span<const flowgrid::FeatureWindow* const>(ptrs), labels, cfg);
}

CnnModel train(std::span<const flowgrid::FeatureWindow* const> windows, std::span<const int> labels,
               const CnnConfig& cfg) {
  cfg.validate();
  if (windows.empty()) fail(ErrorCode::kInvalidArgument, "no training windows");
  if (windows.size() != labels.size()) {
    fail(ErrorCode::kShapeMismatch, "label count differs from window count");
  }
  std::vector<int> seen(labels.begin(), labels.end());
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  if (seen.size() < 2) fail(ErrorCode::kValidation, "network training needs two classes");
  if (seen.front() < 0 || seen.back() >= cfg.n_classes) {
    fail(ErrorCode::kInvalidArgument, "label out of range for n_classes");
  }

  CnnModel model;
  model.config = cfg;
  const std::size_t dims = static_cast<std::size_t>(cfg.series()) * cfg.frames;
  model.input_mean.assign(dims, 0.0f);
  Mat<float> data = model.prepare_batch(windows);  // sqrt-normalized; mean still zero here
  std::vector<double> mean(dims, 0.0);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (std::size_t j = 0; j < dims; ++j) mean[j] += data(i, static_cast<Eigen::Index>(j));
  }
  for (std::size_t j = 0; j < dims; ++j) {
    model.input_mean[j] = static_cast<float>(mean[j] / static_cast<double>(data.rows()));
  }
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (std::size_t j = 0; j < dims; ++j) data(i, static_cast<Eigen::Index>(j)) -= model.input_mean[j];
  }

  model.params = init_params(cfg, derive_seed(cfg.seed, 1));
  auto accum = Params<float>::zeros(cfg);
  auto grads = Params<float>::zeros(cfg);
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Mat<float> xb;
  std::vector<int> yb;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch)));
    rng.shuffle(std::span(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t n = std::min<std::size_t>(cfg.batch, order.size() - start);
      xb.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dims));
      yb.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        xb.row(static_cast<Eigen::Index>(i)) = data.row(static_cast<Eigen::Index>(order[start + i]));
        yb[i] = labels[order[start + i]];
      }
      const float loss = loss_and_grads(cfg, model.params, xb, yb, grads);
      adagrad_step(model.params, grads, accum, cfg.lr);
      epoch_loss += static_cast<double>(loss) * static_cast<double>(n);
    }
    model.loss_history.push_back(epoch_loss / static_cast<double>(order.size()));
    const auto& h = model.loss_history;
    if (cfg.early_stop && h.size() > static_cast<std::size_t>(cfg.plateau_epochs)) {
      const double before = h[h.size() - 1 - cfg.plateau_epochs];
      if ((before - h.back()) < cfg.plateau_rel * std::abs(before)) break;
    }
  }
  return model;
}

std::pair<Image, Image> visualize_filter(const CnnModel& model, int index) {
  const CnnConfig& cfg = model.config;
  if (index < 0 || index >= cfg.m) {
    fail(ErrorCode::kInvalidArgument, "filter index " + std::to_string(index) + " out of range [0, " +
                                          std::to_string(cfg.m) + ")");
  }
  const int cells = cfg.m_x * cfg.m_y;
  auto render = [&](int component) {
    Image img(cfg.k_t, cells);
    const float* w = model.params.conv_w.row(index).data() +
                     static_cast<std::size_t>(component) * cells * cfg.k_t;
    const auto [lo, hi] = std::minmax_element(w, w + static_cast<std::size_t>(cells) * cfg.k_t);
    const float range = *hi - *lo;
    for (int c = 0; c < cells; ++c) {
      for (int t = 0; t < cfg.k_t; ++t) {
        const float v = w[static_cast<std::size_t>(c) * cfg.k_t + t];
        img.at(t, c) = range > 0.0f ? (v - *lo) / range : 0.5f;
      }
    }
    return img;
  };
  return {render(0), render(1)};
}

std::vector<std::uint8_t> encode_model(const CnnModel& model) {
  ByteWriter w;
  w.magic("EGNN");
  w.u16(kCnnModelVersion);
  write_config(w, model.config);
  w.str(model.feature_kind);
  w.u32(static_cast<std::uint32_t>(model.class_names.size()));
  for (const auto& name : model.class_names) w.str(name);
  w.u32(static_cast<std::uint32_t>(model.input_mean.size()));
  for (float v : model.input_mean) w.f32(v);
  auto params = model.params;
  params.for_each([&](std::span<float> t) {
    for (float v : t) w.f32(v);
  });
  return std::move(w.bytes());
}

CnnModel decode_model(std::span<const std::uint8_t> bytes, const std::string& source) {
  ByteReader r(bytes, source);
  r.expect_magic("EGNN");
  const std::uint16_t version = r.u16();
  if (version != kCnnModelVersion) {
    fail(ErrorCode::kVersionMismatch, source + ": network model version " +
                                          std::to_string(version) + ", expected " +
                                          std::to_string(kCnnModelVersion));
  }
  CnnModel model;
  model.config = read_config(r);
  try {
    model.config.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kFormat, source + ": " + e.what());
  }
  model.feature_kind = r.str();
  model.class_names.resize(r.u32());
  for (auto& name : model.class_names) name = r.str();
  const std::uint32_t mean_len = r.u32();
  if (mean_len != static_cast<std::uint32_t>(model.config.series() * model.config.frames)) {
    fail(ErrorCode::kFormat, source + ": input mean does not match the configuration");
  }
  model.input_mean.resize(mean_len);
  for (float& v : model.input_mean) v = r.f32();
  model.params = Params<float>::zeros(model.config);
  if (r.remaining() != model.params.count() * 4) {
    fail(ErrorCode::kFormat, source + ": parameter block is " + std::to_string(r.remaining()) +
                                 " bytes, expected " + std::to_string(model.params.count() * 4));
  }
  model.params.for_each([&](std::span<float> t) {
    for (float& v : t) v = r.f32();
  });
  return model;
}

void save_model(const std::string& path, const CnnModel& model) {
  write_file_atomic(path, encode_model(model));
  const CnnConfig& c = model.config;
  nlohmann::ordered_json meta;
  meta["format"] = "EGNN";
  meta["version"] = kCnnModelVersion;
  meta["feature_kind"] = model.feature_kind;
  meta["config"] = {{"k_t", c.k_t},         {"m", c.m},
                    {"pool_len", c.pool_len}, {"pool_stride", c.pool_stride},
                    {"n1", c.n1},           {"n_classes", c.n_classes},
                    {"lr", c.lr},           {"batch", c.batch},
                    {"epochs", c.epochs},   {"seed", c.seed},
                    {"pool", c.average_pool ? "average" : "max"},
                    {"early_stop", c.early_stop}, {"m_x", c.m_x},
                    {"m_y", c.m_y},         {"frames", c.frames}};
  meta["classes"] = model.class_names;
  meta["epochs_run"] = model.loss_history.size();
  meta["loss_history"] = model.loss_history;
  write_text_atomic(path + ".json", meta.dump(2) + "\n");
}

CnnModel load_model(const std::string& path) { return decode_model(read_file_bytes(path), path); }

}  // namespace egoid::cnn
