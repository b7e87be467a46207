#include "egoid/lpc.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "egoid/error.hpp"

namespace egoid::lpc {

std::vector<double> autocorrelation(std::span<const double> x, int max_lag) {
  if (max_lag < 0 || static_cast<std::size_t>(max_lag) >= x.size()) {
    fail(ErrorCode::kInvalidArgument, "autocorrelation lag " + std::to_string(max_lag) +
                                          " needs more than " + std::to_string(x.size()) +
                                          " samples");
  }
  std::vector<double> r(max_lag + 1, 0.0);
  for (int j = 0; j <= max_lag; ++j) {
    double acc = 0.0;
    for (std::size_t t = j; t < x.size(); ++t) acc += x[t] * x[t - j];
    r[j] = acc;
  }
  return r;
}

LevinsonResult levinson_durbin(std::span<const double> r, int k) {
  if (k < 0 || r.size() < static_cast<std::size_t>(k) + 1) {
    fail(ErrorCode::kInvalidArgument, "levinson_durbin needs k+1 autocorrelation values");
  }
  LevinsonResult out;
  out.coeffs.assign(k, 0.0);
  out.reflection.assign(k, 0.0);
  if (r[0] == 0.0) return out;

  const double r0 = r[0] + 1e-9 * std::max(r[0], 1.0);
  std::vector<double> a(k + 1, 0.0), prev(k + 1, 0.0);
  double err = r0;
  for (int i = 1; i <= k; ++i) {
    double acc = r[i];
    for (int j = 1; j < i; ++j) acc -= a[j] * r[i - j];
    const double kappa = acc / err;
    prev = a;
    a[i] = kappa;
    for (int j = 1; j < i; ++j) a[j] = prev[j] - kappa * prev[i - j];
    err *= (1.0 - kappa * kappa);
    out.reflection[i - 1] = kappa;
  }
  std::copy(a.begin() + 1, a.end(), out.coeffs.begin());
  out.residual = std::max(err, 0.0);
  return out;
}

std::vector<double> lpc_descriptor(const flowgrid::FeatureWindow& w, const LpcOptions& options) {
  const int k = options.order;
  if (k <= 0) fail(ErrorCode::kInvalidArgument, "LPC order must be positive");
  if (w.frames <= k) {
    fail(ErrorCode::kShapeMismatch, "window of " + std::to_string(w.frames) +
                                        " frames is too short for LPC order " +
                                        std::to_string(k));
  }
  std::vector<double> taper;
  if (options.hamming) {
    taper.resize(w.frames);
    for (int t = 0; t < w.frames; ++t) {
      taper[t] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * t / (w.frames - 1));
    }
  }
  const std::size_t n_series = w.series_count();
  std::vector<double> out(n_series * k);
  std::vector<double> series(w.frames);
  for (std::size_t s = 0; s < n_series; ++s) {
    const auto src = w.series(s);
    std::copy(src.begin(), src.end(), series.begin());
    if (options.subtract_mean) {
      double mean = 0.0;
      for (double x : series) mean += x;
      mean /= w.frames;
      for (double& x : series) x -= mean;
    }
    if (options.hamming) {
      for (int t = 0; t < w.frames; ++t) series[t] *= taper[t];
    }
    const auto fit = levinson_durbin(autocorrelation(series, k), k);
    std::copy(fit.coeffs.begin(), fit.coeffs.end(), out.begin() + s * k);
  }
  return out;
}

NormStats fit_normalizer(std::span<const std::vector<double>> train) {
  if (train.empty()) fail(ErrorCode::kInvalidArgument, "cannot fit a normalizer on no data");
  const std::size_t dims = train.front().size();
  NormStats stats;
  stats.mean.assign(dims, 0.0);
  stats.std.assign(dims, 0.0);
  for (const auto& d : train) {
    if (d.size() != dims) fail(ErrorCode::kShapeMismatch, "descriptor dimensions differ");
    for (std::size_t i = 0; i < dims; ++i) stats.mean[i] += d[i];
  }
  const double n = static_cast<double>(train.size());
  for (double& m : stats.mean) m /= n;
  for (const auto& d : train) {
    for (std::size_t i = 0; i < dims; ++i) {
      const double c = d[i] - stats.mean[i];
      stats.std[i] += c * c;
    }
  }
  for (double& s : stats.std) s = std::max(std::sqrt(s / n), kStdFloor);
  return stats;
}

void apply_normalizer_inplace(const NormStats& stats, std::span<double> d) {
  if (d.size() != stats.dims()) {
    fail(ErrorCode::kShapeMismatch, "descriptor has " + std::to_string(d.size()) +
                                        " dimensions, normalizer expects " +
                                        std::to_string(stats.dims()));
  }
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = (d[i] - stats.mean[i]) / stats.std[i];
}

std::vector<double> apply_normalizer(const NormStats& stats, std::span<const double> d) {
  std::vector<double> out(d.begin(), d.end());
  apply_normalizer_inplace(stats, out);
  return out;
}

}  // namespace egoid::lpc
