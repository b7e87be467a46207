#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "egoid/flowgrid.hpp"

namespace egoid::lpc {

inline constexpr int kDefaultOrder = 9;
inline constexpr double kStdFloor = 1e-8;

/// r[j] = sum_{t=j}^{F-1} x[t] x[t-j] for j = 0..max_lag (biased, unnormalized).
std::vector<double> autocorrelation(std::span<const double> x, int max_lag);

struct LevinsonResult {
  std::vector<double> coeffs;      // a[1..k], x[t] ~ sum_j a[j] x[t-j]
  double residual = 0.0;           // final prediction-error energy
  std::vector<double> reflection;  // one per recursion step
};

/// Levinson-Durbin recursion on r[0..k] with r[0] += 1e-9 * max(r[0], 1).
LevinsonResult levinson_durbin(std::span<const double> r, int k);

struct LpcOptions {
  int order = kDefaultOrder;
  bool subtract_mean = true;
  bool hamming = false;  // taper each series before autocorrelation
};

/// Concatenated LPC coefficients of every (component, cell) series, series-major.
std::vector<double> lpc_descriptor(const flowgrid::FeatureWindow& w, const LpcOptions& options = {});

/// Per-dimension z-scoring statistics.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;

  std::size_t dims() const { return mean.size(); }
};

/// Population mean and standard deviation, std floored at kStdFloor.
NormStats fit_normalizer(std::span<const std::vector<double>> train);
std::vector<double> apply_normalizer(const NormStats& stats, std::span<const double> d);
void apply_normalizer_inplace(const NormStats& stats, std::span<double> d);

}  // namespace egoid::lpc
