#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "egoid/lpc.hpp"

namespace egoid::svm {

/// Samples are stored one per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Multiclass : std::uint8_t { kOneVsRest = 0, kOneVsOne = 1 };

struct SvmConfig {
  double C = 1.0;
  double gamma = 1e-4;  // k(x, y) = exp(-gamma |x - y|^2)
  double tol = 1e-3;
  int max_passes = 200;  // SMO iteration cap, in units of the training-set size
  std::size_t cache_bytes = std::size_t{1} << 30;
  Multiclass strategy = Multiclass::kOneVsRest;

  void validate() const;
};

double rbf_kernel(std::span<const double> x, std::span<const double> y, double gamma);

/// Kernel values over a fixed sample set. Holds the full Gram matrix when it
/// fits the byte budget, otherwise an LRU cache of rows.
class KernelCache {
 public:
  KernelCache(const Matrix& x, double gamma, std::size_t budget_bytes);

  const double* row(std::size_t i);
  std::size_t size() const { return n_; }
  bool full_gram() const { return gram_.size() > 0; }

 private:
  const Matrix& x_;
  double gamma_;
  std::size_t n_;
  Eigen::VectorXd sq_norms_;
  Matrix gram_;
  std::size_t max_rows_ = 0;
  std::list<std::size_t> lru_;
  std::unordered_map<std::size_t, std::pair<std::vector<double>, std::list<std::size_t>::iterator>>
      rows_;
};

struct SmoResult {
  std::vector<double> alphas;  // per training sample, in the caller's order
  double rho = 0.0;            // decision(x) = sum alpha_i y_i k(x_i, x) - rho
  std::vector<double> decision_values;  // on the training samples
  std::vector<double> dual_trace;       // dual objective, once per sweep and at exit
  std::size_t iterations = 0;
  bool converged = false;
};

/// SMO with maximal-violating-pair selection on the samples `index` of the
/// cache; `y` holds +1/-1 per entry of `index`. `seed` permutes the visiting
/// order, which decides ties during pair selection.
SmoResult solve_smo(KernelCache& kernel, std::span<const std::size_t> index,
                    std::span<const int> y, const SvmConfig& cfg, std::uint64_t seed);

struct PlattParams {
  double a = 0.0;
  double b = 0.0;
};

/// Regularized maximum-likelihood sigmoid fit, P(y=1|f) = 1 / (1 + exp(a f + b)).
PlattParams fit_platt(std::span<const double> decision, std::span<const int> y);
double platt_probability(const PlattParams& p, double decision);

struct BinarySvm {
  Matrix support_vectors;
  std::vector<double> alphas;  // 0 < alpha <= C
  std::vector<int> labels;     // +1 / -1
  double bias = 0.0;           // -rho
  PlattParams platt;
  double gamma = 1e-4;
  std::vector<double> dual_trace;
  bool converged = false;

  double decision(std::span<const double> x) const;
  double probability(std::span<const double> x) const;
};

BinarySvm train_binary(const Matrix& x, std::span<const int> y, const SvmConfig& cfg,
                       std::uint64_t seed);

/// Members reference support vectors in a pool shared by the whole ensemble.
struct SvmMember {
  int positive = 0;   // class index
  int negative = -1;  // class index for one-vs-one, -1 for one-vs-rest
  std::vector<std::uint32_t> sv;
  std::vector<double> coef;  // alpha_i * y_i
  double bias = 0.0;
  PlattParams platt;
  bool converged = false;
};

struct SvmEnsemble {
  SvmConfig config;
  std::vector<int> classes;  // ordered label list
  Matrix pool;
  std::vector<SvmMember> members;
  std::optional<lpc::NormStats> norm;  // applied by callers before prediction
  std::string feature_kind;            // "lpc", "raw", ...
  std::vector<std::string> class_names;

  std::size_t dims() const { return static_cast<std::size_t>(pool.cols()); }
  /// Member decision values for one sample.
  std::vector<double> decisions(std::span<const double> x) const;
  /// Distribution over `classes`.
  std::vector<double> predict_proba(std::span<const double> x) const;
  int predict(std::span<const double> x) const;
};

SvmEnsemble train_multiclass(const Matrix& x, std::span<const int> labels, const SvmConfig& cfg,
                             std::uint64_t seed);

inline constexpr std::uint16_t kSvmModelVersion = 1;

std::vector<std::uint8_t> encode_model(const SvmEnsemble& model);
SvmEnsemble decode_model(std::span<const std::uint8_t> bytes, const std::string& source);
/// Writes the binary model and a `<path>.json` metadata sidecar.
void save_model(const std::string& path, const SvmEnsemble& model);
SvmEnsemble load_model(const std::string& path);

}  // namespace egoid::svm
