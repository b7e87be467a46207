#include "egoid/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "egoid/binary_io.hpp"
#include "egoid/error.hpp"
#include "egoid/rng.hpp"

namespace egoid::svm {
namespace {

constexpr double kTau = 1e-12;

double kernel_from_dot(double sq_a, double sq_b, double dot, double gamma) {
  return std::exp(-gamma * std::max(sq_a + sq_b - 2.0 * dot, 0.0));
}

void check_finite(const Matrix& x) {
  if (!x.allFinite()) fail(ErrorCode::kValidation, "non-finite feature value in training data");
}

double dual_objective(const std::vector<double>& alpha, const std::vector<double>& grad) {
  double d = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) d += alpha[i] * (1.0 - grad[i]);
  return 0.5 * d;
}

double platt_objective(std::span<const double> f, std::span<const double> t, double a, double b) {
  double v = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double z = f[i] * a + b;
    v += z >= 0 ? t[i] * z + std::log1p(std::exp(-z)) : (t[i] - 1.0) * z + std::log1p(std::exp(z));
  }
  return v;
}

}  // namespace

void SvmConfig::validate() const {
  if (!(C > 0.0) || !(gamma > 0.0) || !(tol > 0.0) || max_passes <= 0) {
    fail(ErrorCode::kInvalidArgument, "SVM C, gamma, tol and max_passes must be positive");
  }
}

double rbf_kernel(std::span<const double> x, std::span<const double> y, double gamma) {
  if (x.size() != y.size()) {
    fail(ErrorCode::kShapeMismatch, "rbf_kernel dimension mismatch: " + std::to_string(x.size()) +
                                        " vs " + std::to_string(y.size()));
  }
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = x[i] - y[i];
    d += diff * diff;
  }
  return std::exp(-gamma * d);
}

KernelCache::KernelCache(const Matrix& x, double gamma, std::size_t budget_bytes)
    : x_(x), gamma_(gamma), n_(static_cast<std::size_t>(x.rows())) {
  sq_norms_ = x.rowwise().squaredNorm();
  const std::size_t row_bytes = std::max<std::size_t>(n_, 1) * sizeof(double);
  if (n_ > 0 && n_ * row_bytes <= budget_bytes) {
    gram_ = Matrix::Zero(x.rows(), x.rows());
    gram_.selfadjointView<Eigen::Lower>().rankUpdate(x);
    for (std::size_t i = 0; i < n_; ++i) {
      gram_(i, i) = 1.0;
      for (std::size_t j = 0; j < i; ++j) {
        const double k = kernel_from_dot(sq_norms_[i], sq_norms_[j], gram_(i, j), gamma_);
        gram_(i, j) = k;
        gram_(j, i) = k;
      }
    }
  } else {
    max_rows_ = std::max<std::size_t>(budget_bytes / row_bytes, 2);
  }
}

const double* KernelCache::row(std::size_t i) {
  if (full_gram()) return gram_.data() + i * n_;
  auto it = rows_.find(i);
  if (it != rows_.end()) {
    lru_.splice(lru_.begin(), lru_, it->second.second);
    return it->second.first.data();
  }
  if (rows_.size() >= max_rows_) {
    rows_.erase(lru_.back());
    lru_.pop_back();
  }
  Eigen::VectorXd dots = x_ * x_.row(i).transpose();
  std::vector<double> values(n_);
  for (std::size_t j = 0; j < n_; ++j) {
    values[j] = j == i ? 1.0 : kernel_from_dot(sq_norms_[i], sq_norms_[j], dots[j], gamma_);
  }
  lru_.push_front(i);
  auto [pos, inserted] = rows_.emplace(i, std::make_pair(std::move(values), lru_.begin()));
  return pos->second.first.data();
}

SmoResult solve_smo(KernelCache& kernel, std::span<const std::size_t> index,
                    std::span<const int> y, const SvmConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t n = index.size();
  if (y.size() != n) fail(ErrorCode::kShapeMismatch, "label count differs from sample count");
  bool has_pos = false, has_neg = false;
  for (int v : y) {
    if (v == 1) has_pos = true;
    else if (v == -1) has_neg = true;
    else fail(ErrorCode::kInvalidArgument, "binary labels must be +1 or -1");
  }
  if (!has_pos || !has_neg) fail(ErrorCode::kValidation, "SVM training needs both classes");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span(order));

  std::vector<std::size_t> gi(n);
  std::vector<double> yy(n);
  for (std::size_t p = 0; p < n; ++p) {
    gi[p] = index[order[p]];
    yy[p] = y[order[p]];
  }
  const double c = cfg.C;
  std::vector<double> alpha(n, 0.0), grad(n, -1.0), qi(n), qj(n);

  SmoResult res;
  res.dual_trace.push_back(0.0);
  const std::size_t max_iter = static_cast<std::size_t>(cfg.max_passes) * std::max<std::size_t>(n, 1);
  std::size_t iter = 0;
  while (true) {
    double m_up = -std::numeric_limits<double>::infinity();
    double m_low = std::numeric_limits<double>::infinity();
    std::ptrdiff_t i = -1, j = -1;
    for (std::size_t p = 0; p < n; ++p) {
      const double v = -yy[p] * grad[p];
      const bool up = yy[p] > 0 ? alpha[p] < c : alpha[p] > 0.0;
      const bool low = yy[p] > 0 ? alpha[p] > 0.0 : alpha[p] < c;
      if (up && v > m_up) {
        m_up = v;
        i = static_cast<std::ptrdiff_t>(p);
      }
      if (low && v < m_low) {
        m_low = v;
        j = static_cast<std::ptrdiff_t>(p);
      }
    }
    if (i < 0 || j < 0 || m_up - m_low < cfg.tol) {
      res.converged = true;
      break;
    }
    if (iter >= max_iter) break;

    const double* ki = kernel.row(gi[i]);
    for (std::size_t p = 0; p < n; ++p) qi[p] = yy[i] * yy[p] * ki[gi[p]];
    const double* kj = kernel.row(gi[j]);
    for (std::size_t p = 0; p < n; ++p) qj[p] = yy[j] * yy[p] * kj[gi[p]];

    const double old_i = alpha[i], old_j = alpha[j];
    if (yy[i] != yy[j]) {
      double quad = qi[i] + qj[j] + 2.0 * qi[j];
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[i] > c) {
          alpha[i] = c;
          alpha[j] = c - diff;
        }
      } else if (alpha[j] > c) {
        alpha[j] = c;
        alpha[i] = c + diff;
      }
    } else {
      double quad = qi[i] + qj[j] - 2.0 * qi[j];
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > c) {
        if (alpha[i] > c) {
          alpha[i] = c;
          alpha[j] = sum - c;
        }
      } else if (alpha[j] < 0.0) {
        alpha[j] = 0.0;
        alpha[i] = sum;
      }
      if (sum > c) {
        if (alpha[j] > c) {
          alpha[j] = c;
          alpha[i] = sum - c;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = sum;
      }
    }
    const double di = alpha[i] - old_i, dj = alpha[j] - old_j;
    for (std::size_t p = 0; p < n; ++p) grad[p] += qi[p] * di + qj[p] * dj;

    ++iter;
    if (iter % n == 0) res.dual_trace.push_back(dual_objective(alpha, grad));
  }
  res.iterations = iter;
  res.dual_trace.push_back(dual_objective(alpha, grad));

  // rho: average of y*G over free vectors, midpoint of the feasible interval otherwise.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  std::size_t n_free = 0;
  for (std::size_t p = 0; p < n; ++p) {
    const double yg = yy[p] * grad[p];
    if (alpha[p] >= c) {
      if (yy[p] < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (alpha[p] <= 0.0) {
      if (yy[p] > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  res.rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : 0.5 * (ub + lb);

  res.alphas.assign(n, 0.0);
  res.decision_values.assign(n, 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    res.alphas[order[p]] = alpha[p];
    res.decision_values[order[p]] = yy[p] * (grad[p] + 1.0) - res.rho;
  }
  return res;
}

PlattParams fit_platt(std::span<const double> decision, std::span<const int> y) {
  if (decision.size() != y.size() || decision.empty()) {
    fail(ErrorCode::kInvalidArgument, "Platt fit needs one label per decision value");
  }
  double n_pos = 0.0, n_neg = 0.0;
  for (int v : y) (v > 0 ? n_pos : n_neg) += 1.0;
  const double hi = (n_pos + 1.0) / (n_pos + 2.0);
  const double lo = 1.0 / (n_neg + 2.0);
  std::vector<double> t(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) t[i] = y[i] > 0 ? hi : lo;

  constexpr int kMaxIter = 100;
  constexpr double kMinStep = 1e-10;
  constexpr double kSigma = 1e-12;
  constexpr double kEps = 1e-5;
  double a = 0.0;
  double b = std::log((n_neg + 1.0) / (n_pos + 1.0));
  double fval = platt_objective(decision, t, a, b);
  for (int it = 0; it < kMaxIter; ++it) {
    double h11 = kSigma, h22 = kSigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < decision.size(); ++i) {
      const double z = decision[i] * a + b;
      double p, q;
      if (z >= 0) {
        p = std::exp(-z) / (1.0 + std::exp(-z));
        q = 1.0 / (1.0 + std::exp(-z));
      } else {
        p = 1.0 / (1.0 + std::exp(z));
        q = std::exp(z) / (1.0 + std::exp(z));
      }
      const double d2 = p * q;
      h11 += decision[i] * decision[i] * d2;
      h22 += d2;
      h21 += decision[i] * d2;
      const double d1 = t[i] - p;
      g1 += decision[i] * d1;
      g2 += d1;
    }
    if (std::abs(g1) < kEps && std::abs(g2) < kEps) break;
    const double det = h11 * h22 - h21 * h21;
    const double da = -(h22 * g1 - h21 * g2) / det;
    const double db = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * da + g2 * db;
    double step = 1.0;
    while (step >= kMinStep) {
      const double na = a + step * da;
      const double nb = b + step * db;
      const double nf = platt_objective(decision, t, na, nb);
      if (nf < fval + 1e-4 * step * gd) {
        a = na;
        b = nb;
        fval = nf;
        break;
      }
      step *= 0.5;
    }
    if (step < kMinStep) break;
  }
  return {a, b};
}

double platt_probability(const PlattParams& p, double decision) {
  const double z = decision * p.a + p.b;
  return z >= 0 ? std::exp(-z) / (1.0 + std::exp(-z)) : 1.0 / (1.0 + std::exp(z));
}

double BinarySvm::decision(std::span<const double> x) const {
  if (x.size() != static_cast<std::size_t>(support_vectors.cols())) {
    fail(ErrorCode::kShapeMismatch, "query has " + std::to_string(x.size()) +
                                        " dimensions, model expects " +
                                        std::to_string(support_vectors.cols()));
  }
  double f = bias;
  for (Eigen::Index i = 0; i < support_vectors.rows(); ++i) {
    const auto sv = std::span<const double>(support_vectors.row(i).data(), x.size());
    f += alphas[i] * labels[i] * rbf_kernel(sv, x, gamma);
  }
  return f;
}

double BinarySvm::probability(std::span<const double> x) const {
  return platt_probability(platt, decision(x));
}

BinarySvm train_binary(const Matrix& x, std::span<const int> y, const SvmConfig& cfg,
                       std::uint64_t seed) {
  if (x.rows() == 0) fail(ErrorCode::kInvalidArgument, "empty training set");
  if (static_cast<std::size_t>(x.rows()) != y.size()) {
    fail(ErrorCode::kShapeMismatch, "label count differs from sample count");
  }
  check_finite(x);
  KernelCache cache(x, cfg.gamma, cfg.cache_bytes);
  std::vector<std::size_t> index(x.rows());
  std::iota(index.begin(), index.end(), std::size_t{0});
  const SmoResult res = solve_smo(cache, index, y, cfg, seed);

  BinarySvm model;
  model.gamma = cfg.gamma;
  model.bias = -res.rho;
  model.dual_trace = res.dual_trace;
  model.converged = res.converged;
  std::vector<Eigen::Index> sv;
  for (std::size_t i = 0; i < res.alphas.size(); ++i) {
    if (res.alphas[i] > 0.0) sv.push_back(static_cast<Eigen::Index>(i));
  }
  model.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), x.cols());
  for (std::size_t k = 0; k < sv.size(); ++k) {
    model.support_vectors.row(static_cast<Eigen::Index>(k)) = x.row(sv[k]);
    model.alphas.push_back(res.alphas[sv[k]]);
    model.labels.push_back(y[sv[k]]);
  }
  model.platt = fit_platt(res.decision_values, y);
  return model;
}

SvmEnsemble train_multiclass(const Matrix& x, std::span<const int> labels, const SvmConfig& cfg,
                             std::uint64_t seed) {
  cfg.validate();
  if (static_cast<std::size_t>(x.rows()) != labels.size()) {
    fail(ErrorCode::kShapeMismatch, "label count differs from sample count");
  }
  check_finite(x);
  SvmEnsemble model;
  model.config = cfg;
  model.classes.assign(labels.begin(), labels.end());
  std::sort(model.classes.begin(), model.classes.end());
  model.classes.erase(std::unique(model.classes.begin(), model.classes.end()), model.classes.end());
  if (model.classes.size() < 2) fail(ErrorCode::kValidation, "multiclass SVM needs two classes");

  std::vector<int> class_of(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    class_of[i] = static_cast<int>(
        std::lower_bound(model.classes.begin(), model.classes.end(), labels[i]) -
        model.classes.begin());
  }

  KernelCache cache(x, cfg.gamma, cfg.cache_bytes);
  struct Raw {
    SvmMember member;
    std::vector<std::size_t> samples;
    std::vector<double> coef;
  };
  std::vector<Raw> raw;
  const int k = static_cast<int>(model.classes.size());

  auto train_member = [&](int pos, int neg, const std::vector<std::size_t>& index) {
    std::vector<int> y(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) y[i] = class_of[index[i]] == pos ? 1 : -1;
    // Every one-vs-rest member shares one visiting order.
    const std::uint64_t member_seed =
        neg < 0 ? seed : derive_seed(seed, static_cast<std::uint64_t>(pos * k + neg));
    const SmoResult res = solve_smo(cache, index, y, cfg, member_seed);
    Raw r;
    r.member.positive = pos;
    r.member.negative = neg;
    r.member.bias = -res.rho;
    r.member.converged = res.converged;
    r.member.platt = fit_platt(res.decision_values, y);
    for (std::size_t i = 0; i < index.size(); ++i) {
      if (res.alphas[i] > 0.0) {
        r.samples.push_back(index[i]);
        r.coef.push_back(res.alphas[i] * y[i]);
      }
    }
    raw.push_back(std::move(r));
  };

  if (cfg.strategy == Multiclass::kOneVsRest) {
    std::vector<std::size_t> all(labels.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (int c = 0; c < k; ++c) train_member(c, -1, all);
  } else {
    for (int a = 0; a < k; ++a) {
      for (int b = a + 1; b < k; ++b) {
        std::vector<std::size_t> index;
        for (std::size_t i = 0; i < labels.size(); ++i) {
          if (class_of[i] == a || class_of[i] == b) index.push_back(i);
        }
        train_member(a, b, index);
      }
    }
  }

  std::vector<std::size_t> pool_samples;
  for (const auto& r : raw) pool_samples.insert(pool_samples.end(), r.samples.begin(), r.samples.end());
  std::sort(pool_samples.begin(), pool_samples.end());
  pool_samples.erase(std::unique(pool_samples.begin(), pool_samples.end()), pool_samples.end());
  model.pool.resize(static_cast<Eigen::Index>(pool_samples.size()), x.cols());
  for (std::size_t i = 0; i < pool_samples.size(); ++i) {
    model.pool.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(pool_samples[i]));
  }
  for (auto& r : raw) {
    for (std::size_t s = 0; s < r.samples.size(); ++s) {
      const auto pos = std::lower_bound(pool_samples.begin(), pool_samples.end(), r.samples[s]);
      r.member.sv.push_back(static_cast<std::uint32_t>(pos - pool_samples.begin()));
    }
    r.member.coef = std::move(r.coef);
    model.members.push_back(std::move(r.member));
  }
  return model;
}

std::vector<double> SvmEnsemble::decisions(std::span<const double> x) const {
  if (x.size() != dims()) {
    fail(ErrorCode::kShapeMismatch, "query has " + std::to_string(x.size()) +
                                        " dimensions, model expects " + std::to_string(dims()));
  }
  const Eigen::Map<const Eigen::VectorXd> q(x.data(), static_cast<Eigen::Index>(x.size()));
  const double qn = q.squaredNorm();
  const Eigen::VectorXd dots = pool * q;
  const Eigen::VectorXd norms = pool.rowwise().squaredNorm();
  std::vector<double> kv(static_cast<std::size_t>(pool.rows()));
  for (std::size_t i = 0; i < kv.size(); ++i) {
    kv[i] = kernel_from_dot(norms[i], qn, dots[i], config.gamma);
  }
  std::vector<double> out;
  out.reserve(members.size());
  for (const auto& m : members) {
    double f = m.bias;
    for (std::size_t s = 0; s < m.sv.size(); ++s) f += m.coef[s] * kv[m.sv[s]];
    out.push_back(f);
  }
  return out;
}

std::vector<double> SvmEnsemble::predict_proba(std::span<const double> x) const {
  const auto f = decisions(x);
  const std::size_t k = classes.size();
  std::vector<double> p(k, 0.0);
  if (config.strategy == Multiclass::kOneVsRest) {
    for (std::size_t m = 0; m < members.size(); ++m) {
      p[members[m].positive] = std::max(platt_probability(members[m].platt, f[m]), 1e-12);
    }
  } else {
    for (std::size_t m = 0; m < members.size(); ++m) {
      const double pa = platt_probability(members[m].platt, f[m]);
      p[members[m].positive] += pa;
      p[members[m].negative] += 1.0 - pa;
    }
    for (double& v : p) v = std::max(v, 1e-12);
  }
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& v : p) v /= total;
  return p;
}

int SvmEnsemble::predict(std::span<const double> x) const {
  const auto p = predict_proba(x);
  return classes[std::max_element(p.begin(), p.end()) - p.begin()];
}

std::vector<std::uint8_t> encode_model(const SvmEnsemble& model) {
  ByteWriter w;
  w.magic("EGSV");
  w.u16(kSvmModelVersion);
  w.str(model.feature_kind);
  w.f64(model.config.C);
  w.f64(model.config.gamma);
  w.f64(model.config.tol);
  w.u32(static_cast<std::uint32_t>(model.config.max_passes));
  w.u8(static_cast<std::uint8_t>(model.config.strategy));
  w.u32(static_cast<std::uint32_t>(model.classes.size()));
  for (int c : model.classes) w.u32(static_cast<std::uint32_t>(c));
  w.u32(static_cast<std::uint32_t>(model.class_names.size()));
  for (const auto& name : model.class_names) w.str(name);
  w.u32(static_cast<std::uint32_t>(model.pool.rows()));
  w.u32(static_cast<std::uint32_t>(model.pool.cols()));
  for (Eigen::Index i = 0; i < model.pool.size(); ++i) w.f64(model.pool.data()[i]);
  w.u32(static_cast<std::uint32_t>(model.members.size()));
  for (const auto& m : model.members) {
    w.u32(static_cast<std::uint32_t>(m.positive));
    w.u32(static_cast<std::uint32_t>(m.negative));
    w.u8(m.converged ? 1 : 0);
    w.f64(m.bias);
    w.f64(m.platt.a);
    w.f64(m.platt.b);
    w.u32(static_cast<std::uint32_t>(m.sv.size()));
    for (std::size_t s = 0; s < m.sv.size(); ++s) {
      w.u32(m.sv[s]);
      w.f64(m.coef[s]);
    }
  }
  w.u8(model.norm ? 1 : 0);
  if (model.norm) {
    w.u32(static_cast<std::uint32_t>(model.norm->dims()));
    for (double v : model.norm->mean) w.f64(v);
    for (double v : model.norm->std) w.f64(v);
  }
  return std::move(w.bytes());
}

SvmEnsemble decode_model(std::span<const std::uint8_t> bytes, const std::string& source) {
  ByteReader r(bytes, source);
  r.expect_magic("EGSV");
  const std::uint16_t version = r.u16();
  if (version != kSvmModelVersion) {
    fail(ErrorCode::kVersionMismatch, source + ": SVM model version " + std::to_string(version) +
                                          ", expected " + std::to_string(kSvmModelVersion));
  }
  SvmEnsemble model;
  model.feature_kind = r.str();
  model.config.C = r.f64();
  model.config.gamma = r.f64();
  model.config.tol = r.f64();
  model.config.max_passes = static_cast<int>(r.u32());
  const std::uint8_t strategy = r.u8();
  if (strategy > 1) fail(ErrorCode::kFormat, source + ": unknown multiclass strategy");
  model.config.strategy = static_cast<Multiclass>(strategy);
  model.classes.resize(r.u32());
  for (int& c : model.classes) c = static_cast<int>(r.u32());
  model.class_names.resize(r.u32());
  for (auto& name : model.class_names) name = r.str();
  const std::uint32_t rows = r.u32();
  const std::uint32_t cols = r.u32();
  if (static_cast<std::uint64_t>(rows) * cols * 8 > r.remaining()) {
    fail(ErrorCode::kFormat, source + ": truncated support-vector pool");
  }
  model.pool.resize(rows, cols);
  for (Eigen::Index i = 0; i < model.pool.size(); ++i) model.pool.data()[i] = r.f64();
  model.members.resize(r.u32());
  for (auto& m : model.members) {
    m.positive = static_cast<int>(r.u32());
    m.negative = static_cast<int>(r.u32());
    m.converged = r.u8() != 0;
    m.bias = r.f64();
    m.platt.a = r.f64();
    m.platt.b = r.f64();
    const std::uint32_t nsv = r.u32();
    for (std::uint32_t s = 0; s < nsv; ++s) {
      const std::uint32_t idx = r.u32();
      if (idx >= rows) fail(ErrorCode::kFormat, source + ": support-vector index out of range");
      m.sv.push_back(idx);
      m.coef.push_back(r.f64());
    }
    const int k = static_cast<int>(model.classes.size());
    if (m.positive < 0 || m.positive >= k || m.negative < -1 || m.negative >= k) {
      fail(ErrorCode::kFormat, source + ": member class index out of range");
    }
  }
  if (r.u8() != 0) {
    lpc::NormStats norm;
    const std::uint32_t dims = r.u32();
    norm.mean.resize(dims);
    norm.std.resize(dims);
    for (double& v : norm.mean) v = r.f64();
    for (double& v : norm.std) v = r.f64();
    model.norm = std::move(norm);
  }
  if (r.remaining() != 0) fail(ErrorCode::kFormat, source + ": trailing bytes after SVM model");
  if (model.classes.size() < 2) fail(ErrorCode::kFormat, source + ": model has fewer than 2 classes");
  return model;
}

void save_model(const std::string& path, const SvmEnsemble& model) {
  write_file_atomic(path, encode_model(model));
  nlohmann::ordered_json meta;
  meta["format"] = "EGSV";
  meta["version"] = kSvmModelVersion;
  meta["feature_kind"] = model.feature_kind;
  meta["C"] = model.config.C;
  meta["gamma"] = model.config.gamma;
  meta["tol"] = model.config.tol;
  meta["max_passes"] = model.config.max_passes;
  meta["strategy"] = model.config.strategy == Multiclass::kOneVsRest ? "one-vs-rest" : "one-vs-one";
  meta["classes"] = model.class_names.empty() ? nlohmann::ordered_json(model.classes)
                                              : nlohmann::ordered_json(model.class_names);
  meta["support_vectors"] = model.pool.rows();
  meta["dims"] = model.pool.cols();
  bool converged = true;
  for (const auto& m : model.members) converged = converged && m.converged;
  meta["converged"] = converged;
  meta["normalized"] = model.norm.has_value();
  write_text_atomic(path + ".json", meta.dump(2) + "\n");
}

SvmEnsemble load_model(const std::string& path) { return decode_model(read_file_bytes(path), path); }

}  // namespace egoid::svm
