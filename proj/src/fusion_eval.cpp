#include "egoid/fusion_eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "egoid/error.hpp"

namespace egoid::fusion {

int argmax(std::span<const double> values) {
  if (values.empty()) fail(ErrorCode::kInvalidArgument, "argmax of an empty vector");
  return static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
}

std::vector<double> map_scores(std::span<const Distribution> window_probs) {
  if (window_probs.empty()) fail(ErrorCode::kInvalidArgument, "MAP fusion needs at least one window");
  const std::size_t k = window_probs.front().size();
  std::vector<double> score(k, 0.0);
  for (const auto& p : window_probs) {
    if (p.size() != k) fail(ErrorCode::kShapeMismatch, "window distributions differ in length");
    for (std::size_t i = 0; i < k; ++i) score[i] += std::log(std::max(p[i], kProbFloor));
  }
  return score;
}

std::vector<int> map_ranking(std::span<const Distribution> window_probs) {
  const auto score = map_scores(window_probs);
  std::vector<int> order(score.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return score[a] > score[b]; });
  return order;
}

int map_fuse(std::span<const Distribution> window_probs) {
  return argmax(map_scores(window_probs));
}

int mode_fuse(std::span<const int> window_labels) {
  if (window_labels.empty()) fail(ErrorCode::kInvalidArgument, "mode fusion needs at least one label");
  std::map<int, int> counts;
  for (int l : window_labels) ++counts[l];
  int best = counts.begin()->first;
  int best_count = 0;
  for (const auto& [label, count] : counts) {
    if (count > best_count) {
      best = label;
      best_count = count;
    }
  }
  return best;
}

SequencePrediction predict_sequence(std::vector<Distribution> window_probs,
                                    std::vector<double> t_start) {
  SequencePrediction out;
  out.map_label = map_fuse(window_probs);
  std::vector<int> labels;
  labels.reserve(window_probs.size());
  for (const auto& p : window_probs) labels.push_back(argmax(p));
  out.mode_label = mode_fuse(labels);
  out.window_probs = std::move(window_probs);
  out.t_start = std::move(t_start);
  return out;
}

CmcCurve cmc(std::span<const std::vector<int>> rankings, std::span<const int> truths) {
  if (rankings.size() != truths.size()) {
    fail(ErrorCode::kShapeMismatch, "one truth label is needed per ranking");
  }
  if (rankings.empty()) fail(ErrorCode::kInvalidArgument, "CMC needs at least one trial");
  const std::size_t k = rankings.front().size();
  std::vector<std::size_t> hits(k, 0);
  for (std::size_t t = 0; t < rankings.size(); ++t) {
    const auto& r = rankings[t];
    std::vector<char> seen(k, 0);
    if (r.size() != k) fail(ErrorCode::kValidation, "ranking " + std::to_string(t) + " has the wrong length");
    for (int c : r) {
      if (c < 0 || static_cast<std::size_t>(c) >= k || seen[c]) {
        fail(ErrorCode::kValidation, "ranking " + std::to_string(t) + " is not a permutation");
      }
      seen[c] = 1;
    }
    const auto pos = std::find(r.begin(), r.end(), truths[t]);
    if (pos != r.end()) ++hits[pos - r.begin()];
  }
  CmcCurve curve;
  curve.top_k.resize(k);
  std::size_t cumulative = 0;
  for (std::size_t i = 0; i < k; ++i) {
    cumulative += hits[i];
    curve.top_k[i] = static_cast<double>(cumulative) / static_cast<double>(rankings.size());
  }
  return curve;
}

RocCurve roc_and_eer(std::span<const double> scores, std::span<const std::uint8_t> is_target) {
  if (scores.size() != is_target.size()) {
    fail(ErrorCode::kShapeMismatch, "one label is needed per score");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const auto n_target = static_cast<double>(std::count(is_target.begin(), is_target.end(), 1));
  const double n_other = static_cast<double>(scores.size()) - n_target;
  if (n_target == 0 || n_other == 0) {
    fail(ErrorCode::kValidation, "ROC needs both target and non-target trials");
  }

  RocCurve roc;
  roc.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t accepted_target = 0, accepted_other = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    while (i < order.size() && scores[order[i]] == threshold) {
      (is_target[order[i]] ? accepted_target : accepted_other) += 1;
      ++i;
    }
    roc.points.push_back({threshold, accepted_other / n_other, accepted_target / n_target});
  }

  // FAR - FRR rises from -1 to +1 along the sweep.
  for (std::size_t i = 1; i < roc.points.size(); ++i) {
    const RocPoint& cur = roc.points[i];
    const double d = cur.far - (1.0 - cur.tpr);
    if (d < 0.0) continue;
    if (d == 0.0) {
      roc.eer = cur.far;
      roc.eer_threshold = cur.threshold;
    } else {
      const RocPoint& prev = roc.points[i - 1];
      const double dp = prev.far - (1.0 - prev.tpr);
      const double lambda = -dp / (d - dp);
      roc.eer = prev.far + lambda * (cur.far - prev.far);
      roc.eer_threshold = std::isinf(prev.threshold)
                              ? cur.threshold
                              : prev.threshold + lambda * (cur.threshold - prev.threshold);
    }
    break;
  }
  return roc;
}

std::vector<RocPoint> mean_roc(std::span<const RocCurve> curves, std::span<const double> far_grid) {
  if (curves.empty()) fail(ErrorCode::kInvalidArgument, "no ROC curves to average");
  std::vector<RocPoint> out;
  for (double far : far_grid) {
    double sum = 0.0;
    for (const auto& c : curves) {
      // Highest TPR reached at this FAR, interpolating along the curve.
      double tpr = 0.0;
      for (std::size_t i = 0; i < c.points.size(); ++i) {
        const RocPoint& p = c.points[i];
        if (p.far <= far) {
          tpr = std::max(tpr, p.tpr);
        } else if (i > 0) {
          const RocPoint& q = c.points[i - 1];
          if (q.far < far) {
            tpr = std::max(tpr, q.tpr + (far - q.far) / (p.far - q.far) * (p.tpr - q.tpr));
          }
          break;
        }
      }
      sum += tpr;
    }
    out.push_back({0.0, far, sum / static_cast<double>(curves.size())});
  }
  return out;
}

std::vector<double> nearest_distances(const Descriptors& gallery, const Descriptors& probe) {
  if (gallery.rows() == 0) fail(ErrorCode::kInvalidArgument, "empty gallery");
  if (probe.cols() != gallery.cols()) {
    fail(ErrorCode::kShapeMismatch, "probe and gallery descriptors differ in dimension");
  }
  std::vector<double> out(static_cast<std::size_t>(probe.rows()));
  for (Eigen::Index i = 0; i < probe.rows(); ++i) {
    out[i] = std::sqrt((gallery.rowwise() - probe.row(i)).rowwise().squaredNorm().minCoeff());
  }
  return out;
}

std::vector<bool> nn_verify(const Descriptors& gallery, std::span<const Descriptors> probes,
                            double threshold) {
  std::vector<bool> out;
  for (const auto& probe : probes) {
    if (probe.rows() == 0) fail(ErrorCode::kInvalidArgument, "empty probe video");
    const auto d = nearest_distances(gallery, probe);
    const auto votes = std::count_if(d.begin(), d.end(), [&](double v) { return v < threshold; });
    out.push_back(2 * static_cast<std::size_t>(votes) > d.size());
  }
  return out;
}

std::vector<double> nn_scores(const Descriptors& gallery, std::span<const Descriptors> probes) {
  std::vector<double> out;
  for (const auto& probe : probes) {
    if (probe.rows() == 0) fail(ErrorCode::kInvalidArgument, "empty probe video");
    auto d = nearest_distances(gallery, probe);
    const std::size_t k = d.size() / 2;  // zero-based index of the (n/2+1)-th smallest
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    out.push_back(-d[k]);
  }
  return out;
}

}  // namespace egoid::fusion
