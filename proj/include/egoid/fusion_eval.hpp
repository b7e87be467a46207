#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

namespace egoid::fusion {

using Distribution = std::vector<double>;

inline constexpr double kProbFloor = 1e-12;

/// Sum over windows of log max(p, 1e-12), per class.
std::vector<double> map_scores(std::span<const Distribution> window_probs);
/// Class indices ordered by fused score, best first; ties keep the lower index first.
std::vector<int> map_ranking(std::span<const Distribution> window_probs);
/// argmax_i prod_t P_t(i), ties to the lowest class index.
int map_fuse(std::span<const Distribution> window_probs);
/// Most frequent label, ties to the lowest label.
int mode_fuse(std::span<const int> window_labels);
/// argmax with ties to the lowest index.
int argmax(std::span<const double> values);

struct SequencePrediction {
  std::vector<Distribution> window_probs;
  std::vector<double> t_start;
  int map_label = -1;
  int mode_label = -1;
};

SequencePrediction predict_sequence(std::vector<Distribution> window_probs,
                                    std::vector<double> t_start = {});

struct CmcCurve {
  std::vector<double> top_k;  // top_k[k-1] = accuracy at rank k
};

/// Each ranking must be a permutation of 0..n_classes-1.
CmcCurve cmc(std::span<const std::vector<int>> rankings, std::span<const int> truths);

struct RocPoint {
  double threshold = 0.0;  // accept when score >= threshold
  double far = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // FAR non-decreasing
  double eer = 0.0;
  double eer_threshold = 0.0;
};

/// Threshold sweep over every distinct score (plus +inf); EER by linear
/// interpolation where FAR - FRR changes sign.
RocCurve roc_and_eer(std::span<const double> scores, std::span<const std::uint8_t> is_target);

/// Vertical averaging: mean TPR of the curves at each FAR of `far_grid`.
std::vector<RocPoint> mean_roc(std::span<const RocCurve> curves, std::span<const double> far_grid);

using Descriptors = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Euclidean distance from each probe row to its nearest gallery row.
std::vector<double> nearest_distances(const Descriptors& gallery, const Descriptors& probe);

/// A window is accepted when its nearest-neighbour distance is below the
/// threshold; a video when a strict majority of its windows are.
std::vector<bool> nn_verify(const Descriptors& gallery, std::span<const Descriptors> probes,
                            double threshold);

/// Score whose ROC sweep reproduces nn_verify over all thresholds:
/// minus the (floor(n/2)+1)-th smallest nearest-neighbour distance.
std::vector<double> nn_scores(const Descriptors& gallery, std::span<const Descriptors> probes);

}  // namespace egoid::fusion
