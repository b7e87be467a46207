#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "egoid/fusion_eval.hpp"
#include "test_util.hpp"

using namespace egoid;
using namespace egoid::fusion;

namespace {

Distribution random_distribution(Rng& rng, int k, double floor = 0.01) {
  Distribution p(k);
  double sum = 0;
  for (double& v : p) sum += (v = floor + rng.uniform());
  for (double& v : p) v /= sum;
  return p;
}

int brute_force_product(const std::vector<Distribution>& windows) {
  const int k = static_cast<int>(windows[0].size());
  int best = 0;
  long double best_prod = -1;
  for (int c = 0; c < k; ++c) {
    long double prod = 1;
    for (const auto& w : windows) prod *= w[c];
    if (prod > best_prod) best_prod = prod, best = c;
  }
  return best;
}

}  // namespace

TEST(MapFuse, Examples) {
  const std::vector<Distribution> one{{0.2, 0.5, 0.3}};
  EXPECT_EQ(map_fuse(one), 1);
  const std::vector<Distribution> three{{0.6, 0.4}, {0.6, 0.4}, {0.1, 0.9}};
  EXPECT_EQ(map_fuse(three), 1);  // 0.036 vs 0.144
  const std::vector<Distribution> uniform(4, Distribution(5, 0.2));
  EXPECT_EQ(map_fuse(uniform), 0);
  EXPECT_EQ(testutil::error_code_of([] { map_fuse({}); }), ErrorCode::kInvalidArgument);
}

TEST(MapFuse, AgreesWithBruteForceProduct) {
  Rng rng(10000);
  for (int trial = 0; trial < 10000; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(7));
    const int n = 1 + static_cast<int>(rng.below(10));
    std::vector<Distribution> windows;
    for (int t = 0; t < n; ++t) windows.push_back(random_distribution(rng, k));
    ASSERT_EQ(map_fuse(windows), brute_force_product(windows)) << "trial " << trial;
  }
}

TEST(MapFuse, InvariantToPerWindowScaling) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Distribution> windows, scaled;
    for (int t = 0; t < 6; ++t) {
      windows.push_back(random_distribution(rng, 5));
      Distribution s = windows.back();
      const double factor = rng.uniform(0.1, 0.9);
      for (double& v : s) v *= factor;
      scaled.push_back(s);
    }
    EXPECT_EQ(map_fuse(windows), map_fuse(scaled));
  }
}

TEST(MapFuse, FloorKeepsZerosFinite) {
  const std::vector<Distribution> windows{{0.0, 1.0}, {0.9, 0.1}, {0.9, 0.1}};
  const auto s = map_scores(windows);
  EXPECT_NEAR(s[0], std::log(1e-12) + 2 * std::log(0.9), 1e-9);
  EXPECT_EQ(map_fuse(windows), 1);
  const auto r = map_ranking(windows);
  EXPECT_EQ(r, (std::vector<int>{1, 0}));
}

TEST(ModeFuse, Examples) {
  EXPECT_EQ(mode_fuse(std::vector<int>{1, 1, 2}), 1);
  EXPECT_EQ(mode_fuse(std::vector<int>{2}), 2);
  EXPECT_EQ(mode_fuse(std::vector<int>{1, 2}), 1);
  EXPECT_EQ(mode_fuse(std::vector<int>{3, 0, 3, 0}), 0);
  EXPECT_EQ(testutil::error_code_of([] { mode_fuse({}); }), ErrorCode::kInvalidArgument);
}

TEST(PredictSequence, MapAndMode) {
  const auto pred = predict_sequence({{0.6, 0.4}, {0.6, 0.4}, {0.1, 0.9}}, {0, 2, 4});
  EXPECT_EQ(pred.map_label, 1);
  EXPECT_EQ(pred.mode_label, 0);
  EXPECT_EQ(pred.t_start, (std::vector<double>{0, 2, 4}));
}

TEST(Cmc, Examples) {
  const std::vector<std::vector<int>> first{{2, 0, 1}, {0, 1, 2}};
  const auto a = cmc(first, std::vector<int>{2, 0});
  EXPECT_EQ(a.top_k, (std::vector<double>{1, 1, 1}));
  const std::vector<std::vector<int>> second{{1, 0, 2, 3}, {3, 2, 1, 0}, {0, 3, 1, 2}};
  const auto b = cmc(second, std::vector<int>{0, 2, 3});
  EXPECT_EQ(b.top_k, (std::vector<double>{0, 1, 1, 1}));
  const std::vector<std::vector<int>> bad{{0, 0, 1}};
  EXPECT_EQ(testutil::error_code_of([&] { cmc(bad, std::vector<int>{0}); }), ErrorCode::kValidation);
}

TEST(Cmc, RandomRankingsMonotoneAndComplete) {
  Rng rng(5);
  std::vector<std::vector<int>> rankings;
  std::vector<int> truths;
  for (int t = 0; t < 300; ++t) {
    std::vector<int> r(8);
    std::iota(r.begin(), r.end(), 0);
    rng.shuffle(std::span(r));
    rankings.push_back(r);
    truths.push_back(static_cast<int>(rng.below(8)));
  }
  const auto c = cmc(rankings, truths);
  for (std::size_t k = 1; k < c.top_k.size(); ++k) EXPECT_GE(c.top_k[k], c.top_k[k - 1]);
  EXPECT_EQ(c.top_k.back(), 1.0);
}

TEST(Roc, HandEnumeratedExample) {
  const std::vector<double> scores{0.9, 0.8, 0.3, 0.7, 0.2, 0.1};
  const std::vector<std::uint8_t> target{1, 1, 1, 0, 0, 0};
  const auto roc = roc_and_eer(scores, target);
  EXPECT_DOUBLE_EQ(roc.eer, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(roc.eer_threshold, 0.7);
  ASSERT_EQ(roc.points.size(), 7u);
  EXPECT_TRUE(std::isinf(roc.points[0].threshold));
  EXPECT_EQ(roc.points[0].far, 0.0);
  EXPECT_EQ(roc.points[0].tpr, 0.0);
  EXPECT_EQ(roc.points.back().far, 1.0);
  EXPECT_EQ(roc.points.back().tpr, 1.0);
}

TEST(Roc, TrivialCases) {
  const std::vector<std::uint8_t> target{1, 1, 0, 0};
  EXPECT_EQ(roc_and_eer(std::vector<double>{5, 4, 1, 0}, target).eer, 0.0);
  EXPECT_DOUBLE_EQ(roc_and_eer(std::vector<double>{2, 2, 2, 2}, target).eer, 0.5);
  EXPECT_DOUBLE_EQ(roc_and_eer(std::vector<double>{0, 1, 4, 5}, target).eer, 1.0);
  EXPECT_EQ(testutil::error_code_of([] { roc_and_eer(std::vector<double>{1, 2}, std::vector<std::uint8_t>{1, 1}); }),
            ErrorCode::kValidation);
}

TEST(Roc, CurveMonotoneAndEerBetweenRates) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> scores;
    std::vector<std::uint8_t> target;
    for (int i = 0; i < 60; ++i) {
      const bool t = i < 15;
      target.push_back(t);
      scores.push_back(std::round(4 * (rng.normal() + (t ? 1.0 : 0.0))) / 4);  // with ties
    }
    const auto roc = roc_and_eer(scores, target);
    for (std::size_t i = 1; i < roc.points.size(); ++i) {
      EXPECT_GE(roc.points[i].far, roc.points[i - 1].far);
      EXPECT_GE(roc.points[i].tpr, roc.points[i - 1].tpr);
    }
    EXPECT_GE(roc.eer, 0.0);
    EXPECT_LE(roc.eer, 1.0);
    // EER lies between FAR and FRR at the bracketing sweep points.
    bool bracketed = false;
    for (std::size_t i = 1; i < roc.points.size() && !bracketed; ++i) {
      const auto& a = roc.points[i - 1];
      const auto& b = roc.points[i];
      const double lo = std::min({a.far, 1 - a.tpr, b.far, 1 - b.tpr});
      const double hi = std::max({a.far, 1 - a.tpr, b.far, 1 - b.tpr});
      bracketed = a.far - (1 - a.tpr) < 0 && b.far - (1 - b.tpr) >= 0 && roc.eer >= lo - 1e-12 &&
                  roc.eer <= hi + 1e-12;
    }
    EXPECT_TRUE(bracketed) << trial;
  }
}

TEST(Roc, MeanOfIdenticalCurves) {
  const std::vector<double> scores{0.9, 0.8, 0.3, 0.7, 0.2, 0.1};
  const std::vector<std::uint8_t> target{1, 1, 1, 0, 0, 0};
  const auto roc = roc_and_eer(scores, target);
  const std::vector<RocCurve> two{roc, roc};
  const std::vector<double> grid{0.0, 1.0 / 3.0, 0.5, 1.0};
  const auto mean = mean_roc(two, grid);
  ASSERT_EQ(mean.size(), 4u);
  EXPECT_DOUBLE_EQ(mean[0].tpr, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(mean[1].tpr, 1.0);
  EXPECT_DOUBLE_EQ(mean[3].tpr, 1.0);
}

TEST(NearestNeighbour, Examples) {
  Descriptors gallery(2, 2);
  gallery << 0, 0, 10, 10;
  Descriptors same(1, 2);
  same << 10, 10;
  Descriptors far(1, 2);
  far << 3, 4;
  const std::vector<Descriptors> probes{same, far};
  EXPECT_EQ(nn_verify(gallery, probes, 1e-9), (std::vector<bool>{true, false}));
  EXPECT_EQ(nn_verify(gallery, probes, 4.0), (std::vector<bool>{true, false}));
  EXPECT_EQ(nn_verify(gallery, probes, 5.5), (std::vector<bool>{true, true}));

  Descriptors video(3, 2);
  video << 0, 1, 10, 9, 50, 50;  // accepts {yes, yes, no} at threshold 2
  EXPECT_EQ(nn_verify(gallery, std::vector<Descriptors>{video}, 2.0), std::vector<bool>{true});
  Descriptors even(2, 2);
  even << 0, 1, 50, 50;  // one of two is not a strict majority
  EXPECT_EQ(nn_verify(gallery, std::vector<Descriptors>{even}, 2.0), std::vector<bool>{false});
  EXPECT_EQ(testutil::error_code_of([&] { nn_verify(Descriptors(0, 2), probes, 1.0); }),
            ErrorCode::kInvalidArgument);
}

TEST(NearestNeighbour, ScoresReproduceVotingAtEveryThreshold) {
  Rng rng(12);
  Descriptors gallery(20, 4);
  for (Eigen::Index i = 0; i < gallery.size(); ++i) gallery.data()[i] = rng.normal();
  std::vector<Descriptors> probes;
  for (int v = 0; v < 30; ++v) {
    Descriptors p(1 + static_cast<int>(rng.below(6)), 4);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = 1.5 * rng.normal();
    probes.push_back(p);
  }
  const auto scores = nn_scores(gallery, probes);
  for (double th = 0.1; th < 6.0; th += 0.137) {
    const auto accepted = nn_verify(gallery, probes, th);
    for (std::size_t v = 0; v < probes.size(); ++v) EXPECT_EQ(accepted[v], scores[v] > -th) << th << " " << v;
  }
  const auto d = nearest_distances(gallery, probes[0]);
  for (Eigen::Index r = 0; r < probes[0].rows(); ++r) {
    double best = 1e300;
    for (Eigen::Index g = 0; g < gallery.rows(); ++g) best = std::min(best, (gallery.row(g) - probes[0].row(r)).norm());
    EXPECT_NEAR(d[r], best, 1e-12);
  }
}
