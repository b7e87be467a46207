#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "egoid/flowgrid.hpp"
#include "egoid/ingest.hpp"
#include "egoid/synthgait.hpp"
#include "test_util.hpp"

using namespace egoid;
using namespace egoid::synth;

namespace {

WalkerProfile clean_profile(double freq, double rotation) {
  WalkerProfile p;
  p.step_freq = freq;
  p.harmonic_amps = {{{1.0, 0.8}, {0.3, 0.2}, {0.1, 0.1}, {0.05, 0.05}}};
  p.phase_offsets = {{{0.1, 0.2}, {0.3, 0.4}, {0.5, 0.6}, {0.7, 0.8}}};
  p.rotation_amp = rotation;
  p.roll_lag = 0.4;
  p.seed = 77;
  return p;
}

std::vector<double> dft_magnitude(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> mag(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0;
    for (std::size_t t = 0; t < n; ++t) acc += x[t] * std::polar(1.0, -2 * std::numbers::pi * k * t / n);
    mag[k] = std::abs(acc);
  }
  return mag;
}

// Mean over cells and components of the Welch-averaged magnitude spectrum (4 s segments).
std::vector<double> mean_spectrum(const std::vector<flowgrid::FlowField>& flows) {
  const std::size_t seg = 60;
  std::vector<double> acc(seg / 2 + 1, 0.0);
  const int cells = flows[0].cells();
  for (int comp = 0; comp < 2; ++comp) {
    for (int c = 0; c < cells; ++c) {
      for (std::size_t start = 0; start + seg <= flows.size(); start += seg / 2) {
        std::vector<double> x(seg);
        for (std::size_t t = 0; t < seg; ++t) x[t] = comp == 0 ? flows[start + t].u[c] : flows[start + t].v[c];
        const auto m = dft_magnitude(x);
        for (std::size_t k = 1; k < m.size(); ++k) acc[k] += m[k];
      }
    }
  }
  double norm = 0;
  for (double v : acc) norm += v * v;
  for (double& v : acc) v /= std::sqrt(norm);
  return acc;
}

double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(d);
}

}  // namespace

TEST(GenFlow, LengthAndDeterminism) {
  const auto p = clean_profile(1.8, 1.0);
  flowgrid::FlowGridSpec spec;
  const auto a = gen_flow_sequence(p, 10.0, Rational{15, 1}, spec, 5);
  const auto b = gen_flow_sequence(p, 10.0, Rational{15, 1}, spec, 5);
  const auto c = gen_flow_sequence(p, 10.0, Rational{15, 1}, spec, 6);
  ASSERT_EQ(a.size(), 150u);
  EXPECT_EQ(gen_flow_sequence(p, 1.0 / 15, Rational{15, 1}, spec, 5).size(), 1u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].u, b[i].u);
    EXPECT_EQ(a[i].v, b[i].v);
  }
  EXPECT_NE(a[10].v, c[10].v);
}

TEST(GenFlow, ZeroRotationIsPureTranslation) {
  auto p = clean_profile(1.7, 0.0);
  p.shake_sigma = 0.5;
  p.cadence_jitter = 0.05;
  const auto flows = gen_flow_sequence(p, 8.0, Rational{15, 1}, flowgrid::FlowGridSpec{}, 3);
  for (const auto& f : flows) {
    for (int c = 1; c < f.cells(); ++c) {
      EXPECT_EQ(f.u[c], f.u[0]);
      EXPECT_EQ(f.v[c], f.v[0]);
    }
  }
}

TEST(GenFlow, VerticalSpectrumPeaksAtTwiceStepFrequency) {
  for (double freq : {1.45, 1.8, 2.25}) {
    const auto p = clean_profile(freq, 2.0);
    const auto flows = gen_flow_sequence(p, 40.0, Rational{15, 1}, flowgrid::FlowGridSpec{}, 1);
    std::vector<double> mean_v(flows.size());
    for (std::size_t t = 0; t < flows.size(); ++t) {
      for (double v : flows[t].v) mean_v[t] += v / flows[t].cells();
    }
    const auto mag = dft_magnitude(mean_v);
    const std::size_t peak = std::max_element(mag.begin() + 1, mag.end()) - mag.begin();
    const double bin_hz = 15.0 / static_cast<double>(mean_v.size());
    EXPECT_LE(std::abs(peak * bin_hz - 2 * freq), bin_hz) << freq;
  }
}

TEST(GenFlow, RollIsLinearInHorizontalOffset) {
  const auto p = clean_profile(1.9, 3.0);
  const auto flows = gen_flow_sequence(p, 4.0, Rational{15, 1}, flowgrid::FlowGridSpec{}, 2);
  for (const auto& f : flows) {
    for (int r = 0; r < f.m_y; ++r) {
      const double left = f.v[r * f.m_x], right = f.v[r * f.m_x + f.m_x - 1];
      const double centre = 0.5 * (f.v[r * f.m_x + 4] + f.v[r * f.m_x + 5]);
      EXPECT_NEAR(left + right, 2 * centre, 1e-9);  // roll is odd about the centre line
      EXPECT_EQ(f.v[r * f.m_x + 3], f.v[3]);        // identical across rows
    }
  }
}

TEST(GenFlow, StabilizationRemovesTranslationExactly) {
  auto p = clean_profile(2.0, 0.0);
  p.noise_sigma = 0.7;
  p.shake_sigma = 1.5;
  const auto flows = gen_flow_sequence(p, 60.0, Rational{15, 1}, flowgrid::FlowGridSpec{}, 9);
  const auto windows = flowgrid::build_windows(flows, Rational{15, 1});
  double sq = 0;
  std::size_t n = 0;
  for (const auto& w : windows) {
    for (double v : flowgrid::stabilize_mean_subtract(w).data) sq += v * v, ++n;
  }
  const double rms = std::sqrt(sq / n);
  EXPECT_LE(rms, 0.7 * 1.01);
  EXPECT_GT(rms, 0.7 * 0.9);
}

TEST(GenFlow, RollSurvivesStabilization) {
  const auto with = gen_flow_sequence(clean_profile(1.6, 2.5), 8.0, Rational{15, 1}, flowgrid::FlowGridSpec{}, 4);
  const auto without = gen_flow_sequence(clean_profile(1.6, 0.0), 8.0, Rational{15, 1}, flowgrid::FlowGridSpec{}, 4);
  const auto ws = flowgrid::build_windows(with, Rational{15, 1});
  const auto wo = flowgrid::build_windows(without, Rational{15, 1});
  const auto stab = flowgrid::stabilize_mean_subtract(ws[0]);
  for (int c = 0; c < 50; ++c) {
    for (int t = 0; t < 60; ++t) {
      EXPECT_NEAR(stab.at(1, c, t), ws[0].at(1, c, t) - wo[0].at(1, c, t), 1e-12);
      EXPECT_NEAR(stab.at(0, c, t), 0.0, 1e-12);
    }
  }
}

TEST(Population, SeparationAndDeterminism) {
  PopulationConfig cfg;
  cfg.n_subjects = 2;
  auto two = draw_profiles(cfg);
  EXPECT_GE(std::abs(two[0].step_freq - two[1].step_freq), 0.04);

  cfg.n_subjects = 32;
  const auto a = draw_profiles(cfg);
  const auto b = draw_profiles(cfg);
  ASSERT_EQ(a.size(), 32u);
  for (int i = 0; i < 32; ++i) {
    EXPECT_EQ(a[i].step_freq, b[i].step_freq);
    EXPECT_EQ(a[i].rotation_amp, b[i].rotation_amp);
    EXPECT_EQ(a[i].seed, b[i].seed);
    EXPECT_GE(a[i].step_freq, cfg.freq_lo);
    EXPECT_LE(a[i].step_freq, cfg.freq_hi);
    for (int j = 0; j < i; ++j) {
      EXPECT_GE(std::abs(a[i].step_freq - a[j].step_freq), cfg.effective_separation() - 1e-12);
    }
  }
  cfg.master_seed = 2;
  EXPECT_NE(draw_profiles(cfg)[0].step_freq, a[0].step_freq);
}

TEST(Population, UnsatisfiableSeparation) {
  PopulationConfig cfg;
  cfg.n_subjects = 40;
  cfg.adapt_separation = false;
  EXPECT_EQ(testutil::error_code_of([&] { draw_profiles(cfg); }), ErrorCode::kValidation);
  cfg.n_subjects = 1;
  EXPECT_EQ(testutil::error_code_of([&] { gen_population(cfg); }), ErrorCode::kInvalidArgument);
}

TEST(Population, SessionsShareProfileWithSmallPerturbation) {
  PopulationConfig cfg;
  cfg.n_subjects = 3;
  cfg.sessions = {{"D1", "same-day", 6.0}, {"D2", "same-day", 6.0}, {"D3", "week-later", 8.0}};
  const auto ds = gen_population(cfg);
  ASSERT_EQ(ds.subjects.size(), 3u);
  EXPECT_EQ(ds.subjects[0].subject_id, "S01");
  for (const auto& s : ds.subjects) {
    ASSERT_EQ(s.sequences.size(), 3u);
    EXPECT_EQ(s.sequences[2].camera_id, "D3");
    EXPECT_EQ(s.sequences[2].flows.size(), 120u);
    EXPECT_NE(s.sequences[0].session_seed, s.sequences[1].session_seed);
    for (const auto& q : s.sequences) {
      EXPECT_EQ(q.profile.step_freq, s.profile.step_freq);
      const double ratio = q.profile.rotation_amp / s.profile.rotation_amp;
      EXPECT_GE(ratio, 0.95);
      EXPECT_LE(ratio, 1.05);
    }
  }
}

TEST(Population, SameSubjectSessionsAreSpectrallyCloser) {
  PopulationConfig cfg;
  cfg.n_subjects = 8;
  cfg.sessions = {{"D1", "same-day", 90.0}, {"D2", "same-day", 90.0}};
  const auto ds = gen_population(cfg);
  std::vector<std::vector<double>> s1, s2;
  for (const auto& s : ds.subjects) {
    s1.push_back(mean_spectrum(s.sequences[0].flows));
    s2.push_back(mean_spectrum(s.sequences[1].flows));
  }
  // Neighbouring cadences can make a single cross pair close, so compare
  // against the median cross distance per subject and the means overall.
  double own_mean = 0, cross_mean = 0;
  for (int i = 0; i < 8; ++i) {
    const double own = distance(s1[i], s2[i]);
    std::vector<double> cross;
    for (int j = 0; j < 8; ++j) {
      if (j != i) cross.push_back(distance(s1[i], s2[j]));
    }
    std::nth_element(cross.begin(), cross.begin() + 3, cross.end());
    EXPECT_LT(own, cross[3]) << i;
    own_mean += own / 8;
    for (double d : cross) cross_mean += d / 56;
  }
  EXPECT_LT(own_mean, 0.5 * cross_mean);
}

TEST(Population, WriteDatasetRoundTrip) {
  PopulationConfig cfg;
  cfg.n_subjects = 2;
  cfg.sessions = {{"D1", "same-day", 5.0}, {"D2", "same-day", 5.0}};
  const auto ds = gen_population(cfg);
  testutil::TempDir dir("synth");
  write_dataset(ds, dir.path());
  const auto m = ingest::parse_manifest(dir / "manifest.json");
  ASSERT_EQ(m.subjects.size(), 2u);
  const auto& rec = m.subjects[1].sequences[1];
  EXPECT_EQ(rec.camera_id, "D2");
  EXPECT_EQ(rec.frame_count, 76u);
  const auto cache = flowgrid::read_flow_cache(rec.flow_cache.string());
  const auto& flows = ds.subjects[1].sequences[1].flows;
  ASSERT_EQ(cache.flows.size(), flows.size());
  for (std::size_t i = 0; i < flows.size(); ++i)
    for (int c = 0; c < 50; ++c) EXPECT_EQ(cache.flows[i].v[c], static_cast<float>(flows[i].v[c]));
}

TEST(Render, TranslationIsRecoveredByGridFlow) {
  std::vector<flowgrid::FlowField> flows;
  for (int i = 0; i < 3; ++i) {
    flowgrid::FlowField f(10, 5);
    std::fill(f.u.begin(), f.u.end(), 1.5 - i);
    std::fill(f.v.begin(), f.v.end(), -0.8 + 0.5 * i);
    flows.push_back(f);
  }
  const auto frames = render_frames(flows, 320, 160, 4);
  ASSERT_EQ(frames.size(), 4u);
  const auto measured = flowgrid::compute_sequence_flow(frames, flowgrid::FlowGridSpec{});
  for (std::size_t i = 0; i < flows.size(); ++i) {
    for (int c = 0; c < 50; ++c) {
      ASSERT_TRUE(measured[i].valid[c]);
      EXPECT_NEAR(measured[i].u[c], flows[i].u[c], 0.1) << i << " " << c;
      EXPECT_NEAR(measured[i].v[c], flows[i].v[c], 0.1) << i << " " << c;
    }
  }
}

TEST(Render, RollIsRecoveredByGridFlow) {
  auto p = clean_profile(1.8, 2.0);
  const auto flows = gen_flow_sequence(p, 1.0, Rational{15, 1}, flowgrid::FlowGridSpec{}, 8);
  const auto frames = render_frames(flows, 320, 160, 5);
  const auto measured = flowgrid::compute_sequence_flow(frames, flowgrid::FlowGridSpec{});
  double err = 0;
  int n = 0;
  for (std::size_t i = 0; i < flows.size(); ++i)
    for (int c = 0; c < 50; ++c) {
      err += std::abs(measured[i].v[c] - flows[i].v[c]) + std::abs(measured[i].u[c] - flows[i].u[c]);
      n += 2;
    }
  EXPECT_LT(err / n, 0.25);
}
