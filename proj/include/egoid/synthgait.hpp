#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "egoid/flowgrid.hpp"
#include "egoid/image.hpp"
#include "egoid/ingest.hpp"
#include "egoid/rational.hpp"

namespace egoid::synth {

inline constexpr int kHarmonics = 4;

struct WalkerProfile {
  double step_freq = 1.8;  // Hz; sway at f, bob at 2f
  // Per-harmonic (vertical bob, lateral sway) amplitudes, px/frame.
  std::array<std::array<double, 2>, kHarmonics> harmonic_amps{};
  double rotation_amp = 0.0;  // roll, px/frame at the outermost grid column
  // Per-harmonic (vertical, lateral) phases, radians.
  std::array<std::array<double, 2>, kHarmonics> phase_offsets{};
  double roll_lag = 0.0;        // roll phase relative to the sway shape, radians
  double noise_sigma = 0.0;     // white noise, independent per cell, px/frame
  double shake_sigma = 0.0;     // white noise shared by every cell of a frame, px/frame
  double cadence_jitter = 0.0;  // std of the relative step-frequency drift
  double amp_jitter = 0.0;      // std of the relative amplitude drift
  std::uint64_t seed = 0;
};

/// One flow field per frame interval: round(duration * fps) fields.
/// u = sway + shake + noise, v = bob + roll * x_offset / x_max + shake + noise.
std::vector<flowgrid::FlowField> gen_flow_sequence(const WalkerProfile& profile, double duration_s,
                                                   Rational fps, const flowgrid::FlowGridSpec& spec,
                                                   std::uint64_t session_seed);

struct SessionSpec {
  std::string camera_id;
  std::string session_tag;
  double duration_s = 180.0;
};

struct PopulationConfig {
  int n_subjects = 32;
  std::vector<SessionSpec> sessions = {{"D1", "same-day", 180.0},
                                       {"D2", "same-day", 180.0},
                                       {"D3", "week-later", 180.0}};
  std::uint64_t master_seed = 1;
  Rational fps{15, 1};
  flowgrid::FlowGridSpec grid;
  double freq_lo = 1.4;
  double freq_hi = 2.3;
  double min_separation = 0.04;  // Hz
  /// Shrinks the separation to half the mean spacing when the range cannot hold n subjects.
  bool adapt_separation = true;
  double bob_lo = 0.3, bob_hi = 1.0;    // fundamental bob amplitude
  double sway_lo = 0.3, sway_hi = 1.0;  // fundamental sway amplitude
  double harmonic_lo = 0.05, harmonic_hi = 0.6;  // higher harmonics relative to the fundamental
  double rotation_lo = 2.5, rotation_hi = 6.0;
  double noise_sigma = 1.4;
  double shake_sigma = 1.25;  // common-mode head jitter
  double cadence_jitter = 0.06;
  double amp_jitter = 0.25;
  double session_perturbation = 0.05;  // per-session relative amplitude change

  /// Separation actually enforced for n_subjects.
  double effective_separation() const;
};

struct SyntheticSequence {
  std::string sequence_id;
  std::string camera_id;
  std::string session_tag;
  std::uint64_t session_seed = 0;
  WalkerProfile profile;  // after the session perturbation
  std::vector<flowgrid::FlowField> flows;
};

struct SyntheticSubject {
  std::string subject_id;
  WalkerProfile profile;
  std::vector<SyntheticSequence> sequences;
};

struct SyntheticDataset {
  PopulationConfig config;
  std::vector<SyntheticSubject> subjects;
};

/// Draws the subject profiles only.
std::vector<WalkerProfile> draw_profiles(const PopulationConfig& config);

SyntheticDataset gen_population(const PopulationConfig& config);

/// Writes one flow cache per sequence under `out_dir/flows/` and a manifest at
/// `out_dir/manifest.json`; returns the manifest.
ingest::DatasetManifest write_dataset(const SyntheticDataset& dataset,
                                      const std::filesystem::path& out_dir);

/// Periodic smoothed-noise texture in [0, 1].
Image make_texture(int width, int height, std::uint64_t seed);

/// Renders flows.size() + 1 frames of a textured plane whose global
/// translation and in-plane rotation follow the grid flows.
std::vector<Image> render_frames(std::span<const flowgrid::FlowField> flows, int width, int height,
                                 std::uint64_t seed);

}  // namespace egoid::synth
