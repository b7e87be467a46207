#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "egoid/image.hpp"
#include "egoid/rational.hpp"

namespace egoid::flowgrid {

/// Grid and Lucas-Kanade tracker parameters.
struct FlowGridSpec {
  int m_x = 10;  // grid columns
  int m_y = 5;   // grid rows
  int pyramid_levels = 3;
  int lk_window = 21;  // odd, px
  int lk_iterations = 20;
  double convergence_px = 0.01;
  /// Minimum eigenvalue of the structure tensor divided by the patch area.
  double min_eig_threshold = 1e-4;

  int cells() const { return m_x * m_y; }
  void validate() const;
};

/// One frame's m_y x m_x grid of flow vectors in px/frame, row-major.
struct FlowField {
  int m_x = 0;
  int m_y = 0;
  std::vector<double> u;
  std::vector<double> v;
  std::vector<std::uint8_t> valid;

  FlowField() = default;
  FlowField(int mx, int my)
      : m_x(mx), m_y(my), u(static_cast<std::size_t>(mx) * my, 0.0),
        v(static_cast<std::size_t>(mx) * my, 0.0), valid(static_cast<std::size_t>(mx) * my, 1) {}

  int cells() const { return m_x * m_y; }
};

/// Flow over F consecutive frames laid out [component][cell][frame];
/// component 0 is horizontal (u), 1 is vertical (v); cells are row-major.
struct FeatureWindow {
  int m_x = 0;
  int m_y = 0;
  int frames = 0;
  std::vector<double> data;
  double t_start = 0.0;
  Rational fps;
  std::optional<std::string> subject_id;

  int cells() const { return m_x * m_y; }
  std::size_t series_count() const { return 2 * static_cast<std::size_t>(cells()); }

  double& at(int component, int cell, int frame) {
    return data[(static_cast<std::size_t>(component) * cells() + cell) * frames + frame];
  }
  double at(int component, int cell, int frame) const {
    return data[(static_cast<std::size_t>(component) * cells() + cell) * frames + frame];
  }
  /// The time series of one (component, cell) pair.
  std::span<const double> series(std::size_t index) const {
    return std::span(data).subspan(index * frames, frames);
  }
};

inline constexpr double kWindowSeconds = 4.0;
inline constexpr double kStrideSeconds = 2.0;
inline constexpr double kTargetFps = 15.0;

/// Pyramidal Lucas-Kanade evaluated at the centre of every grid block.
/// Cells whose normalized minimum structure-tensor eigenvalue is below the
/// threshold are reported invalid with zero flow.
FlowField compute_grid_flow(const Image& prev, const Image& next, const FlowGridSpec& spec);

/// Flow for every consecutive frame pair; pyramids are built once per frame.
std::vector<FlowField> compute_sequence_flow(std::span<const Image> frames,
                                             const FlowGridSpec& spec);

/// Source-frame indices that resample a sequence to `target_fps` by
/// nearest-frame selection.
std::vector<std::size_t> resample_indices(std::size_t n_frames, Rational source_fps,
                                          double target_fps = kTargetFps);

/// Number of windows produced by build_windows for N flow fields.
std::size_t window_count(std::size_t n_flows, double fps, double window_s = kWindowSeconds,
                         double stride_s = kStrideSeconds);

std::vector<FeatureWindow> build_windows(std::span<const FlowField> flows, Rational fps,
                                         double window_s = kWindowSeconds,
                                         double stride_s = kStrideSeconds);

/// x -> sign(x) * sqrt(|x|).
FeatureWindow sqrt_normalize(FeatureWindow w);

/// Subtracts, per frame and component, the mean over all cells.
FeatureWindow stabilize_mean_subtract(FeatureWindow w);

/// Per-sequence flow cache ("EGFL").
struct FlowCache {
  Rational fps;
  int m_x = 0;
  int m_y = 0;
  std::vector<FlowField> flows;
};

inline constexpr std::uint16_t kFlowCacheVersion = 1;

std::vector<std::uint8_t> encode_flow_cache(const FlowCache& cache);
FlowCache decode_flow_cache(std::span<const std::uint8_t> bytes, const std::string& source);
void write_flow_cache(const std::string& path, const FlowCache& cache);
FlowCache read_flow_cache(const std::string& path);

}  // namespace egoid::flowgrid
