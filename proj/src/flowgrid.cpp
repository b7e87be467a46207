#include "egoid/flowgrid.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "egoid/binary_io.hpp"
#include "egoid/error.hpp"

namespace egoid::flowgrid {
namespace {

struct PyramidLevel {
  Image image;
  Image grad_x;
  Image grad_y;
};

int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

float pixel(const Image& im, int x, int y) {
  return im.at(clampi(x, 0, im.width - 1), clampi(y, 0, im.height - 1));
}

double bilinear(const Image& im, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(im.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(im.height - 1));
  const int x0 = static_cast<int>(x);
  const int y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, im.width - 1);
  const int y1 = std::min(y0 + 1, im.height - 1);
  const double ax = x - x0;
  const double ay = y - y0;
  const double top = (1.0 - ax) * im.at(x0, y0) + ax * im.at(x1, y0);
  const double bottom = (1.0 - ax) * im.at(x0, y1) + ax * im.at(x1, y1);
  return (1.0 - ay) * top + ay * bottom;
}

// 5-tap binomial blur followed by 2x decimation.
Image downsample(const Image& src) {
  static constexpr std::array<float, 5> kTaps = {1.f / 16, 4.f / 16, 6.f / 16, 4.f / 16, 1.f / 16};
  Image horiz(src.width, src.height);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      float acc = 0.f;
      for (int k = -2; k <= 2; ++k) acc += kTaps[k + 2] * pixel(src, x + k, y);
      horiz.at(x, y) = acc;
    }
  }
  Image out((src.width + 1) / 2, (src.height + 1) / 2);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      float acc = 0.f;
      for (int k = -2; k <= 2; ++k) acc += kTaps[k + 2] * pixel(horiz, 2 * x, 2 * y + k);
      out.at(x, y) = acc;
    }
  }
  return out;
}

// Scharr derivatives, scaled to intensity units per pixel.
void scharr(const Image& im, Image& gx, Image& gy) {
  gx = Image(im.width, im.height);
  gy = Image(im.width, im.height);
  for (int y = 0; y < im.height; ++y) {
    for (int x = 0; x < im.width; ++x) {
      const float dx = 3.f * (pixel(im, x + 1, y - 1) - pixel(im, x - 1, y - 1)) +
                       10.f * (pixel(im, x + 1, y) - pixel(im, x - 1, y)) +
                       3.f * (pixel(im, x + 1, y + 1) - pixel(im, x - 1, y + 1));
      const float dy = 3.f * (pixel(im, x - 1, y + 1) - pixel(im, x - 1, y - 1)) +
                       10.f * (pixel(im, x, y + 1) - pixel(im, x, y - 1)) +
                       3.f * (pixel(im, x + 1, y + 1) - pixel(im, x + 1, y - 1));
      gx.at(x, y) = dx / 32.f;
      gy.at(x, y) = dy / 32.f;
    }
  }
}

std::vector<PyramidLevel> build_pyramid(const Image& frame, const FlowGridSpec& spec,
                                        bool gradients) {
  std::vector<PyramidLevel> levels;
  levels.push_back({frame, {}, {}});
  while (static_cast<int>(levels.size()) < spec.pyramid_levels) {
    const Image& last = levels.back().image;
    if ((last.width + 1) / 2 < spec.lk_window || (last.height + 1) / 2 < spec.lk_window) break;
    levels.push_back({downsample(last), {}, {}});
  }
  if (gradients) {
    for (auto& level : levels) scharr(level.image, level.grad_x, level.grad_y);
  }
  return levels;
}

void check_frames(const Image& prev, const Image& next, const FlowGridSpec& spec) {
  spec.validate();
  if (prev.width != next.width || prev.height != next.height) {
    fail(ErrorCode::kShapeMismatch, "frame sizes differ: " + std::to_string(prev.width) + "x" +
                                        std::to_string(prev.height) + " vs " +
                                        std::to_string(next.width) + "x" +
                                        std::to_string(next.height));
  }
  if (prev.width < spec.m_x * spec.lk_window || prev.height < spec.m_y * spec.lk_window) {
    fail(ErrorCode::kShapeMismatch,
         "frame " + std::to_string(prev.width) + "x" + std::to_string(prev.height) +
             " too small for a " + std::to_string(spec.m_x) + "x" + std::to_string(spec.m_y) +
             " grid with " + std::to_string(spec.lk_window) + " px windows");
  }
}

FlowField track_grid(const std::vector<PyramidLevel>& prev, const std::vector<PyramidLevel>& next,
                     const FlowGridSpec& spec) {
  const int half = spec.lk_window / 2;
  const std::size_t patch = static_cast<std::size_t>(spec.lk_window) * spec.lk_window;
  const double area = static_cast<double>(patch);
  const int width = prev.front().image.width;
  const int height = prev.front().image.height;
  const int top = static_cast<int>(std::min(prev.size(), next.size())) - 1;

  std::vector<double> patch_i(patch), patch_x(patch), patch_y(patch);
  FlowField field(spec.m_x, spec.m_y);

  for (int row = 0; row < spec.m_y; ++row) {
    for (int col = 0; col < spec.m_x; ++col) {
      const double cx = (col + 0.5) * width / spec.m_x - 0.5;
      const double cy = (row + 0.5) * height / spec.m_y - 0.5;
      double gx = 0.0, gy = 0.0;  // guess carried down the pyramid
      double dx = 0.0, dy = 0.0;
      bool valid = true;

      for (int level = top; level >= 0; --level) {
        const PyramidLevel& pl = prev[level];
        const Image& target = next[level].image;
        const double scale = std::ldexp(1.0, -level);
        const double px = cx * scale;
        const double py = cy * scale;

        double gxx = 0.0, gxy = 0.0, gyy = 0.0;
        std::size_t k = 0;
        for (int oy = -half; oy <= half; ++oy) {
          for (int ox = -half; ox <= half; ++ox, ++k) {
            patch_i[k] = bilinear(pl.image, px + ox, py + oy);
            patch_x[k] = bilinear(pl.grad_x, px + ox, py + oy);
            patch_y[k] = bilinear(pl.grad_y, px + ox, py + oy);
            gxx += patch_x[k] * patch_x[k];
            gxy += patch_x[k] * patch_y[k];
            gyy += patch_y[k] * patch_y[k];
          }
        }
        const double det = gxx * gyy - gxy * gxy;
        const double min_eig =
            0.5 * (gxx + gyy - std::sqrt((gxx - gyy) * (gxx - gyy) + 4.0 * gxy * gxy)) / area;
        const bool solvable = det > 1e-12 * area * area && min_eig > 0.0;
        if (level == 0 && (!solvable || min_eig < spec.min_eig_threshold)) valid = false;

        // Coarse levels where the window hangs off the image only pass the guess down.
        const bool inside = px - half >= 0 && py - half >= 0 && px + half <= pl.image.width - 1 &&
                            py + half <= pl.image.height - 1;
        double nu_x = 0.0, nu_y = 0.0;
        if (solvable && (inside || level == 0)) {
          for (int it = 0; it < spec.lk_iterations; ++it) {
            double bx = 0.0, by = 0.0;
            k = 0;
            for (int oy = -half; oy <= half; ++oy) {
              for (int ox = -half; ox <= half; ++ox, ++k) {
                const double diff =
                    patch_i[k] - bilinear(target, px + gx + nu_x + ox, py + gy + nu_y + oy);
                bx += diff * patch_x[k];
                by += diff * patch_y[k];
              }
            }
            const double eta_x = (gyy * bx - gxy * by) / det;
            const double eta_y = (gxx * by - gxy * bx) / det;
            nu_x += eta_x;
            nu_y += eta_y;
            if (eta_x * eta_x + eta_y * eta_y < spec.convergence_px * spec.convergence_px) break;
          }
          if (level > 0 && std::hypot(nu_x, nu_y) > spec.lk_window) nu_x = nu_y = 0.0;  // lost
        }
        dx = gx + nu_x;
        dy = gy + nu_y;
        if (level > 0) {
          gx = 2.0 * dx;
          gy = 2.0 * dy;
        }
      }

      const std::size_t cell = static_cast<std::size_t>(row) * spec.m_x + col;
      if (valid && std::isfinite(dx) && std::isfinite(dy)) {
        field.u[cell] = dx;
        field.v[cell] = dy;
        field.valid[cell] = 1;
      } else {
        field.u[cell] = 0.0;
        field.v[cell] = 0.0;
        field.valid[cell] = 0;
      }
    }
  }
  return field;
}

void check_same_grid(std::span<const FlowField> flows) {
  for (const auto& f : flows) {
    if (f.m_x != flows.front().m_x || f.m_y != flows.front().m_y) {
      fail(ErrorCode::kShapeMismatch, "flow fields have inconsistent grid sizes");
    }
  }
}

}  // namespace

void FlowGridSpec::validate() const {
  if (m_x <= 0 || m_y <= 0 || pyramid_levels <= 0 || lk_iterations <= 0 || lk_window <= 0) {
    fail(ErrorCode::kInvalidArgument, "flow grid parameters must be positive");
  }
  if (lk_window % 2 == 0) fail(ErrorCode::kInvalidArgument, "lk_window must be odd");
  if (min_eig_threshold < 0.0) {
    fail(ErrorCode::kInvalidArgument, "min_eig_threshold must be non-negative");
  }
}

FlowField compute_grid_flow(const Image& prev, const Image& next, const FlowGridSpec& spec) {
  check_frames(prev, next, spec);
  return track_grid(build_pyramid(prev, spec, true), build_pyramid(next, spec, false), spec);
}

std::vector<FlowField> compute_sequence_flow(std::span<const Image> frames,
                                             const FlowGridSpec& spec) {
  if (frames.size() < 2) fail(ErrorCode::kValidation, "sequence too short for flow");
  for (std::size_t i = 1; i < frames.size(); ++i) check_frames(frames[0], frames[i], spec);
  std::vector<FlowField> flows;
  flows.reserve(frames.size() - 1);
  auto prev = build_pyramid(frames[0], spec, true);
  for (std::size_t i = 1; i < frames.size(); ++i) {
    auto next = build_pyramid(frames[i], spec, true);
    flows.push_back(track_grid(prev, next, spec));
    prev = std::move(next);
  }
  return flows;
}

std::vector<std::size_t> resample_indices(std::size_t n_frames, Rational source_fps,
                                          double target_fps) {
  std::vector<std::size_t> idx;
  if (n_frames == 0) return idx;
  const double fps = source_fps.value();
  if (std::abs(fps - target_fps) < 1e-9) {
    idx.resize(n_frames);
    for (std::size_t i = 0; i < n_frames; ++i) idx[i] = i;
    return idx;
  }
  const double duration = static_cast<double>(n_frames - 1) / fps;
  const auto m = static_cast<std::size_t>(std::floor(duration * target_fps + 1e-9)) + 1;
  for (std::size_t j = 0; j < m; ++j) {
    const auto src = static_cast<std::size_t>(std::llround(static_cast<double>(j) * fps / target_fps));
    idx.push_back(std::min(src, n_frames - 1));
  }
  return idx;
}

std::size_t window_count(std::size_t n_flows, double fps, double window_s, double stride_s) {
  const auto frames = static_cast<std::size_t>(std::llround(window_s * fps));
  const auto stride = static_cast<std::size_t>(std::llround(stride_s * fps));
  if (frames == 0 || stride == 0 || n_flows < frames) return 0;
  return (n_flows - frames) / stride + 1;
}

std::vector<FeatureWindow> build_windows(std::span<const FlowField> flows, Rational fps,
                                         double window_s, double stride_s) {
  if (!fps.valid()) fail(ErrorCode::kInvalidArgument, "fps must be positive");
  const double rate = fps.value();
  const long long frames = std::llround(window_s * rate);
  const long long stride = std::llround(stride_s * rate);
  if (frames <= 0 || stride <= 0) {
    fail(ErrorCode::kInvalidArgument, "window and stride must cover at least one frame");
  }
  if (flows.size() < static_cast<std::size_t>(frames)) {
    fail(ErrorCode::kValidation, "sequence too short: " + std::to_string(flows.size()) +
                                     " flow fields, a window needs " + std::to_string(frames));
  }
  check_same_grid(flows);
  const std::size_t count = window_count(flows.size(), rate, window_s, stride_s);
  std::vector<FeatureWindow> out;
  out.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t start = w * static_cast<std::size_t>(stride);
    FeatureWindow win;
    win.m_x = flows.front().m_x;
    win.m_y = flows.front().m_y;
    win.frames = static_cast<int>(frames);
    win.fps = fps;
    win.t_start = static_cast<double>(start) / rate;
    win.data.resize(win.series_count() * win.frames);
    for (int f = 0; f < win.frames; ++f) {
      const FlowField& field = flows[start + f];
      for (int c = 0; c < win.cells(); ++c) {
        win.at(0, c, f) = field.u[c];
        win.at(1, c, f) = field.v[c];
      }
    }
    out.push_back(std::move(win));
  }
  return out;
}

FeatureWindow sqrt_normalize(FeatureWindow w) {
  for (double& x : w.data) x = std::copysign(std::sqrt(std::abs(x)), x);
  return w;
}

FeatureWindow stabilize_mean_subtract(FeatureWindow w) {
  const int cells = w.cells();
  for (int comp = 0; comp < 2; ++comp) {
    for (int f = 0; f < w.frames; ++f) {
      double mean = 0.0;
      for (int c = 0; c < cells; ++c) mean += w.at(comp, c, f);
      mean /= cells;
      for (int c = 0; c < cells; ++c) w.at(comp, c, f) -= mean;
    }
  }
  return w;
}

std::vector<std::uint8_t> encode_flow_cache(const FlowCache& cache) {
  check_same_grid(cache.flows);
  for (const auto& f : cache.flows) {
    if (f.m_x != cache.m_x || f.m_y != cache.m_y) {
      fail(ErrorCode::kShapeMismatch, "flow cache grid does not match its fields");
    }
  }
  ByteWriter w;
  w.magic("EGFL");
  w.u16(kFlowCacheVersion);
  w.u32(static_cast<std::uint32_t>(cache.flows.size()));
  w.u16(static_cast<std::uint16_t>(cache.m_y));
  w.u16(static_cast<std::uint16_t>(cache.m_x));
  w.u32(cache.fps.num);
  w.u32(cache.fps.den);
  w.u16(0);  // reserved, pads the header to 24 bytes
  for (const auto& f : cache.flows) {
    for (double x : f.u) w.f32(static_cast<float>(x));
    for (double x : f.v) w.f32(static_cast<float>(x));
  }
  const std::size_t cells = static_cast<std::size_t>(cache.m_x) * cache.m_y;
  std::vector<std::uint8_t> mask((cache.flows.size() * cells + 7) / 8, 0);
  for (std::size_t i = 0; i < cache.flows.size(); ++i) {
    for (std::size_t c = 0; c < cells; ++c) {
      const std::size_t bit = i * cells + c;
      if (cache.flows[i].valid[c]) mask[bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
    }
  }
  w.raw(mask);
  return std::move(w.bytes());
}

FlowCache decode_flow_cache(std::span<const std::uint8_t> bytes, const std::string& source) {
  ByteReader r(bytes, source);
  r.expect_magic("EGFL");
  const std::uint16_t version = r.u16();
  if (version != kFlowCacheVersion) {
    fail(ErrorCode::kVersionMismatch, source + ": flow cache version " + std::to_string(version) +
                                          ", expected " + std::to_string(kFlowCacheVersion));
  }
  FlowCache cache;
  const std::uint32_t n = r.u32();
  cache.m_y = r.u16();
  cache.m_x = r.u16();
  cache.fps.num = r.u32();
  cache.fps.den = r.u32();
  r.u16();
  if (!cache.fps.valid() || cache.m_x == 0 || cache.m_y == 0) {
    fail(ErrorCode::kFormat, source + ": invalid flow cache header");
  }
  const std::size_t cells = static_cast<std::size_t>(cache.m_x) * cache.m_y;
  const std::size_t expected = n * cells * 2 * 4 + (n * cells + 7) / 8;
  if (r.remaining() != expected) {
    fail(ErrorCode::kFormat, source + ": flow cache payload is " + std::to_string(r.remaining()) +
                                 " bytes, expected " + std::to_string(expected));
  }
  cache.flows.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    FlowField f(cache.m_x, cache.m_y);
    for (auto& x : f.u) x = r.f32();
    for (auto& x : f.v) x = r.f32();
    cache.flows.push_back(std::move(f));
  }
  const auto mask = r.raw((n * cells + 7) / 8);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < cells; ++c) {
      const std::size_t bit = i * cells + c;
      cache.flows[i].valid[c] = (mask[bit / 8] >> (bit % 8)) & 1u;
    }
  }
  return cache;
}

void write_flow_cache(const std::string& path, const FlowCache& cache) {
  write_file_atomic(path, encode_flow_cache(cache));
}

FlowCache read_flow_cache(const std::string& path) {
  return decode_flow_cache(read_file_bytes(path), path);
}

}  // namespace egoid::flowgrid
