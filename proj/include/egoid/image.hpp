#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace egoid {

/// Single-channel float image, row-major, intensities nominally in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int w, int h, float fill = 0.0f)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool empty() const { return pixels.empty(); }
};

/// Fixed luma weights used for every colour-to-gray conversion.
inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

/// Reads a PNG (8/16-bit gray, gray+alpha, RGB, RGBA, palette) or a
/// PGM/PPM (P2/P3/P5/P6) file as grayscale scaled to [0, 1]. Alpha is ignored.
Image read_gray_image(const std::filesystem::path& path);

/// Writes an 8-bit grayscale PNG; values are clamped to [0, 1] and rounded.
void write_gray_png(const std::filesystem::path& path, const Image& image);

/// Writes an 8-bit binary PGM (P5).
void write_gray_pgm(const std::filesystem::path& path, const Image& image);

/// True for extensions recognised as frame files (.png .pgm .ppm, any case).
bool is_frame_file(const std::filesystem::path& path);

}  // namespace egoid
