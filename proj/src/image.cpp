#include "egoid/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <png.h>

#include "egoid/binary_io.hpp"
#include "egoid/error.hpp"

namespace egoid {
namespace {

std::string lower_ext(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

float luma(double r, double g, double b, double maxval) {
  return static_cast<float>((kLumaR * r + kLumaG * g + kLumaB * b) / maxval);
}

Image read_png(const std::filesystem::path& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (fp == nullptr) fail(ErrorCode::kIo, "cannot open image " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    fail(ErrorCode::kIo, "libpng initialisation failed for " + path.string());
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    fail(ErrorCode::kFormat, "unreadable PNG file " + path.string());
  }
  png_init_io(png, fp);
  png_read_png(png, info, PNG_TRANSFORM_EXPAND | PNG_TRANSFORM_PACKING, nullptr);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  const int depth = png_get_bit_depth(png, info);
  png_bytepp rows = png_get_rows(png, info);

  Image image(width, height);
  const double maxval = depth == 16 ? 65535.0 : 255.0;
  const int bytes = depth == 16 ? 2 : 1;
  for (int y = 0; y < height; ++y) {
    const png_bytep row = rows[y];
    for (int x = 0; x < width; ++x) {
      auto sample = [&](int c) -> double {
        const png_bytep p = row + (static_cast<std::size_t>(x) * channels + c) * bytes;
        return bytes == 2 ? static_cast<double>((p[0] << 8) | p[1]) : static_cast<double>(p[0]);
      };
      if (channels >= 3) {
        image.at(x, y) = luma(sample(0), sample(1), sample(2), maxval);
      } else {
        image.at(x, y) = static_cast<float>(sample(0) / maxval);
      }
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return image;
}

// Netpbm header tokenizer that skips '#' comments.
std::string next_token(std::istream& in) {
  std::string token;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      if (!token.empty()) break;
    } else {
      token.push_back(static_cast<char>(c));
    }
    c = in.get();
  }
  return token;
}

Image read_netpbm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open image " + path.string());
  const std::string magic = next_token(in);
  const bool color = magic == "P3" || magic == "P6";
  const bool ascii = magic == "P2" || magic == "P3";
  if (magic != "P2" && magic != "P3" && magic != "P5" && magic != "P6") {
    fail(ErrorCode::kFormat, "unsupported netpbm type '" + magic + "' in " + path.string());
  }
  int width = 0, height = 0, maxval = 0;
  try {
    width = std::stoi(next_token(in));
    height = std::stoi(next_token(in));
    maxval = std::stoi(next_token(in));
  } catch (const std::exception&) {
    fail(ErrorCode::kFormat, "malformed netpbm header in " + path.string());
  }
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535) {
    fail(ErrorCode::kFormat, "invalid netpbm header values in " + path.string());
  }
  const int channels = color ? 3 : 1;
  const std::size_t count = static_cast<std::size_t>(width) * height * channels;
  std::vector<double> samples(count);
  if (ascii) {
    for (auto& s : samples) {
      const std::string tok = next_token(in);
      if (tok.empty()) fail(ErrorCode::kFormat, "truncated netpbm data in " + path.string());
      s = std::stod(tok);
    }
  } else {
    const int bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> raw(count * bytes);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
      fail(ErrorCode::kFormat, "truncated netpbm data in " + path.string());
    }
    for (std::size_t i = 0; i < count; ++i) {
      samples[i] = bytes == 2 ? static_cast<double>((raw[2 * i] << 8) | raw[2 * i + 1])
                              : static_cast<double>(raw[i]);
    }
  }
  Image image(width, height);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    image.pixels[i] = color ? luma(samples[3 * i], samples[3 * i + 1], samples[3 * i + 2], maxval)
                            : static_cast<float>(samples[i] / maxval);
  }
  return image;
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

bool is_frame_file(const std::filesystem::path& path) {
  const std::string ext = lower_ext(path);
  return ext == ".png" || ext == ".pgm" || ext == ".ppm";
}

Image read_gray_image(const std::filesystem::path& path) {
  const std::string ext = lower_ext(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".pgm" || ext == ".ppm") return read_netpbm(path);
  fail(ErrorCode::kFormat, "unsupported image extension: " + path.string());
}

void write_gray_png(const std::filesystem::path& path, const Image& image) {
  std::vector<std::uint8_t> buffer(image.pixels.size());
  std::transform(image.pixels.begin(), image.pixels.end(), buffer.begin(), to_byte);

  png_image out{};
  out.version = PNG_IMAGE_VERSION;
  out.width = static_cast<png_uint_32>(image.width);
  out.height = static_cast<png_uint_32>(image.height);
  out.format = PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&out, nullptr, &size, 0, buffer.data(), 0, nullptr)) {
    fail(ErrorCode::kIo, "PNG encode failed for " + path.string());
  }
  std::vector<std::uint8_t> encoded(size);
  if (!png_image_write_to_memory(&out, encoded.data(), &size, 0, buffer.data(), 0, nullptr)) {
    fail(ErrorCode::kIo, "PNG encode failed for " + path.string());
  }
  encoded.resize(size);
  write_file_atomic(path, encoded);
}

void write_gray_pgm(const std::filesystem::path& path, const Image& image) {
  std::ostringstream header;
  header << "P5\n" << image.width << " " << image.height << "\n255\n";
  const std::string h = header.str();
  std::vector<std::uint8_t> bytes(h.begin(), h.end());
  for (float v : image.pixels) bytes.push_back(to_byte(v));
  write_file_atomic(path, bytes);
}

}  // namespace egoid
