#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <png.h>

#include "sl0sr/errors.hpp"
#include "sl0sr/image.hpp"

namespace sl0sr {

namespace detail {

inline bool is_pnm_space(int c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

// Skips whitespace and '#' comment lines between PNM header tokens.
inline void skip_pnm_separators(std::istream& in) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (is_pnm_space(c)) {
      in.get();
    } else {
      return;
    }
  }
}

inline long read_pnm_int(std::istream& in, const char* field) {
  skip_pnm_separators(in);
  long value = 0;
  bool any = false;
  while (std::isdigit(in.peek())) {
    value = value * 10 + (in.get() - '0');
    any = true;
    if (value > 1 << 30) throw format_error(std::string("read_pgm: ") + field + " out of range");
  }
  if (!any) throw format_error(std::string("read_pgm: missing ") + field);
  return value;
}

}  // namespace detail

// Binary PGM (P5, maxval 255). Intensity mapping is byte/255 on read and
// round(v*255) on write, so write(read(f)) is byte-identical for canonical
// files.
inline Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error("read_pgm: cannot open file: " + path.string());
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (in.gcount() != 2 || magic[0] != 'P')
    throw format_error("read_pgm: bad magic (not a PNM file): " + path.string());
  if (magic[1] == '2')
    throw format_error("read_pgm: ASCII PGM (P2) unsupported, expected binary P5: " + path.string());
  if (magic[1] != '5')
    throw format_error("read_pgm: bad magic, expected P5: " + path.string());

  const long width = detail::read_pnm_int(in, "width");
  const long height = detail::read_pnm_int(in, "height");
  const long maxval = detail::read_pnm_int(in, "maxval");
  if (width < 1 || height < 1) throw format_error("read_pgm: non-positive dimensions");
  if (maxval != 255) throw format_error("read_pgm: maxval must be 255, got " + std::to_string(maxval));
  // Exactly one separator byte between maxval and the raster.
  int sep = in.get();
  if (!detail::is_pnm_space(sep)) throw format_error("read_pgm: missing raster separator");

  std::vector<unsigned char> raster(static_cast<std::size_t>(width) * height);
  in.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (static_cast<std::size_t>(in.gcount()) != raster.size())
    throw format_error("read_pgm: truncated raster payload: " + path.string());

  Image img(static_cast<int>(width), static_cast<int>(height));
  for (std::size_t i = 0; i < raster.size(); ++i) img.pixels[i] = raster[i] / 255.0;
  return img;
}

inline void write_pgm(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw format_error("write_pgm: cannot open file for writing: " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> raster(img.size());
  for (std::size_t i = 0; i < raster.size(); ++i) {
    const double v = std::clamp(img.pixels[i], 0.0, 1.0);
    raster[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (!out) throw format_error("write_pgm: write failed: " + path.string());
}

// PNG, 8-bit. Grayscale files map byte/255 exactly; color inputs are reduced
// to BT.601 luminance at ingestion. Byte identity across write/read is not
// promised (encoder freedom), pixel identity is.
inline Image read_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
    std::string msg = png.message;
    png_image_free(&png);
    throw format_error("read_png: " + path.string() + ": " + msg);
  }
  if (png.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&png);
    throw format_error("read_png: 16-bit PNG unsupported: " + path.string());
  }
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int channels = color ? 3 : 1;
  std::vector<unsigned char> buf(static_cast<std::size_t>(PNG_IMAGE_SIZE(png)));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw format_error("read_png: " + path.string() + ": " + msg);
  }
  Image img(static_cast<int>(png.width), static_cast<int>(png.height));
  for (std::size_t i = 0; i < img.size(); ++i) {
    const unsigned char* px = buf.data() + i * channels;
    img.pixels[i] = color ? bt601_luma(px[0], px[1], px[2]) : px[0] / 255.0;
  }
  return img;
}

inline void write_png(const Image& img, const std::filesystem::path& path) {
  std::vector<unsigned char> buf(img.size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const double v = std::clamp(img.pixels[i], 0.0, 1.0);
    buf[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, buf.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw format_error("write_png: " + path.string() + ": " + msg);
  }
}

inline bool has_extension(const std::filesystem::path& path, const char* ext) {
  std::string e = path.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e == ext;
}

inline Image read_image(const std::filesystem::path& path) {
  if (has_extension(path, ".pgm")) return read_pgm(path);
  if (has_extension(path, ".png")) return read_png(path);
  throw format_error("read_image: unsupported format (want .pgm or .png): " + path.string());
}

inline void write_image(const Image& img, const std::filesystem::path& path) {
  if (has_extension(path, ".pgm")) return write_pgm(img, path);
  if (has_extension(path, ".png")) return write_png(img, path);
  throw format_error("write_image: unsupported format (want .pgm or .png): " + path.string());
}

}  // namespace sl0sr
