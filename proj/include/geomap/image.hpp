#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>
#include <png.h>

#include "geomap/error.hpp"
#include "geomap/geometry.hpp"

namespace geomap {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
  friend auto operator<=>(const Rgb&, const Rgb&) = default;
};

/// Euclidean distance in RGB space.
inline double color_distance(Rgb a, Rgb b) {
  const double dr = static_cast<double>(a.r) - b.r;
  const double dg = static_cast<double>(a.g) - b.g;
  const double db = static_cast<double>(a.b) - b.b;
  return std::sqrt(dr * dr + dg * dg + db * db);
}

inline std::string to_hex(Rgb c) {
  return fmt::format("#{:02X}{:02X}{:02X}", c.r, c.g, c.b);
}

inline Rgb parse_hex(std::string_view s) {
  if (!s.empty() && s.front() == '#') s.remove_prefix(1);
  if (s.size() != 6) throw ParseError(fmt::format("bad hex color '{}'", s));
  auto nibble = [&](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw ParseError(fmt::format("bad hex color '{}'", s));
  };
  auto byte = [&](std::size_t i) {
    return static_cast<std::uint8_t>(nibble(s[i]) * 16 + nibble(s[i + 1]));
  };
  return {byte(0), byte(2), byte(4)};
}

/// Packed 8-bit RGB raster, row-major.
class Image {
 public:
  Image() = default;
  Image(int width, int height, Rgb fill = {255, 255, 255})
      : width_(width), height_(height) {
    if (width <= 0 || height <= 0)
      throw BoundsError(fmt::format("invalid image size {}x{}", width, height));
    pixels_.resize(static_cast<std::size_t>(width) * height * 3);
    for (std::size_t i = 0; i < pixels_.size(); i += 3) {
      pixels_[i] = fill.r;
      pixels_[i + 1] = fill.g;
      pixels_[i + 2] = fill.b;
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }
  BBox bounds() const { return {0, 0, width_, height_}; }

  Rgb at(int x, int y) const {
    const auto* p = &pixels_[index(x, y)];
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, Rgb c) {
    auto* p = &pixels_[index(x, y)];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }

  void fill_rect(const BBox& box, Rgb c) {
    auto clipped = intersection(box, bounds());
    if (!clipped) return;
    for (int y = clipped->y_min; y < clipped->y_max; ++y)
      for (int x = clipped->x_min; x < clipped->x_max; ++x) set(x, y, c);
  }

  /// One-pixel-wide (or `thickness`) outline drawn inside the box.
  void stroke_rect(const BBox& box, Rgb c, int thickness = 1) {
    fill_rect({box.x_min, box.y_min, box.x_max, box.y_min + thickness}, c);
    fill_rect({box.x_min, box.y_max - thickness, box.x_max, box.y_max}, c);
    fill_rect({box.x_min, box.y_min, box.x_min + thickness, box.y_max}, c);
    fill_rect({box.x_max - thickness, box.y_min, box.x_max, box.y_max}, c);
  }

  std::span<const std::uint8_t> bytes() const { return pixels_; }
  std::span<std::uint8_t> bytes() { return pixels_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int x, int y) const {
    return (static_cast<std::size_t>(y) * width_ + x) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// Copy of the pixels under `box`. Pixel (0,0) of the result is pixel
/// (x_min, y_min) of the source.
inline Image crop(const Image& image, const BBox& box) {
  if (box.x_min < 0)
    throw BoundsError(fmt::format("crop {}: x_min < 0", box.to_string()));
  if (box.y_min < 0)
    throw BoundsError(fmt::format("crop {}: y_min < 0", box.to_string()));
  if (box.x_max > image.width())
    throw BoundsError(fmt::format("crop {}: x_max exceeds width {}",
                                  box.to_string(), image.width()));
  if (box.y_max > image.height())
    throw BoundsError(fmt::format("crop {}: y_max exceeds height {}",
                                  box.to_string(), image.height()));
  if (box.x_max <= box.x_min)
    throw BoundsError(fmt::format("crop {}: x_max <= x_min (zero width)",
                                  box.to_string()));
  if (box.y_max <= box.y_min)
    throw BoundsError(fmt::format("crop {}: y_max <= y_min (zero height)",
                                  box.to_string()));

  Image out(box.width(), box.height());
  const auto src = image.bytes();
  auto dst = out.bytes();
  const std::size_t row_bytes = static_cast<std::size_t>(box.width()) * 3;
  for (int y = 0; y < box.height(); ++y) {
    const std::size_t from =
        (static_cast<std::size_t>(box.y_min + y) * image.width() + box.x_min) * 3;
    std::copy_n(src.begin() + from, row_bytes,
                dst.begin() + static_cast<std::size_t>(y) * row_bytes);
  }
  return out;
}

/// Area-averaging resize. Used for downscaling only in practice.
inline Image resize(const Image& image, int width, int height) {
  if (width == image.width() && height == image.height()) return image;
  Image out(width, height);
  const double sx = static_cast<double>(image.width()) / width;
  const double sy = static_cast<double>(image.height()) / height;
  for (int y = 0; y < height; ++y) {
    const int y0 = static_cast<int>(y * sy);
    const int y1 = std::max(y0 + 1, std::min(image.height(), static_cast<int>((y + 1) * sy)));
    for (int x = 0; x < width; ++x) {
      const int x0 = static_cast<int>(x * sx);
      const int x1 = std::max(x0 + 1, std::min(image.width(), static_cast<int>((x + 1) * sx)));
      std::uint64_t r = 0, g = 0, b = 0;
      for (int yy = y0; yy < y1; ++yy)
        for (int xx = x0; xx < x1; ++xx) {
          const Rgb c = image.at(xx, yy);
          r += c.r;
          g += c.g;
          b += c.b;
        }
      const std::uint64_t n = static_cast<std::uint64_t>(y1 - y0) * (x1 - x0);
      out.set(x, y, {static_cast<std::uint8_t>((r + n / 2) / n),
                     static_cast<std::uint8_t>((g + n / 2) / n),
                     static_cast<std::uint8_t>((b + n / 2) / n)});
    }
  }
  return out;
}

inline Image rescale(const Image& image, double factor) {
  if (factor == 1.0) return image;
  const int w = std::max(1, static_cast<int>(image.width() * factor + 0.5));
  const int h = std::max(1, static_cast<int>(image.height() * factor + 0.5));
  return resize(image, w, h);
}

/// Shrink so the longer edge is at most `max_edge`; returns the applied factor
/// (1.0 when the image already fits).
inline double fit_within(const Image& image, int max_edge, Image& out) {
  const int edge = std::max(image.width(), image.height());
  if (max_edge <= 0 || edge <= max_edge) {
    out = image;
    return 1.0;
  }
  const double factor = static_cast<double>(max_edge) / edge;
  out = rescale(image, factor);
  return factor;
}

// ---------------------------------------------------------------------------
// Encoding

inline std::string encode_png(const Image& image) {
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(image.width());
  desc.height = static_cast<png_uint_32>(image.height());
  desc.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  const auto* data = image.bytes().data();
  if (!png_image_write_to_memory(&desc, nullptr, &size, 0, data, 0, nullptr))
    throw Error(fmt::format("png encode failed: {}", desc.message));
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&desc, out.data(), &size, 0, data, 0, nullptr))
    throw Error(fmt::format("png encode failed: {}", desc.message));
  out.resize(size);
  return out;
}

inline Image decode_png(std::string_view bytes) {
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&desc, bytes.data(), bytes.size()))
    throw ParseError(fmt::format("png decode failed: {}", desc.message));
  desc.format = PNG_FORMAT_RGB;
  Image out(static_cast<int>(desc.width), static_cast<int>(desc.height));
  if (!png_image_finish_read(&desc, nullptr, out.bytes().data(), 0, nullptr)) {
    png_image_free(&desc);
    throw ParseError(fmt::format("png decode failed: {}", desc.message));
  }
  return out;
}

/// Binary PPM (P6), for debugging.
inline std::string encode_ppm(const Image& image) {
  std::string out = fmt::format("P6\n{} {}\n255\n", image.width(), image.height());
  out.append(reinterpret_cast<const char*>(image.bytes().data()), image.bytes().size());
  return out;
}

inline Image decode_ppm(std::string_view bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return std::string(bytes.substr(start, pos - start));
  };
  if (token() != "P6") throw ParseError("ppm: missing P6 magic");
  const int w = std::stoi(token());
  const int h = std::stoi(token());
  if (token() != "255") throw ParseError("ppm: only maxval 255 supported");
  ++pos;
  Image out(w, h);
  if (bytes.size() - pos < out.bytes().size()) throw ParseError("ppm: truncated");
  std::copy_n(bytes.begin() + pos, out.bytes().size(), out.bytes().begin());
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LookupError(fmt::format("cannot open '{}'", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline Image load_image(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.rfind("P6", 0) == 0) return decode_ppm(bytes);
  return decode_png(bytes);
}

inline void save_image(const std::filesystem::path& path, const Image& image) {
  write_file(path, path.extension() == ".ppm" ? encode_ppm(image) : encode_png(image));
}

inline std::string base64_encode(std::string_view in) {
  static constexpr char kTable[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < in.size(); i += 3) {
    const auto n = (std::uint32_t(std::uint8_t(in[i])) << 16) |
                   (std::uint32_t(std::uint8_t(in[i + 1])) << 8) |
                   std::uint8_t(in[i + 2]);
    out += kTable[(n >> 18) & 63];
    out += kTable[(n >> 12) & 63];
    out += kTable[(n >> 6) & 63];
    out += kTable[n & 63];
  }
  if (i < in.size()) {
    std::uint32_t n = std::uint32_t(std::uint8_t(in[i])) << 16;
    if (i + 1 < in.size()) n |= std::uint32_t(std::uint8_t(in[i + 1])) << 8;
    out += kTable[(n >> 18) & 63];
    out += kTable[(n >> 12) & 63];
    out += i + 1 < in.size() ? kTable[(n >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

inline std::string base64_decode(std::string_view in) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::string out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : in) {
    if (c == '=') break;
    const int v = value(c);
    if (v < 0) {
      if (std::isspace(static_cast<unsigned char>(c))) continue;
      throw ParseError("base64: invalid character");
    }
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out += static_cast<char>((acc >> bits) & 0xFF);
    }
  }
  return out;
}

}  // namespace geomap
