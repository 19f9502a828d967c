#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace hgr {

/// 8-bit raster, row-major, channels interleaved. channels is 1 (gray) or 3 (RGB).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> data;

  Image() = default;
  Image(int w, int h, int ch, std::uint8_t fill = 0);

  std::uint8_t& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

  bool operator==(const Image&) const = default;
};

/// One bit per pixel, stored as 0/1 bytes.
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(int w, int h, bool fill = false);

  bool get(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  // Out-of-bounds reads return `outside`.
  bool get_or(int x, int y, bool outside) const {
    if (x < 0 || y < 0 || x >= width || y >= height) return outside;
    return get(x, y);
  }
  std::size_t count() const;

  bool operator==(const BinaryMask&) const = default;
};

struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  int right() const { return x + w; }
  int bottom() const { return y + h; }
  long long area() const { return static_cast<long long>(w) * h; }
  bool operator==(const Rect&) const = default;
};

Rect intersect(const Rect& a, const Rect& b);

/// Summed-area tables over a grayscale image. Both tables are
/// (width+1) x (height+1) with a zero first row and column.
struct IntegralTable {
  int width = 0;   // source image width
  int height = 0;  // source image height
  std::vector<std::int64_t> sum;
  std::vector<std::int64_t> sqsum;

  std::int64_t sum_at(int x, int y) const { return sum[static_cast<std::size_t>(y) * (width + 1) + x]; }
  std::int64_t sqsum_at(int x, int y) const { return sqsum[static_cast<std::size_t>(y) * (width + 1) + x]; }

  std::int64_t rect_sum(int x, int y, int w, int h) const {
    return sum_at(x + w, y + h) - sum_at(x + w, y) - sum_at(x, y + h) + sum_at(x, y);
  }
  std::int64_t rect_sqsum(int x, int y, int w, int h) const {
    return sqsum_at(x + w, y + h) - sqsum_at(x + w, y) - sqsum_at(x, y + h) + sqsum_at(x, y);
  }
  std::int64_t rect_sum(const Rect& r) const { return rect_sum(r.x, r.y, r.w, r.h); }
};

// PNM I/O. Only binary P5/P6 with maxval 255.
Image load_pnm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> save_pnm(const Image& img);
Image read_pnm_file(const std::string& path);
void write_pnm_file(const std::string& path, const Image& img);

/// BT.601 full range, rounded half away from zero and clamped to [0,255].
Image rgb_to_ycbcr(const Image& rgb);
/// Y channel of rgb_to_ycbcr as a single-channel image. Gray input is copied.
Image to_luma(const Image& img);

Image resize_nearest(const Image& img, int w, int h);
BinaryMask resize_nearest(const BinaryMask& mask, int w, int h);

Image crop(const Image& img, const Rect& r);
BinaryMask crop(const BinaryMask& mask, const Rect& r);

/// Mask as P5-ready gray image with 0/255 samples.
Image mask_to_image(const BinaryMask& mask);
/// Pixel is set iff gray value > threshold. Multi-channel input uses luma.
BinaryMask threshold_image(const Image& img, int threshold);

IntegralTable integral_image(const Image& gray);

}  // namespace hgr
