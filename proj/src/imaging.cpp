#include "hgr/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "hgr/error.hpp"

namespace hgr {

Image::Image(int w, int h, int ch, std::uint8_t fill)
    : width(w), height(h), channels(ch), data(static_cast<std::size_t>(w) * h * ch, fill) {}

BinaryMask::BinaryMask(int w, int h, bool fill)
    : width(w), height(h), bits(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

Rect intersect(const Rect& a, const Rect& b) {
  const int x0 = std::max(a.x, b.x);
  const int y0 = std::max(a.y, b.y);
  const int x1 = std::min(a.right(), b.right());
  const int y1 = std::min(a.bottom(), b.bottom());
  if (x1 <= x0 || y1 <= y0) return {x0, y0, 0, 0};
  return {x0, y0, x1 - x0, y1 - y0};
}

namespace {

constexpr int kMaxPnmDim = 1 << 16;

bool is_pnm_space(std::uint8_t c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  // Skips the mandatory whitespace (and comments) preceding a header token.
  void skip_separator() {
    bool saw_space = false;
    while (pos_ < bytes_.size()) {
      const std::uint8_t c = bytes_[pos_];
      if (is_pnm_space(c)) {
        saw_space = true;
        ++pos_;
      } else if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
        saw_space = true;
      } else {
        break;
      }
    }
    if (!saw_space) fail(ErrorCode::MalformedHeader, "expected whitespace between PNM header tokens");
    if (pos_ >= bytes_.size()) fail(ErrorCode::MalformedHeader, "PNM header ends early");
  }

  int read_number(const char* what) {
    long value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      value = value * 10 + (bytes_[pos_] - '0');
      ++pos_;
      if (++digits > 6) fail(ErrorCode::MalformedHeader, std::string("PNM ") + what + " too large");
    }
    if (digits == 0) fail(ErrorCode::MalformedHeader, std::string("PNM ") + what + " is not a number");
    return static_cast<int>(value);
  }

  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }
  std::uint8_t peek() const { return bytes_[pos_]; }
  bool at_end() const { return pos_ >= bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 2;
};

std::uint8_t clamp_round(double v) {
  const double r = std::round(v);  // half away from zero
  return static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
}

std::uint8_t luma_of(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return clamp_round(0.299 * r + 0.587 * g + 0.114 * b);
}

// floor((i + 0.5) * src / dst) in exact integer arithmetic.
int nearest_source(int i, int src, int dst) {
  return static_cast<int>((static_cast<long long>(2 * i + 1) * src) / (2LL * dst));
}

}  // namespace

Image load_pnm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    fail(ErrorCode::MalformedHeader, "missing P5/P6 magic");
  }
  const int channels = bytes[1] == '5' ? 1 : 3;
  HeaderReader reader(bytes);
  reader.skip_separator();
  const int width = reader.read_number("width");
  reader.skip_separator();
  const int height = reader.read_number("height");
  reader.skip_separator();
  const int maxval = reader.read_number("maxval");
  if (width <= 0 || height <= 0 || width > kMaxPnmDim || height > kMaxPnmDim) {
    fail(ErrorCode::MalformedHeader, "PNM dimensions out of range");
  }
  if (maxval != 255) fail(ErrorCode::UnsupportedMaxval, "maxval " + std::to_string(maxval) + " (only 255 supported)");
  if (reader.at_end()) fail(ErrorCode::TruncatedBody, "no body after PNM header");
  if (!is_pnm_space(reader.peek())) fail(ErrorCode::MalformedHeader, "maxval must be followed by one whitespace byte");
  reader.advance();

  Image img(width, height, channels);
  const std::size_t need = img.data.size();
  if (bytes.size() - reader.pos() < need) {
    fail(ErrorCode::TruncatedBody, "expected " + std::to_string(need) + " body bytes, got " +
                                       std::to_string(bytes.size() - reader.pos()));
  }
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(reader.pos()), need, img.data.begin());
  return img;
}

std::vector<std::uint8_t> save_pnm(const Image& img) {
  const std::string header = std::string(img.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(img.width) +
                             " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.data.begin(), img.data.end());
  return out;
}

Image read_pnm_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return load_pnm(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.what());
  }
}

void write_pnm_file(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path);
  const auto bytes = save_pnm(img);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::Io, "short write to " + path);
}

Image rgb_to_ycbcr(const Image& rgb) {
  if (rgb.channels != 3) fail(ErrorCode::WrongChannelCount, "rgb_to_ycbcr needs 3 channels");
  Image out(rgb.width, rgb.height, 3);
  for (std::size_t i = 0; i < rgb.data.size(); i += 3) {
    const double r = rgb.data[i], g = rgb.data[i + 1], b = rgb.data[i + 2];
    out.data[i] = clamp_round(0.299 * r + 0.587 * g + 0.114 * b);
    out.data[i + 1] = clamp_round(128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b);
    out.data[i + 2] = clamp_round(128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b);
  }
  return out;
}

Image to_luma(const Image& img) {
  if (img.channels == 1) return img;
  if (img.channels != 3) fail(ErrorCode::WrongChannelCount, "to_luma needs 1 or 3 channels");
  Image out(img.width, img.height, 1);
  for (std::size_t p = 0; p < out.data.size(); ++p) {
    out.data[p] = luma_of(img.data[3 * p], img.data[3 * p + 1], img.data[3 * p + 2]);
  }
  return out;
}

Image resize_nearest(const Image& img, int w, int h) {
  if (w <= 0 || h <= 0) fail(ErrorCode::ZeroDimension, "resize target must be positive");
  Image out(w, h, img.channels);
  for (int y = 0; y < h; ++y) {
    const int sy = nearest_source(y, img.height, h);
    for (int x = 0; x < w; ++x) {
      const int sx = nearest_source(x, img.width, w);
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(sx, sy, c);
    }
  }
  return out;
}

BinaryMask resize_nearest(const BinaryMask& mask, int w, int h) {
  if (w <= 0 || h <= 0) fail(ErrorCode::ZeroDimension, "resize target must be positive");
  BinaryMask out(w, h);
  for (int y = 0; y < h; ++y) {
    const int sy = nearest_source(y, mask.height, h);
    for (int x = 0; x < w; ++x) out.set(x, y, mask.get(nearest_source(x, mask.width, w), sy));
  }
  return out;
}

Image crop(const Image& img, const Rect& r) {
  Image out(r.w, r.h, img.channels);
  for (int y = 0; y < r.h; ++y) {
    const auto* src = &img.data[(static_cast<std::size_t>(r.y + y) * img.width + r.x) * img.channels];
    std::copy_n(src, static_cast<std::size_t>(r.w) * img.channels,
                &out.data[static_cast<std::size_t>(y) * r.w * img.channels]);
  }
  return out;
}

BinaryMask crop(const BinaryMask& mask, const Rect& r) {
  BinaryMask out(r.w, r.h);
  for (int y = 0; y < r.h; ++y) {
    for (int x = 0; x < r.w; ++x) out.set(x, y, mask.get(r.x + x, r.y + y));
  }
  return out;
}

Image mask_to_image(const BinaryMask& mask) {
  Image out(mask.width, mask.height, 1);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) out.data[i] = mask.bits[i] ? 255 : 0;
  return out;
}

BinaryMask threshold_image(const Image& img, int threshold) {
  const Image gray = to_luma(img);
  BinaryMask out(gray.width, gray.height);
  for (std::size_t i = 0; i < gray.data.size(); ++i) out.bits[i] = gray.data[i] > threshold ? 1 : 0;
  return out;
}

IntegralTable integral_image(const Image& gray) {
  if (gray.channels != 1) fail(ErrorCode::WrongChannelCount, "integral_image needs a grayscale image");
  IntegralTable t;
  t.width = gray.width;
  t.height = gray.height;
  const std::size_t stride = static_cast<std::size_t>(gray.width) + 1;
  t.sum.assign(stride * (gray.height + 1), 0);
  t.sqsum.assign(stride * (gray.height + 1), 0);
  for (int y = 0; y < gray.height; ++y) {
    std::int64_t row = 0;
    std::int64_t row_sq = 0;
    const std::uint8_t* src = &gray.data[static_cast<std::size_t>(y) * gray.width];
    std::int64_t* above = &t.sum[y * stride];
    std::int64_t* cur = &t.sum[(y + 1) * stride];
    std::int64_t* above_sq = &t.sqsum[y * stride];
    std::int64_t* cur_sq = &t.sqsum[(y + 1) * stride];
    for (int x = 0; x < gray.width; ++x) {
      const std::int64_t v = src[x];
      row += v;
      row_sq += v * v;
      cur[x + 1] = above[x + 1] + row;
      cur_sq[x + 1] = above_sq[x + 1] + row_sq;
    }
  }
  return t;
}

}  // namespace hgr
