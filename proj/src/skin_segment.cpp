#include "hgr/skin_segment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string_view>

#include "hgr/error.hpp"

namespace hgr {

std::uint8_t nearest_rank(std::span<const std::uint8_t> sorted, double q) {
  const auto n = static_cast<double>(sorted.size());
  // The epsilon keeps products like 0.9 * 10 from rounding up a whole rank.
  auto rank = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

SkinModel fit_skin_model(std::span<const Rgb> pixels, double alpha) {
  if (pixels.empty()) fail(ErrorCode::EmptyInput, "skin model needs at least one pixel");
  if (!(alpha >= 0.0 && alpha < 0.5)) fail(ErrorCode::InvalidArgument, "alpha must be in [0, 0.5)");
  Image rgb(static_cast<int>(pixels.size()), 1, 3);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    rgb.data[3 * i] = pixels[i].r;
    rgb.data[3 * i + 1] = pixels[i].g;
    rgb.data[3 * i + 2] = pixels[i].b;
  }
  const Image ycc = rgb_to_ycbcr(rgb);
  SkinModel model;
  model.alpha = alpha;
  std::vector<std::uint8_t> values(pixels.size());
  for (std::size_t ch = 0; ch < kSkinChannels; ++ch) {
    const Image& src = ch < 3 ? rgb : ycc;
    const std::size_t off = ch % 3;
    for (std::size_t i = 0; i < pixels.size(); ++i) values[i] = src.data[3 * i + off];
    std::sort(values.begin(), values.end());
    model.intervals[ch] = {nearest_rank(values, alpha), nearest_rank(values, 1.0 - alpha)};
  }
  return model;
}

BinaryMask classify_pixels(const Image& rgb, const SkinModel& model) {
  if (rgb.channels != 3) fail(ErrorCode::WrongChannelCount, "classify_pixels needs an RGB image");
  const Image ycc = rgb_to_ycbcr(rgb);
  BinaryMask mask(rgb.width, rgb.height);
  const auto& iv = model.intervals;
  for (std::size_t p = 0; p < mask.bits.size(); ++p) {
    const std::uint8_t* c = &rgb.data[3 * p];
    const std::uint8_t* y = &ycc.data[3 * p];
    mask.bits[p] = iv[kR].contains(c[0]) && iv[kG].contains(c[1]) && iv[kB].contains(c[2]) &&
                   iv[kY].contains(y[0]) && iv[kCb].contains(y[1]) && iv[kCr].contains(y[2]);
  }
  return mask;
}

std::string serialize_skin_model(const SkinModel& model) {
  std::ostringstream out;
  for (std::size_t ch = 0; ch < kSkinChannels; ++ch) {
    out << kSkinChannelNames[ch] << ' ' << int(model.intervals[ch].lo) << ' ' << int(model.intervals[ch].hi) << '\n';
  }
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, model.alpha);
  out << "alpha " << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf)) << '\n';
  return out.str();
}

SkinModel parse_skin_model(const std::string& text) {
  std::istringstream in(text);
  SkinModel model;
  auto read_byte = [&](const char* channel) {
    long v = -1;
    if (!(in >> v) || v < 0 || v > 255) fail(ErrorCode::InvalidArgument, std::string("bad bound for channel ") + channel);
    return static_cast<std::uint8_t>(v);
  };
  for (std::size_t ch = 0; ch < kSkinChannels; ++ch) {
    std::string name;
    if (!(in >> name) || name != kSkinChannelNames[ch]) {
      fail(ErrorCode::InvalidArgument, std::string("skin model: expected channel ") + kSkinChannelNames[ch]);
    }
    model.intervals[ch].lo = read_byte(kSkinChannelNames[ch]);
    model.intervals[ch].hi = read_byte(kSkinChannelNames[ch]);
    if (model.intervals[ch].lo > model.intervals[ch].hi) {
      fail(ErrorCode::InvalidArgument, std::string("skin model: lo > hi for ") + kSkinChannelNames[ch]);
    }
  }
  std::string key;
  if (!(in >> key) || key != "alpha" || !(in >> model.alpha) || !(model.alpha >= 0.0 && model.alpha < 0.5)) {
    fail(ErrorCode::InvalidArgument, "skin model: expected 'alpha <float>' in [0,0.5)");
  }
  std::string extra;
  if (in >> extra) fail(ErrorCode::InvalidArgument, "skin model: trailing content '" + extra + "'");
  return model;
}

SkinModel load_skin_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_skin_model(ss.str());
}

std::vector<Rgb> parse_skin_pixels_csv(const std::string& text) {
  std::vector<Rgb> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    int v[3];
    char c1 = 0, c2 = 0;
    std::istringstream ls(line);
    std::string rest;
    if (!(ls >> v[0] >> c1 >> v[1] >> c2 >> v[2]) || c1 != ',' || c2 != ',' || (ls >> rest)) {
      fail(ErrorCode::InvalidArgument, "pixel CSV line " + std::to_string(line_no) + ": expected r,g,b");
    }
    for (int k : v) {
      if (k < 0 || k > 255) fail(ErrorCode::InvalidArgument, "pixel CSV line " + std::to_string(line_no) + ": value out of range");
    }
    out.push_back({static_cast<std::uint8_t>(v[0]), static_cast<std::uint8_t>(v[1]), static_cast<std::uint8_t>(v[2])});
  }
  return out;
}

namespace {

// One pass of 3x3 erosion (all neighbours set) or dilation (any set).
BinaryMask box_pass(const BinaryMask& m, bool erosion, bool outside) {
  BinaryMask out(m.width, m.height);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      bool v = erosion;
      for (int dy = -1; dy <= 1 && v == erosion; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (m.get_or(x + dx, y + dy, outside) != erosion) {
            v = !erosion;
            break;
          }
        }
      }
      out.set(x, y, v);
    }
  }
  return out;
}

}  // namespace

BinaryMask erode(const BinaryMask& mask, int iters, bool outside) {
  if (iters < 0) fail(ErrorCode::InvalidArgument, "iterations must be >= 0");
  BinaryMask m = mask;
  for (int i = 0; i < iters; ++i) m = box_pass(m, true, outside);
  return m;
}

BinaryMask dilate(const BinaryMask& mask, int iters, bool outside) {
  if (iters < 0) fail(ErrorCode::InvalidArgument, "iterations must be >= 0");
  BinaryMask m = mask;
  for (int i = 0; i < iters; ++i) m = box_pass(m, false, outside);
  return m;
}

BinaryMask open(const BinaryMask& mask, int iters) { return dilate(erode(mask, iters), iters); }

BinaryMask close(const BinaryMask& mask, int iters) { return erode(dilate(mask, iters), iters); }

BinaryMask complement(const BinaryMask& mask) {
  BinaryMask out = mask;
  for (auto& b : out.bits) b = b ? 0 : 1;
  return out;
}

Components label_components(const BinaryMask& mask, int connectivity) {
  if (connectivity != 4 && connectivity != 8) fail(ErrorCode::InvalidArgument, "connectivity must be 4 or 8");
  Components comps;
  comps.width = mask.width;
  comps.height = mask.height;
  comps.labels.assign(mask.bits.size(), 0);
  std::vector<int> stack;
  const int w = mask.width, h = mask.height;
  for (int y0 = 0; y0 < h; ++y0) {
    for (int x0 = 0; x0 < w; ++x0) {
      const int start = y0 * w + x0;
      if (!mask.bits[start] || comps.labels[start] != 0) continue;
      const int label = static_cast<int>(comps.infos.size()) + 1;
      ComponentInfo info;
      info.label = label;
      int x_min = x0, x_max = x0, y_min = y0, y_max = y0;
      double sx = 0.0, sy = 0.0;
      comps.labels[start] = label;
      stack.assign(1, start);
      while (!stack.empty()) {
        const int p = stack.back();
        stack.pop_back();
        const int px = p % w, py = p / w;
        ++info.area;
        sx += px;
        sy += py;
        x_min = std::min(x_min, px);
        x_max = std::max(x_max, px);
        y_min = std::min(y_min, py);
        y_max = std::max(y_max, py);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if ((dx == 0 && dy == 0) || (connectivity == 4 && dx != 0 && dy != 0)) continue;
            const int nx = px + dx, ny = py + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const int q = ny * w + nx;
            if (mask.bits[q] && comps.labels[q] == 0) {
              comps.labels[q] = label;
              stack.push_back(q);
            }
          }
        }
      }
      info.bbox = {x_min, y_min, x_max - x_min + 1, y_max - y_min + 1};
      info.cx = sx / static_cast<double>(info.area);
      info.cy = sy / static_cast<double>(info.area);
      comps.infos.push_back(info);
    }
  }
  return comps;
}

std::optional<ComponentInfo> largest_component(const BinaryMask& mask, int connectivity) {
  const Components comps = label_components(mask, connectivity);
  if (comps.infos.empty()) return std::nullopt;
  const ComponentInfo* best = &comps.infos.front();
  for (const auto& c : comps.infos) {
    if (c.area > best->area) best = &c;
  }
  return *best;
}

Rect square_crop_window(const Rect& bbox, double pad_fraction, int frame_w, int frame_h) {
  const double side = std::max(bbox.w, bbox.h) * (1.0 + 2.0 * pad_fraction);
  const int s = std::max(1, static_cast<int>(std::lround(side)));
  const double cx = bbox.x + bbox.w / 2.0;
  const double cy = bbox.y + bbox.h / 2.0;
  const int sw = std::min(s, frame_w);
  const int sh = std::min(s, frame_h);
  int x = static_cast<int>(std::lround(cx - sw / 2.0));
  int y = static_cast<int>(std::lround(cy - sh / 2.0));
  x = std::clamp(x, 0, frame_w - sw);
  y = std::clamp(y, 0, frame_h - sh);
  return {x, y, sw, sh};
}

BinaryMask patch_from_component(const Components& comps, const ComponentInfo& info, const Rect& window) {
  BinaryMask crop_mask(window.w, window.h);
  for (int y = 0; y < window.h; ++y) {
    for (int x = 0; x < window.w; ++x) {
      const std::size_t idx = static_cast<std::size_t>(window.y + y) * comps.width + (window.x + x);
      crop_mask.set(x, y, comps.labels[idx] == info.label);
    }
  }
  return resize_nearest(crop_mask, 48, 48);
}

std::optional<HandPatch> extract_hand_patch(const Image& rgb, const SkinModel& model, const PatchConfig& cfg) {
  BinaryMask mask = classify_pixels(rgb, model);
  mask = open(mask, cfg.open_iters);
  mask = close(mask, cfg.close_iters);
  const Components comps = label_components(mask, 8);
  if (comps.infos.empty()) return std::nullopt;
  const ComponentInfo* best = &comps.infos.front();
  for (const auto& c : comps.infos) {
    if (c.area > best->area) best = &c;
  }
  HandPatch patch;
  patch.component = *best;
  patch.crop = square_crop_window(best->bbox, cfg.pad_fraction, rgb.width, rgb.height);
  patch.mask = patch_from_component(comps, *best, patch.crop);
  return patch;
}

}  // namespace hgr
