#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hgr/imaging.hpp"

namespace hgr {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

struct Interval {
  std::uint8_t lo = 0;
  std::uint8_t hi = 255;
  bool contains(std::uint8_t v) const { return v >= lo && v <= hi; }
  bool operator==(const Interval&) const = default;
};

enum SkinChannel : std::size_t { kR, kG, kB, kY, kCb, kCr, kSkinChannels };
inline constexpr std::array<const char*, kSkinChannels> kSkinChannelNames = {"R", "G", "B", "Y", "Cb", "Cr"};

/// Axis-aligned box in RGB x YCbCr. A pixel is skin iff every channel lies
/// inside its inclusive interval.
struct SkinModel {
  std::array<Interval, kSkinChannels> intervals{};
  double alpha = 0.025;

  bool operator==(const SkinModel&) const = default;
};

/// Nearest-rank percentile of a sorted sample: value at rank max(1, ceil(q*n)).
std::uint8_t nearest_rank(std::span<const std::uint8_t> sorted, double q);

SkinModel fit_skin_model(std::span<const Rgb> pixels, double alpha = 0.025);
BinaryMask classify_pixels(const Image& rgb, const SkinModel& model);

std::string serialize_skin_model(const SkinModel& model);
SkinModel parse_skin_model(const std::string& text);
SkinModel load_skin_model_file(const std::string& path);
/// Rows of "r,g,b"; blank lines ignored.
std::vector<Rgb> parse_skin_pixels_csv(const std::string& text);

// Binary morphology with the 3x3 box. Pixels outside the frame read as
// `outside` (background by default).
BinaryMask erode(const BinaryMask& mask, int iters = 1, bool outside = false);
BinaryMask dilate(const BinaryMask& mask, int iters = 1, bool outside = false);
BinaryMask open(const BinaryMask& mask, int iters = 1);   // erode then dilate
BinaryMask close(const BinaryMask& mask, int iters = 1);  // dilate then erode
BinaryMask complement(const BinaryMask& mask);

struct ComponentInfo {
  std::size_t area = 0;
  Rect bbox;
  double cx = 0.0;
  double cy = 0.0;
  int label = 0;  // 1-based, scan order
};

struct Components {
  int width = 0;
  int height = 0;
  std::vector<int> labels;  // per pixel, 0 = background
  std::vector<ComponentInfo> infos;  // infos[k] describes label k+1
};

Components label_components(const BinaryMask& mask, int connectivity = 8);
/// Largest component; equal areas resolve to the earlier label in scan order.
std::optional<ComponentInfo> largest_component(const BinaryMask& mask, int connectivity = 8);

struct PatchConfig {
  int open_iters = 2;
  int close_iters = 2;
  double pad_fraction = 0.15;
};

struct HandPatch {
  BinaryMask mask;        // always 48x48
  ComponentInfo component;  // in the coordinates of the input image
  Rect crop;              // region of the input resampled into `mask`
};

/// Square crop window around `bbox` grown by pad_fraction per side and
/// clamped to a frame of the given size.
Rect square_crop_window(const Rect& bbox, double pad_fraction, int frame_w, int frame_h);
/// Crop of the component's own pixels resampled to 48x48.
BinaryMask patch_from_component(const Components& comps, const ComponentInfo& info, const Rect& window);

std::optional<HandPatch> extract_hand_patch(const Image& rgb, const SkinModel& model, const PatchConfig& cfg = {});

}  // namespace hgr
