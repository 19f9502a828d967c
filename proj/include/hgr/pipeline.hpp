#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "hgr/gesture_net.hpp"
#include "hgr/haar_cascade.hpp"
#include "hgr/imaging.hpp"
#include "hgr/mil_tracker.hpp"
#include "hgr/skin_segment.hpp"
#include "hgr/stats.hpp"

namespace hgr {

enum class Mode { Detecting, Tracking };
const char* mode_name(Mode mode);

/// Maps a detection box to the tracked box: a square of side
/// size_ratio * min(w, h), horizontally centered, whose bottom edge sits at
/// det.y + vertical_anchor * det.h.
struct WristBoxRule {
  double vertical_anchor = 1.0;
  double size_ratio = 0.6;
  bool operator==(const WristBoxRule&) const = default;
};

Rect wrist_box(const Rect& detection, const WristBoxRule& rule, int frame_w, int frame_h);

struct PipelineConfig {
  std::string skin_model_path;
  std::string weights_path;
  std::string cascade_path;
  TrackerParams tracker;
  double confidence_threshold = kDefaultConfidenceThreshold;
  int smoothing_window = 5;
  WristBoxRule wrist;
  DetectParams detect;
  PatchConfig patch;
  double segment_region_scale = 2.0;  // segmentation window relative to the tracked box
  std::uint64_t seed = 42;
};

void validate(const PipelineConfig& cfg);
/// key=value lines. Tracker keys take a "tracker." prefix.
PipelineConfig parse_pipeline_config(const std::string& text, PipelineConfig base = {});

struct PipelineContext {
  PipelineConfig config;
  SkinModel skin;
  Network net;
  CascadeModel cascade;
};

/// Loads the three model files named by `cfg`; any failure is reported as
/// ConfigLoadError.
PipelineContext load_pipeline(const PipelineConfig& cfg);

struct PipelineState {
  Mode mode = Mode::Detecting;
  std::optional<TrackerState> tracker;
  std::deque<int> label_history;
  int frame_index = 0;
  int frame_w = 0;
  int frame_h = 0;
};

struct StageTimings {
  std::optional<double> detect_ms;
  std::optional<double> track_ms;
  std::optional<double> segment_ms;
  std::optional<double> classify_ms;
  double total_ms = 0.0;
};

struct FrameOutput {
  int frame_index = 0;
  Mode mode = Mode::Detecting;  // mode the frame was processed in
  Mode next_mode = Mode::Detecting;
  std::optional<Rect> hand_bbox;
  std::optional<Rect> segment_bbox;
  std::optional<int> raw_label;
  std::optional<int> smoothed_label;
  std::optional<double> confidence;
  StageTimings timings;
};

/// Majority vote; ties go to the most recent of the tied labels.
int smooth_label(std::span<const int> history);

FrameOutput advance(PipelineState& state, const Image& frame, const PipelineContext& ctx);

struct SessionReport {
  std::vector<FrameOutput> frames;
  LatencyStats total;
  LatencyStats detect;
  LatencyStats track;
  LatencyStats segment;
  LatencyStats classify;
};

SessionReport run_session(std::span<const Image> frames, const PipelineContext& ctx);

/// frame_*.ppm files of a directory in lexicographic order.
std::vector<std::string> list_frame_files(const std::string& dir);
std::vector<Image> load_frame_directory(const std::string& dir);

nlohmann::json to_json(const PipelineConfig& cfg);
nlohmann::json to_json(const LatencyStats& s);
/// With include_timings=false every clock-derived field is omitted, which
/// makes the document a pure function of frames, config and seed.
nlohmann::json to_json(const SessionReport& report, const PipelineConfig& cfg, bool include_timings = true);

}  // namespace hgr
