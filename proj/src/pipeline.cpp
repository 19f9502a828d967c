#include "hgr/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>

#include "hgr/error.hpp"

namespace hgr {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  const auto us = std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - since).count();
  return static_cast<double>(us) / 1000.0;
}

Rect clamp_rect(Rect r, int frame_w, int frame_h) {
  r.w = std::min(r.w, frame_w);
  r.h = std::min(r.h, frame_h);
  r.x = std::clamp(r.x, 0, frame_w - r.w);
  r.y = std::clamp(r.y, 0, frame_h - r.h);
  return r;
}

std::string strip(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  const auto b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

}  // namespace

const char* mode_name(Mode mode) { return mode == Mode::Detecting ? "DETECTING" : "TRACKING"; }

Rect wrist_box(const Rect& det, const WristBoxRule& rule, int frame_w, int frame_h) {
  const int side = std::max(4, static_cast<int>(std::lround(rule.size_ratio * std::min(det.w, det.h))));
  const double cx = det.x + det.w / 2.0;
  const double bottom = det.y + rule.vertical_anchor * det.h;
  Rect r{static_cast<int>(std::lround(cx - side / 2.0)), static_cast<int>(std::lround(bottom)) - side, side, side};
  return clamp_rect(r, frame_w, frame_h);
}

void validate(const PipelineConfig& cfg) {
  validate(cfg.tracker);
  if (cfg.smoothing_window < 1) fail(ErrorCode::InvalidArgument, "smoothing_window must be >= 1");
  if (!std::isfinite(cfg.confidence_threshold)) fail(ErrorCode::InvalidArgument, "confidence_threshold must be finite");
  if (!(cfg.wrist.size_ratio > 0.0)) fail(ErrorCode::InvalidArgument, "wrist size_ratio must be positive");
  if (!(cfg.segment_region_scale >= 1.0)) fail(ErrorCode::InvalidArgument, "segment_region_scale must be >= 1");
  if (cfg.patch.open_iters < 0 || cfg.patch.close_iters < 0 || !(cfg.patch.pad_fraction >= 0.0)) {
    fail(ErrorCode::InvalidArgument, "bad patch configuration");
  }
}

PipelineConfig parse_pipeline_config(const std::string& text, PipelineConfig cfg) {
  std::istringstream in(text);
  std::string line;
  std::string tracker_lines;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (strip(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorCode::ConfigLoadError, "pipeline config line " + std::to_string(line_no) + ": expected key=value");
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    auto num = [&] {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != value.size()) fail(ErrorCode::ConfigLoadError, "pipeline config: bad number for " + key);
      return v;
    };
    auto integer = [&] {
      const double v = num();
      if (v != std::floor(v)) fail(ErrorCode::ConfigLoadError, "pipeline config: " + key + " must be an integer");
      return static_cast<int>(v);
    };
    if (key.rfind("tracker.", 0) == 0) {
      tracker_lines += key.substr(8) + "=" + value + "\n";
    } else if (key == "skin_model") cfg.skin_model_path = value;
    else if (key == "weights") cfg.weights_path = value;
    else if (key == "cascade") cfg.cascade_path = value;
    else if (key == "confidence_threshold") cfg.confidence_threshold = num();
    else if (key == "smoothing_window") cfg.smoothing_window = integer();
    else if (key == "wrist_anchor") cfg.wrist.vertical_anchor = num();
    else if (key == "wrist_ratio") cfg.wrist.size_ratio = num();
    else if (key == "scale_factor") cfg.detect.scale_factor = num();
    else if (key == "step_fraction") cfg.detect.step_fraction = num();
    else if (key == "min_neighbors") cfg.detect.min_neighbors = integer();
    else if (key == "open_iters") cfg.patch.open_iters = integer();
    else if (key == "close_iters") cfg.patch.close_iters = integer();
    else if (key == "pad_fraction") cfg.patch.pad_fraction = num();
    else if (key == "segment_region_scale") cfg.segment_region_scale = num();
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(integer());
    else fail(ErrorCode::ConfigLoadError, "pipeline config: unknown key '" + key + "'");
  }
  try {
    cfg.tracker = parse_tracker_config(tracker_lines, cfg.tracker);
    validate(cfg);
  } catch (const Error& e) {
    fail(ErrorCode::ConfigLoadError, e.what());
  }
  return cfg;
}

PipelineContext load_pipeline(const PipelineConfig& cfg) {
  PipelineContext ctx;
  ctx.config = cfg;
  try {
    validate(cfg);
    ctx.skin = load_skin_model_file(cfg.skin_model_path);
    ctx.net = load_weights_file(cfg.weights_path);
    ctx.cascade = load_cascade_file(cfg.cascade_path);
  } catch (const Error& e) {
    fail(ErrorCode::ConfigLoadError, e.what());
  }
  return ctx;
}

int smooth_label(std::span<const int> history) {
  if (history.empty()) fail(ErrorCode::EmptyHistory, "label history is empty");
  std::map<int, int> votes;
  for (int l : history) ++votes[l];
  int best_count = 0;
  for (const auto& [label, n] : votes) best_count = std::max(best_count, n);
  for (auto it = history.rbegin(); it != history.rend(); ++it) {
    if (votes[*it] == best_count) return *it;
  }
  return history.back();
}

FrameOutput advance(PipelineState& state, const Image& frame, const PipelineContext& ctx) {
  const auto t0 = Clock::now();
  const auto& cfg = ctx.config;
  if (frame.channels != 3) fail(ErrorCode::WrongChannelCount, "pipeline frames must be RGB");
  if (state.frame_index == 0 && state.frame_w == 0) {
    state.frame_w = frame.width;
    state.frame_h = frame.height;
  }
  FrameOutput out;
  out.frame_index = state.frame_index++;
  out.mode = state.mode;
  if (frame.width != state.frame_w || frame.height != state.frame_h) {
    // Size changed mid-session: drop the tracker and report no hand.
    state.mode = Mode::Detecting;
    state.tracker.reset();
    state.label_history.clear();
    out.next_mode = state.mode;
    out.timings.total_ms = elapsed_ms(t0);
    return out;
  }
  const Image luma = to_luma(frame);

  if (state.mode == Mode::Detecting) {
    const auto td = Clock::now();
    std::vector<Detection> dets;
    if (luma.width >= ctx.cascade.window_w && luma.height >= ctx.cascade.window_h) {
      dets = detect_multiscale(ctx.cascade, luma, cfg.detect);
    }
    out.timings.detect_ms = elapsed_ms(td);
    if (!dets.empty()) {
      // Strongest group; the sort order of detect_multiscale breaks ties.
      const Detection* best = &dets.front();
      for (const auto& d : dets) {
        if (d.neighbors > best->neighbors) best = &d;
      }
      const Rect box = wrist_box(best->bbox, cfg.wrist, frame.width, frame.height);
      try {
        state.tracker = init_tracker(luma, box, cfg.tracker, cfg.seed + static_cast<std::uint64_t>(out.frame_index));
        state.mode = Mode::Tracking;
        state.label_history.clear();
        out.hand_bbox = box;
      } catch (const Error&) {
        state.tracker.reset();
      }
    }
    out.next_mode = state.mode;
    out.timings.total_ms = elapsed_ms(t0);
    return out;
  }

  const auto tt = Clock::now();
  const TrackResult tr = track_step(*state.tracker, luma);
  out.timings.track_ms = elapsed_ms(tt);
  out.confidence = tr.confidence;
  if (!confidence_ok(tr, cfg.confidence_threshold)) {
    state.mode = Mode::Detecting;
    state.tracker.reset();
    state.label_history.clear();
    out.next_mode = state.mode;
    out.timings.total_ms = elapsed_ms(t0);
    return out;
  }
  out.hand_bbox = tr.bbox;

  const auto ts = Clock::now();
  const int rw = static_cast<int>(std::lround(tr.bbox.w * cfg.segment_region_scale));
  const int rh = static_cast<int>(std::lround(tr.bbox.h * cfg.segment_region_scale));
  const Rect region = clamp_rect({tr.bbox.x + tr.bbox.w / 2 - rw / 2, tr.bbox.y + tr.bbox.h / 2 - rh / 2, rw, rh},
                                 frame.width, frame.height);
  const auto patch = extract_hand_patch(crop(frame, region), ctx.skin, cfg.patch);
  out.timings.segment_ms = elapsed_ms(ts);

  if (patch) {
    Rect seg = patch->component.bbox;
    seg.x += region.x;
    seg.y += region.y;
    out.segment_bbox = seg;
    const auto tc = Clock::now();
    const Prediction pred = classify(ctx.net, patch->mask);
    out.timings.classify_ms = elapsed_ms(tc);
    out.raw_label = static_cast<int>(pred.label);
    state.label_history.push_back(*out.raw_label);
    while (state.label_history.size() > static_cast<std::size_t>(cfg.smoothing_window)) state.label_history.pop_front();
    const std::vector<int> hist(state.label_history.begin(), state.label_history.end());
    out.smoothed_label = smooth_label(hist);
  }
  out.next_mode = state.mode;
  out.timings.total_ms = elapsed_ms(t0);
  return out;
}

SessionReport run_session(std::span<const Image> frames, const PipelineContext& ctx) {
  if (frames.empty()) fail(ErrorCode::EmptyInput, "session needs at least one frame");
  validate(ctx.config);
  SessionReport report;
  PipelineState state;
  std::vector<double> total, detect, track, segment, classify_ms;
  for (const auto& frame : frames) {
    report.frames.push_back(advance(state, frame, ctx));
    const auto& t = report.frames.back().timings;
    total.push_back(t.total_ms);
    if (t.detect_ms) detect.push_back(*t.detect_ms);
    if (t.track_ms) track.push_back(*t.track_ms);
    if (t.segment_ms) segment.push_back(*t.segment_ms);
    if (t.classify_ms) classify_ms.push_back(*t.classify_ms);
  }
  report.total = summarize(total);
  report.detect = summarize(detect);
  report.track = summarize(track);
  report.segment = summarize(segment);
  report.classify = summarize(classify_ms);
  return report;
}

std::vector<std::string> list_frame_files(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) fail(ErrorCode::Io, "frame directory not found: " + dir);
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && name.rfind("frame_", 0) == 0 && entry.path().extension() == ".ppm") {
      files.push_back(entry.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) fail(ErrorCode::EmptyInput, "no frame_*.ppm files in " + dir);
  return files;
}

std::vector<Image> load_frame_directory(const std::string& dir) {
  std::vector<Image> frames;
  for (const auto& f : list_frame_files(dir)) frames.push_back(read_pnm_file(f));
  return frames;
}

namespace {

nlohmann::json rect_json(const Rect& r) { return nlohmann::json::array({r.x, r.y, r.w, r.h}); }

template <typename T>
nlohmann::json opt(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json to_json(const PipelineConfig& cfg) {
  return {
      {"skin_model", cfg.skin_model_path},
      {"weights", cfg.weights_path},
      {"cascade", cfg.cascade_path},
      {"confidence_threshold", cfg.confidence_threshold},
      {"smoothing_window", cfg.smoothing_window},
      {"wrist_anchor", cfg.wrist.vertical_anchor},
      {"wrist_ratio", cfg.wrist.size_ratio},
      {"scale_factor", cfg.detect.scale_factor},
      {"step_fraction", cfg.detect.step_fraction},
      {"min_neighbors", cfg.detect.min_neighbors},
      {"open_iters", cfg.patch.open_iters},
      {"close_iters", cfg.patch.close_iters},
      {"pad_fraction", cfg.patch.pad_fraction},
      {"segment_region_scale", cfg.segment_region_scale},
      {"seed", cfg.seed},
      {"tracker",
       {{"search_radius", cfg.tracker.search_radius},
        {"pos_radius", cfg.tracker.pos_radius},
        {"neg_inner", cfg.tracker.neg_inner},
        {"neg_outer", cfg.tracker.neg_outer},
        {"neg_samples", cfg.tracker.neg_samples},
        {"num_features", cfg.tracker.num_features},
        {"num_selected", cfg.tracker.num_selected},
        {"learning_rate", cfg.tracker.learning_rate},
        {"sigma_floor", cfg.tracker.sigma_floor}}},
  };
}

nlohmann::json to_json(const LatencyStats& s) {
  return {{"count", s.count}, {"mean_ms", s.mean}, {"p50_ms", s.p50}, {"p95_ms", s.p95}, {"min_ms", s.min}, {"max_ms", s.max}};
}

nlohmann::json to_json(const SessionReport& report, const PipelineConfig& cfg, bool include_timings) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : report.frames) {
    nlohmann::json j = {
        {"frame", f.frame_index},
        {"mode", mode_name(f.mode)},
        {"next_mode", mode_name(f.next_mode)},
        {"hand_bbox", f.hand_bbox ? rect_json(*f.hand_bbox) : nlohmann::json(nullptr)},
        {"segment_bbox", f.segment_bbox ? rect_json(*f.segment_bbox) : nlohmann::json(nullptr)},
        {"raw_label", opt(f.raw_label)},
        {"smoothed_label", opt(f.smoothed_label)},
        {"confidence", opt(f.confidence)},
    };
    if (include_timings) {
      j["timings"] = {{"detect_ms", opt(f.timings.detect_ms)},
                      {"track_ms", opt(f.timings.track_ms)},
                      {"segment_ms", opt(f.timings.segment_ms)},
                      {"classify_ms", opt(f.timings.classify_ms)},
                      {"total_ms", f.timings.total_ms}};
    }
    frames.push_back(std::move(j));
  }
  nlohmann::json doc = {{"config", to_json(cfg)}, {"frames", std::move(frames)}};
  if (include_timings) {
    doc["aggregate"] = {{"total", to_json(report.total)},
                        {"detect", to_json(report.detect)},
                        {"track", to_json(report.track)},
                        {"segment", to_json(report.segment)},
                        {"classify", to_json(report.classify)}};
  }
  return doc;
}

}  // namespace hgr
