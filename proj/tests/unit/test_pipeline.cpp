#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "hgr/error.hpp"
#include "hgr/pipeline.hpp"
#include "oracles.hpp"
#include "scenes.hpp"

using namespace hgr;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an hgr::Error");
  return ErrorCode::Io;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const char* tag) {
    path = std::filesystem::temp_directory_path() / (std::string("hgr_pipe_") + tag + "_" + std::to_string(getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

PipelineContext session_context() {
  PipelineContext ctx;
  ctx.skin = scene::scene_skin_model();
  ctx.net = zero_network();
  ctx.cascade = scene::session_cascade();
  return ctx;
}

// Cascade whose single stage can never be reached.
CascadeModel reject_all() {
  CascadeModel m = scene::session_cascade();
  m.stages.resize(1);
  m.stages[0].threshold = 1e9;
  return m;
}

const scene::Session& session() {
  static const scene::Session s = scene::pipeline_session();
  return s;
}

const SessionReport& session_report() {
  static const SessionReport r = [] {
    const auto ctx = session_context();
    return run_session(session().frames, ctx);
  }();
  return r;
}

}  // namespace

TEST_CASE("smooth_label majority with recency tie-break") {
  const auto sl = [](std::vector<int> v) { return smooth_label(v); };
  CHECK(sl({3}) == 3);
  CHECK(sl({1, 1, 2}) == 1);
  CHECK(sl({1, 2, 1, 2}) == 2);
  CHECK(sl({2, 1, 2, 1}) == 1);
  CHECK(sl({5, 5, 7, 7, 9}) == 7);
  CHECK(code_of([&] { sl({}); }) == ErrorCode::EmptyHistory);
}

TEST_CASE("smooth_label returns a label of maximal count") {
  SplitMix64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> h(1 + rng.below(9));
    for (auto& l : h) l = static_cast<int>(rng.below(4));
    const int s = smooth_label(h);
    const auto cnt = [&](int l) { return std::count(h.begin(), h.end(), l); };
    int best = 0;
    for (int l = 0; l < 4; ++l) best = std::max<int>(best, static_cast<int>(cnt(l)));
    CHECK(cnt(s) == best);
    // No label with the same count appears later than the chosen one.
    const auto last_s = std::find(h.rbegin(), h.rend(), s);
    for (auto it = h.rbegin(); it != last_s; ++it) CHECK(cnt(*it) < best);
  }
}

TEST_CASE("wrist_box geometry") {
  const WristBoxRule rule;
  SUBCASE("square, bottom anchored, centred") {
    const Rect r = wrist_box({10, 20, 50, 50}, rule, 200, 200);
    CHECK(r == Rect{20, 40, 30, 30});
  }
  SUBCASE("uses the shorter side") {
    const Rect r = wrist_box({0, 0, 100, 40}, rule, 200, 200);
    CHECK(r.w == 24);
    CHECK(r.h == 24);
    CHECK(r.y + r.h == 40);
    CHECK(r.x == 38);
  }
  SUBCASE("anchor 0.5 puts the bottom edge at mid-height") {
    const Rect r = wrist_box({0, 0, 60, 60}, {0.5, 0.5}, 200, 200);
    CHECK(r == Rect{15, 0, 30, 30});
  }
  SUBCASE("clamped into the frame") {
    const Rect r = wrist_box({150, 150, 60, 60}, rule, 160, 160);
    CHECK(r.x + r.w <= 160);
    CHECK(r.y + r.h <= 160);
    CHECK(r.x >= 0);
    CHECK(r.y >= 0);
    CHECK(r.w == 36);
  }
}

TEST_CASE("pipeline config parsing") {
  const auto cfg = parse_pipeline_config(
      "# comment\n"
      "skin_model = s.txt\nweights=w.bin\ncascade=c.xml\n"
      "confidence_threshold=-2.5\nsmoothing_window=3\nwrist_ratio=0.5\n"
      "min_neighbors=2\nseed=7\ntracker.search_radius=12\n");
  CHECK(cfg.skin_model_path == "s.txt");
  CHECK(cfg.weights_path == "w.bin");
  CHECK(cfg.cascade_path == "c.xml");
  CHECK(cfg.confidence_threshold == -2.5);
  CHECK(cfg.smoothing_window == 3);
  CHECK(cfg.wrist.size_ratio == 0.5);
  CHECK(cfg.detect.min_neighbors == 2);
  CHECK(cfg.seed == 7);
  CHECK(cfg.tracker.search_radius == 12);

  const PipelineConfig def;
  CHECK(def.confidence_threshold == kDefaultConfidenceThreshold);
  CHECK(def.smoothing_window == 5);

  for (const char* bad : {"nonsense", "unknown_key=1", "smoothing_window=0", "smoothing_window=2.5",
                          "confidence_threshold=abc", "tracker.search_radius=-1", "tracker.bogus=3",
                          "segment_region_scale=0.5", "wrist_ratio=0"}) {
    CAPTURE(bad);
    CHECK(code_of([&] { parse_pipeline_config(bad); }) == ErrorCode::ConfigLoadError);
  }
}

TEST_CASE("load_pipeline reports every missing or corrupt model as ConfigLoadError") {
  TempDir dir("load");
  PipelineConfig cfg;
  cfg.skin_model_path = dir.file("skin.txt");
  cfg.weights_path = dir.file("w.bin");
  cfg.cascade_path = dir.file("c.xml");
  CHECK(code_of([&] { load_pipeline(cfg); }) == ErrorCode::ConfigLoadError);

  write_text(cfg.skin_model_path, serialize_skin_model(scene::scene_skin_model()));
  save_weights_file(cfg.weights_path, zero_network());
  write_text(cfg.cascade_path, serialize_cascade(scene::session_cascade()));
  const auto ctx = load_pipeline(cfg);
  CHECK(ctx.cascade.stages.size() == 4);

  write_text(cfg.weights_path, "HGNW garbage");
  CHECK(code_of([&] { load_pipeline(cfg); }) == ErrorCode::ConfigLoadError);
  save_weights_file(cfg.weights_path, zero_network());
  write_text(cfg.cascade_path, "<opencv_storage>");
  CHECK(code_of([&] { load_pipeline(cfg); }) == ErrorCode::ConfigLoadError);
}

TEST_CASE("first frame with a cascade that rejects everything stays DETECTING") {
  auto ctx = session_context();
  ctx.cascade = reject_all();
  PipelineState st;
  const auto out = advance(st, session().frames[0], ctx);
  CHECK(out.mode == Mode::Detecting);
  CHECK(out.next_mode == Mode::Detecting);
  CHECK(out.timings.detect_ms.has_value());
  CHECK_FALSE(out.timings.track_ms.has_value());
  CHECK_FALSE(out.hand_bbox.has_value());
  CHECK_FALSE(out.raw_label.has_value());
  CHECK_FALSE(out.smoothed_label.has_value());
  CHECK_FALSE(st.tracker.has_value());
}

TEST_CASE("low confidence sends the pipeline back to DETECTING and clears the tracker") {
  auto ctx = session_context();
  PipelineState st;
  const auto& frames = session().frames;
  const auto first = advance(st, frames[0], ctx);
  REQUIRE(first.next_mode == Mode::Tracking);
  REQUIRE(st.tracker.has_value());
  ctx.config.confidence_threshold = 1e9;
  const auto second = advance(st, frames[1], ctx);
  CHECK(second.mode == Mode::Tracking);
  CHECK(second.next_mode == Mode::Detecting);
  CHECK(second.confidence.has_value());
  CHECK_FALSE(second.raw_label.has_value());
  CHECK_FALSE(st.tracker.has_value());
  CHECK(st.label_history.empty());
}

TEST_CASE("threshold equal to the confidence keeps tracking") {
  auto ctx = session_context();
  PipelineState probe;
  advance(probe, session().frames[0], ctx);
  PipelineState st = probe;
  const auto peek = advance(probe, session().frames[1], ctx);
  REQUIRE(peek.confidence.has_value());
  ctx.config.confidence_threshold = *peek.confidence;
  const auto out = advance(st, session().frames[1], ctx);
  CHECK(out.next_mode == Mode::Tracking);
}

TEST_CASE("one-frame session yields exactly one output") {
  const auto ctx = session_context();
  const std::vector<Image> one{session().frames[0]};
  const auto rep = run_session(one, ctx);
  REQUIRE(rep.frames.size() == 1);
  CHECK(rep.frames[0].frame_index == 0);
  CHECK(rep.total.count == 1);
  CHECK(code_of([&] { run_session(std::span<const Image>{}, ctx); }) == ErrorCode::EmptyInput);
}

TEST_CASE("session: modes follow the state graph and labels only appear while tracking") {
  const auto& rep = session_report();
  REQUIRE(rep.frames.size() == static_cast<std::size_t>(scene::kSessionFrames));
  Mode prev_next = Mode::Detecting;
  for (std::size_t i = 0; i < rep.frames.size(); ++i) {
    const auto& f = rep.frames[i];
    CAPTURE(i);
    CHECK(f.frame_index == static_cast<int>(i));
    CHECK(f.mode == prev_next);
    prev_next = f.next_mode;
    if (f.mode == Mode::Detecting) {
      CHECK(f.timings.detect_ms.has_value());
      CHECK_FALSE(f.timings.track_ms.has_value());
      CHECK_FALSE(f.raw_label.has_value());
      CHECK_FALSE(f.confidence.has_value());
    } else {
      CHECK_FALSE(f.timings.detect_ms.has_value());
      CHECK(f.timings.track_ms.has_value());
      CHECK(f.confidence.has_value());
    }
    if (f.raw_label) {
      CHECK(f.mode == Mode::Tracking);
      CHECK(f.next_mode == Mode::Tracking);
      CHECK(f.smoothed_label.has_value());
      CHECK(f.timings.classify_ms.has_value());
    }
    CHECK(f.timings.total_ms >= 0.0);
  }
}

TEST_CASE("session: the hand is acquired, lost while hidden, and reacquired") {
  const auto& rep = session_report();
  const auto& s = session();
  CHECK(rep.frames[0].next_mode == Mode::Tracking);
  int tracked_visible = 0, visible = 0;
  bool lost_while_hidden = false, reacquired = false;
  for (std::size_t i = 0; i < rep.frames.size(); ++i) {
    const auto& f = rep.frames[i];
    if (s.visible[i]) ++visible;
    if (s.visible[i] && f.raw_label) ++tracked_visible;
    if (!s.visible[i] && f.next_mode == Mode::Detecting) lost_while_hidden = true;
    if (static_cast<int>(i) >= scene::kSessionHideTo && f.mode == Mode::Detecting && f.next_mode == Mode::Tracking)
      reacquired = true;
    // No labels once the hand has been gone for several frames.
    if (static_cast<int>(i) >= scene::kSessionHideFrom + 5 && !s.visible[i]) CHECK_FALSE(f.raw_label.has_value());
  }
  CHECK(lost_while_hidden);
  CHECK(reacquired);
  CHECK(tracked_visible >= visible - 6);
}

TEST_CASE("session: zero network labels are 0 and the segmented box follows the square") {
  const auto& rep = session_report();
  const auto& s = session();
  int labelled = 0;
  for (std::size_t i = 0; i < rep.frames.size(); ++i) {
    const auto& f = rep.frames[i];
    if (!f.raw_label) continue;
    CAPTURE(i);
    ++labelled;
    CHECK(*f.raw_label == 0);
    CHECK(*f.smoothed_label == 0);
    REQUIRE(s.visible[i]);
    REQUIRE(f.segment_bbox.has_value());
    const Rect& g = *f.segment_bbox;
    const Rect& t = s.hand[i];
    CHECK(std::abs(g.x - t.x) <= 5);
    CHECK(std::abs(g.y - t.y) <= 5);
    CHECK(std::abs(g.x + g.w - t.x - t.w) <= 5);
    CHECK(std::abs(g.y + g.h - t.y - t.h) <= 5);
    // The tracked box stays on the hand.
    REQUIRE(f.hand_bbox.has_value());
    CHECK(oracle::iou(*f.hand_bbox, t) > 0.0);
  }
  CHECK(labelled >= 20);
}

TEST_CASE("hysteresis: alternating raw labels give a stable smoothed label") {
  std::deque<int> hist;
  std::vector<int> smoothed;
  for (int i = 0; i < 20; ++i) {
    hist.push_back(i % 3 == 2 ? 4 : 1);  // 1 1 4 1 1 4 ...
    while (hist.size() > 5) hist.pop_front();
    const std::vector<int> h(hist.begin(), hist.end());
    smoothed.push_back(smooth_label(h));
  }
  for (std::size_t i = 2; i < smoothed.size(); ++i) CHECK(smoothed[i] == 1);
}

TEST_CASE("timing-free report is deterministic") {
  const auto ctx = session_context();
  const std::vector<Image> frames(session().frames.begin(), session().frames.begin() + 12);
  const auto a = to_json(run_session(frames, ctx), ctx.config, false).dump();
  const auto b = to_json(run_session(frames, ctx), ctx.config, false).dump();
  CHECK(a == b);
  CHECK(a.find("_ms") == std::string::npos);
  const auto full = to_json(run_session(frames, ctx), ctx.config, true);
  CHECK(full.contains("aggregate"));
  CHECK(full["frames"][0]["timings"].contains("total_ms"));
  CHECK(full["frames"][0]["mode"] == "DETECTING");
}

TEST_CASE("frame size change drops back to detection") {
  const auto ctx = session_context();
  PipelineState st;
  advance(st, session().frames[0], ctx);
  REQUIRE(st.mode == Mode::Tracking);
  const Image small(80, 60, 3);
  const auto out = advance(st, small, ctx);
  CHECK(out.next_mode == Mode::Detecting);
  CHECK_FALSE(st.tracker.has_value());
  CHECK(code_of([&] { advance(st, Image(160, 120, 1), ctx); }) == ErrorCode::WrongChannelCount);
}

TEST_CASE("frame directory loading") {
  TempDir dir("frames");
  CHECK(code_of([&] { list_frame_files(dir.file("missing")); }) == ErrorCode::Io);
  CHECK(code_of([&] { list_frame_files(dir.path.string()); }) == ErrorCode::EmptyInput);
  for (int i : {2, 0, 1}) {
    Image img(8, 6, 3);
    img.at(0, 0, 0) = static_cast<std::uint8_t>(i);
    write_pnm_file(dir.file("frame_" + std::to_string(i) + ".ppm"), img);
  }
  write_text(dir.file("other.ppm"), "junk");
  write_text(dir.file("frame_9.txt"), "junk");
  const auto files = list_frame_files(dir.path.string());
  REQUIRE(files.size() == 3);
  CHECK(std::is_sorted(files.begin(), files.end()));
  const auto frames = load_frame_directory(dir.path.string());
  for (int i = 0; i < 3; ++i) CHECK(frames[i].at(0, 0, 0) == i);
}

TEST_CASE("stage timings add up within the frame total") {
  const auto& rep = session_report();
  double total = 0.0, parts = 0.0;
  int n = 0;
  for (const auto& f : rep.frames) {
    if (!f.raw_label) continue;
    const double p = *f.timings.track_ms + *f.timings.segment_ms + *f.timings.classify_ms;
    CHECK(f.timings.total_ms + 0.01 >= p);
    total += f.timings.total_ms;
    parts += *f.timings.segment_ms + *f.timings.classify_ms;
    ++n;
  }
  REQUIRE(n > 0);
  CHECK(total / n + 0.01 >= parts / n);
  CHECK(rep.classify.count == static_cast<std::size_t>(n));
}
