#pragma once

#include <string>
#include <vector>

#include "hgr/imaging.hpp"

namespace hgr {

struct WeightedRect {
  int x = 0, y = 0, w = 0, h = 0;
  double weight = 0.0;
  bool operator==(const WeightedRect&) const = default;
};

/// Decision node: feature value < threshold goes left, otherwise right.
/// A branch is either a leaf value or the index of a later node in the tree.
struct CascadeNode {
  std::vector<WeightedRect> feature;
  double threshold = 0.0;
  bool left_is_leaf = true;
  double left_val = 0.0;
  int left_node = -1;
  bool right_is_leaf = true;
  double right_val = 0.0;
  int right_node = -1;
  bool operator==(const CascadeNode&) const = default;
};

struct CascadeTree {
  std::vector<CascadeNode> nodes;  // nodes[0] is the root
  bool operator==(const CascadeTree&) const = default;
};

struct CascadeStage {
  double threshold = 0.0;
  std::vector<CascadeTree> trees;
  bool operator==(const CascadeStage&) const = default;
};

struct CascadeModel {
  int window_w = 0;
  int window_h = 0;
  std::vector<CascadeStage> stages;
  bool operator==(const CascadeModel&) const = default;
};

/// Structural checks shared by the parser and programmatic construction.
void validate_cascade(const CascadeModel& model);

CascadeModel parse_cascade(const std::string& xml);
CascadeModel load_cascade_file(const std::string& path);
std::string serialize_cascade(const CascadeModel& model);

struct ScanWindow {
  int x = 0;
  int y = 0;
  double scale = 1.0;
};

/// Rect of a base-window rectangle after scaling, in frame coordinates,
/// clipped to the scaled window.
Rect scaled_rect(const WeightedRect& r, const ScanWindow& win, int window_w, int window_h);
Rect scaled_window(const CascadeModel& model, const ScanWindow& win);

/// Windowed standard deviation, clamped below at 1.
double window_sigma(const IntegralTable& ii, const Rect& window);
double feature_value(const std::vector<WeightedRect>& feature, const IntegralTable& ii, const ScanWindow& win,
                     int window_w, int window_h, double sigma);
double tree_output(const CascadeTree& tree, const IntegralTable& ii, const ScanWindow& win, int window_w, int window_h,
                   double sigma);

bool evaluate_window(const CascadeModel& model, const IntegralTable& ii, const ScanWindow& win);

struct Detection {
  Rect bbox;
  int neighbors = 0;
  bool operator==(const Detection&) const = default;
};

struct DetectParams {
  double scale_factor = 1.1;
  double step_fraction = 2.0;  // stride = max(1, round(step_fraction * scale))
  int min_neighbors = 3;
};

/// Unions hits whose intersection covers at least half of each box, drops
/// groups smaller than min_neighbors and returns averaged boxes sorted by
/// (x, y, w, h). The result does not depend on the order of `hits`.
std::vector<Detection> group_detections(const std::vector<Rect>& hits, int min_neighbors);

std::vector<Rect> scan_windows(const CascadeModel& model, const Image& gray, const DetectParams& params);
std::vector<Detection> detect_multiscale(const CascadeModel& model, const Image& gray, const DetectParams& params = {});

}  // namespace hgr
