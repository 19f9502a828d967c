#include "hgr/haar_cascade.hpp"

#include <algorithm>
#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "hgr/error.hpp"

namespace hgr {

namespace pt = boost::property_tree;

namespace {

std::string where(std::size_t stage, std::size_t tree, std::size_t node) {
  return "stage " + std::to_string(stage) + " tree " + std::to_string(tree) + " node " + std::to_string(node);
}

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; }

std::string trimmed(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

// Element with only children: no text, no attributes, and every child name
// drawn from `allowed`.
void require_container(const pt::ptree& node, const std::string& name, std::initializer_list<const char*> allowed) {
  if (!blank(node.data())) fail(ErrorCode::SchemaViolation, "<" + name + "> must not contain text");
  for (const auto& [key, child] : node) {
    (void)child;
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      fail(ErrorCode::SchemaViolation, "unexpected element <" + key + "> inside <" + name + ">");
    }
  }
}

const pt::ptree& single_child(const pt::ptree& node, const std::string& parent, const char* key) {
  const auto n = node.count(key);
  if (n != 1) {
    fail(ErrorCode::SchemaViolation, "<" + parent + "> needs exactly one <" + key + ">, found " + std::to_string(n));
  }
  return node.get_child(key);
}

// Leaf element holding text only.
std::string leaf_text(const pt::ptree& node, const char* key) {
  if (!node.empty()) fail(ErrorCode::SchemaViolation, std::string("<") + key + "> must hold a value, not elements");
  return trimmed(node.data());
}

std::vector<double> parse_numbers(const std::string& text, const char* key) {
  std::vector<double> values;
  std::istringstream in(text);
  std::string token;
  while (in >> token) {
    double v = 0.0;
    const auto* end = token.data() + token.size();
    const auto res = std::from_chars(token.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end || !std::isfinite(v)) {
      fail(ErrorCode::SchemaViolation, std::string("<") + key + "> has non-numeric value '" + token + "'");
    }
    values.push_back(v);
  }
  return values;
}

double parse_scalar(const pt::ptree& node, const char* key) {
  const auto v = parse_numbers(leaf_text(node, key), key);
  if (v.size() != 1) fail(ErrorCode::SchemaViolation, std::string("<") + key + "> must hold one number");
  return v[0];
}

int as_int(double v, const char* key) {
  if (v != std::floor(v) || std::abs(v) > 1e9) fail(ErrorCode::SchemaViolation, std::string("<") + key + "> needs integers");
  return static_cast<int>(v);
}

CascadeNode parse_node(const pt::ptree& node) {
  require_container(node, "_", {"feature", "threshold", "left_val", "left_node", "right_val", "right_node"});
  CascadeNode out;
  const auto& feature = single_child(node, "node", "feature");
  require_container(feature, "feature", {"rects"});
  const auto& rects = single_child(feature, "feature", "rects");
  require_container(rects, "rects", {"_"});
  for (const auto& [key, r] : rects) {
    (void)key;
    const auto v = parse_numbers(leaf_text(r, "_"), "rects");
    if (v.size() != 5) fail(ErrorCode::SchemaViolation, "rect entry needs 'x y w h weight'");
    out.feature.push_back({as_int(v[0], "rects"), as_int(v[1], "rects"), as_int(v[2], "rects"), as_int(v[3], "rects"), v[4]});
  }
  out.threshold = parse_scalar(single_child(node, "node", "threshold"), "threshold");
  auto branch = [&](const char* val_key, const char* node_key, bool& is_leaf, double& val, int& idx) {
    const auto nv = node.count(val_key), nn = node.count(node_key);
    if (nv + nn != 1) {
      fail(ErrorCode::SchemaViolation, std::string("node needs exactly one of <") + val_key + "> or <" + node_key + ">");
    }
    is_leaf = nv == 1;
    if (is_leaf) {
      val = parse_scalar(node.get_child(val_key), val_key);
    } else {
      idx = as_int(parse_scalar(node.get_child(node_key), node_key), node_key);
    }
  };
  branch("left_val", "left_node", out.left_is_leaf, out.left_val, out.left_node);
  branch("right_val", "right_node", out.right_is_leaf, out.right_val, out.right_node);
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void validate_cascade(const CascadeModel& m) {
  if (m.window_w <= 0 || m.window_h <= 0) fail(ErrorCode::SchemaViolation, "window size must be positive");
  if (m.stages.empty()) fail(ErrorCode::SchemaViolation, "cascade has no stages");
  for (std::size_t s = 0; s < m.stages.size(); ++s) {
    const auto& stage = m.stages[s];
    if (stage.trees.empty()) fail(ErrorCode::SchemaViolation, "stage " + std::to_string(s) + " has no trees");
    for (std::size_t t = 0; t < stage.trees.size(); ++t) {
      const auto& tree = stage.trees[t];
      if (tree.nodes.empty()) fail(ErrorCode::SchemaViolation, where(s, t, 0) + ": empty tree");
      for (std::size_t n = 0; n < tree.nodes.size(); ++n) {
        const auto& node = tree.nodes[n];
        if (node.feature.size() < 2) fail(ErrorCode::SchemaViolation, where(s, t, n) + ": feature needs at least 2 rects");
        bool pos = false, neg = false;
        for (const auto& r : node.feature) {
          if (r.w <= 0 || r.h <= 0 || r.x < 0 || r.y < 0 || r.x + r.w > m.window_w || r.y + r.h > m.window_h) {
            fail(ErrorCode::RectOutOfWindow, where(s, t, n) + ": rect lies outside the " + std::to_string(m.window_w) +
                                                 "x" + std::to_string(m.window_h) + " window");
          }
          pos = pos || r.weight > 0.0;
          neg = neg || r.weight < 0.0;
        }
        if (!pos || !neg) fail(ErrorCode::SchemaViolation, where(s, t, n) + ": feature needs positive and negative weights");
        auto check_child = [&](bool leaf, int idx) {
          if (!leaf && (idx <= static_cast<int>(n) || idx >= static_cast<int>(tree.nodes.size()))) {
            fail(ErrorCode::SchemaViolation, where(s, t, n) + ": child index must point to a later node");
          }
        };
        check_child(node.left_is_leaf, node.left_node);
        check_child(node.right_is_leaf, node.right_node);
      }
    }
  }
}

CascadeModel parse_cascade(const std::string& xml) {
  if (blank(xml)) fail(ErrorCode::XmlSyntax, "empty cascade document");
  pt::ptree doc;
  try {
    std::istringstream in(xml);
    pt::read_xml(in, doc);
  } catch (const pt::xml_parser_error& e) {
    fail(ErrorCode::XmlSyntax, e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  require_container(doc, "document", {"cascade"});
  const auto& root = single_child(doc, "document", "cascade");
  require_container(root, "cascade", {"size", "stages"});

  CascadeModel model;
  const auto size = parse_numbers(leaf_text(single_child(root, "cascade", "size"), "size"), "size");
  if (size.size() != 2) fail(ErrorCode::SchemaViolation, "<size> must hold 'w h'");
  model.window_w = as_int(size[0], "size");
  model.window_h = as_int(size[1], "size");

  const auto& stages = single_child(root, "cascade", "stages");
  require_container(stages, "stages", {"_"});
  for (const auto& [skey, stage] : stages) {
    (void)skey;
    require_container(stage, "_", {"stage_threshold", "trees"});
    CascadeStage st;
    st.threshold = parse_scalar(single_child(stage, "stage", "stage_threshold"), "stage_threshold");
    const auto& trees = single_child(stage, "stage", "trees");
    require_container(trees, "trees", {"_"});
    for (const auto& [tkey, tree] : trees) {
      (void)tkey;
      require_container(tree, "_", {"_"});
      CascadeTree ct;
      for (const auto& [nkey, node] : tree) {
        (void)nkey;
        ct.nodes.push_back(parse_node(node));
      }
      st.trees.push_back(std::move(ct));
    }
    model.stages.push_back(std::move(st));
  }
  validate_cascade(model);
  return model;
}

CascadeModel load_cascade_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_cascade(ss.str());
}

std::string serialize_cascade(const CascadeModel& m) {
  std::ostringstream out;
  out << "<?xml version=\"1.0\"?>\n<cascade>\n";
  out << "  <size>" << m.window_w << ' ' << m.window_h << "</size>\n  <stages>\n";
  for (const auto& stage : m.stages) {
    out << "    <_>\n      <stage_threshold>" << fmt_double(stage.threshold) << "</stage_threshold>\n      <trees>\n";
    for (const auto& tree : stage.trees) {
      out << "        <_>\n";
      for (const auto& node : tree.nodes) {
        out << "          <_>\n            <feature>\n              <rects>\n";
        for (const auto& r : node.feature) {
          out << "                <_>" << r.x << ' ' << r.y << ' ' << r.w << ' ' << r.h << ' ' << fmt_double(r.weight)
              << "</_>\n";
        }
        out << "              </rects>\n            </feature>\n";
        out << "            <threshold>" << fmt_double(node.threshold) << "</threshold>\n";
        if (node.left_is_leaf) {
          out << "            <left_val>" << fmt_double(node.left_val) << "</left_val>\n";
        } else {
          out << "            <left_node>" << node.left_node << "</left_node>\n";
        }
        if (node.right_is_leaf) {
          out << "            <right_val>" << fmt_double(node.right_val) << "</right_val>\n";
        } else {
          out << "            <right_node>" << node.right_node << "</right_node>\n";
        }
        out << "          </_>\n";
      }
      out << "        </_>\n";
    }
    out << "      </trees>\n    </_>\n";
  }
  out << "  </stages>\n</cascade>\n";
  return out.str();
}

Rect scaled_window(const CascadeModel& model, const ScanWindow& win) {
  return {win.x, win.y, static_cast<int>(std::lround(model.window_w * win.scale)),
          static_cast<int>(std::lround(model.window_h * win.scale))};
}

Rect scaled_rect(const WeightedRect& r, const ScanWindow& win, int window_w, int window_h) {
  const Rect box{win.x, win.y, static_cast<int>(std::lround(window_w * win.scale)),
                 static_cast<int>(std::lround(window_h * win.scale))};
  const Rect raw{win.x + static_cast<int>(std::lround(r.x * win.scale)),
                 win.y + static_cast<int>(std::lround(r.y * win.scale)),
                 std::max(1, static_cast<int>(std::lround(r.w * win.scale))),
                 std::max(1, static_cast<int>(std::lround(r.h * win.scale)))};
  return intersect(raw, box);
}

double window_sigma(const IntegralTable& ii, const Rect& window) {
  const double area = static_cast<double>(window.area());
  const double mean = static_cast<double>(ii.rect_sum(window)) / area;
  const double var = static_cast<double>(ii.rect_sqsum(window.x, window.y, window.w, window.h)) / area - mean * mean;
  const double sigma = var > 0.0 ? std::sqrt(var) : 0.0;
  return sigma < 1.0 ? 1.0 : sigma;
}

double feature_value(const std::vector<WeightedRect>& feature, const IntegralTable& ii, const ScanWindow& win,
                     int window_w, int window_h, double sigma) {
  const double area = static_cast<double>(std::lround(window_w * win.scale)) * std::lround(window_h * win.scale);
  double acc = 0.0;
  for (const auto& r : feature) {
    const Rect s = scaled_rect(r, win, window_w, window_h);
    if (s.w > 0 && s.h > 0) acc += r.weight * static_cast<double>(ii.rect_sum(s));
  }
  return acc / (area * sigma);
}

double tree_output(const CascadeTree& tree, const IntegralTable& ii, const ScanWindow& win, int window_w, int window_h,
                   double sigma) {
  std::size_t idx = 0;
  while (true) {
    const auto& node = tree.nodes[idx];
    const bool left = feature_value(node.feature, ii, win, window_w, window_h, sigma) < node.threshold;
    if (left) {
      if (node.left_is_leaf) return node.left_val;
      idx = static_cast<std::size_t>(node.left_node);
    } else {
      if (node.right_is_leaf) return node.right_val;
      idx = static_cast<std::size_t>(node.right_node);
    }
  }
}

bool evaluate_window(const CascadeModel& model, const IntegralTable& ii, const ScanWindow& win) {
  const Rect w = scaled_window(model, win);
  if (w.x < 0 || w.y < 0 || w.w <= 0 || w.h <= 0 || w.right() > ii.width || w.bottom() > ii.height) {
    fail(ErrorCode::WindowOutOfFrame, "scan window leaves the frame");
  }
  const double sigma = window_sigma(ii, w);
  for (const auto& stage : model.stages) {
    double sum = 0.0;
    for (const auto& tree : stage.trees) sum += tree_output(tree, ii, win, model.window_w, model.window_h, sigma);
    if (!(sum >= stage.threshold)) return false;
  }
  return true;
}

namespace {

struct DisjointSet {
  std::vector<std::size_t> parent;
  explicit DisjointSet(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

bool mutual_overlap(const Rect& a, const Rect& b) {
  const Rect i = intersect(a, b);
  const long long inter = i.area();
  return 2 * inter >= a.area() && 2 * inter >= b.area();
}

auto rect_key(const Rect& r) { return std::tuple(r.x, r.y, r.w, r.h); }

}  // namespace

std::vector<Detection> group_detections(const std::vector<Rect>& hits_in, int min_neighbors) {
  std::vector<Rect> hits = hits_in;
  std::sort(hits.begin(), hits.end(), [](const Rect& a, const Rect& b) { return rect_key(a) < rect_key(b); });
  DisjointSet sets(hits.size());
  for (std::size_t i = 0; i < hits.size(); ++i) {
    for (std::size_t j = i + 1; j < hits.size() && hits[j].x < hits[i].right(); ++j) {
      if (mutual_overlap(hits[i], hits[j])) sets.unite(i, j);
    }
  }
  struct Acc {
    long long x = 0, y = 0, w = 0, h = 0;
    int n = 0;
  };
  std::vector<Acc> acc(hits.size());
  for (std::size_t i = 0; i < hits.size(); ++i) {
    auto& a = acc[sets.find(i)];
    a.x += hits[i].x;
    a.y += hits[i].y;
    a.w += hits[i].w;
    a.h += hits[i].h;
    ++a.n;
  }
  std::vector<Detection> out;
  for (const auto& a : acc) {
    if (a.n == 0 || a.n < min_neighbors) continue;
    auto avg = [&](long long s) { return static_cast<int>(std::lround(static_cast<double>(s) / a.n)); };
    out.push_back({{avg(a.x), avg(a.y), avg(a.w), avg(a.h)}, a.n});
  }
  std::sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) {
    return std::tuple(a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h, a.neighbors) <
           std::tuple(b.bbox.x, b.bbox.y, b.bbox.w, b.bbox.h, b.neighbors);
  });
  return out;
}

std::vector<Rect> scan_windows(const CascadeModel& model, const Image& gray, const DetectParams& params) {
  if (gray.channels != 1) fail(ErrorCode::WrongChannelCount, "detect_multiscale needs a grayscale image");
  if (!(params.scale_factor >= 1.05)) fail(ErrorCode::InvalidArgument, "scale_factor must be >= 1.05");
  if (!(params.step_fraction > 0.0)) fail(ErrorCode::InvalidArgument, "step_fraction must be positive");
  if (gray.width < model.window_w || gray.height < model.window_h) {
    fail(ErrorCode::ImageTooSmall, "image is smaller than the " + std::to_string(model.window_w) + "x" +
                                       std::to_string(model.window_h) + " detection window");
  }
  const IntegralTable ii = integral_image(gray);
  std::vector<Rect> hits;
  for (double scale = 1.0;; scale *= params.scale_factor) {
    const Rect base = scaled_window(model, {0, 0, scale});
    if (base.w > gray.width || base.h > gray.height) break;
    const int stride = std::max(1, static_cast<int>(std::lround(params.step_fraction * scale)));
    for (int y = 0; y + base.h <= gray.height; y += stride) {
      for (int x = 0; x + base.w <= gray.width; x += stride) {
        if (evaluate_window(model, ii, {x, y, scale})) hits.push_back({x, y, base.w, base.h});
      }
    }
  }
  return hits;
}

std::vector<Detection> detect_multiscale(const CascadeModel& model, const Image& gray, const DetectParams& params) {
  return group_detections(scan_windows(model, gray, params), std::max(1, params.min_neighbors));
}

}  // namespace hgr
