#include "hgr/mil_tracker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "hgr/error.hpp"

namespace hgr {

double HaarFeature::evaluate(const IntegralTable& ii, int patch_x, int patch_y, double inv_area) const {
  double acc = 0.0;
  for (const auto& r : rects) {
    acc += r.weight * static_cast<double>(ii.rect_sum(patch_x + r.x, patch_y + r.y, r.w, r.h));
  }
  return acc * inv_area;
}

void validate(const TrackerParams& p) {
  if (p.search_radius < 1) fail(ErrorCode::InvalidArgument, "search_radius must be >= 1");
  if (p.pos_radius < 0) fail(ErrorCode::InvalidArgument, "pos_radius must be >= 0");
  if (!(p.neg_inner >= 0.0 && p.neg_outer > p.neg_inner)) fail(ErrorCode::InvalidArgument, "need 0 <= neg_inner < neg_outer");
  if (p.neg_samples < 1) fail(ErrorCode::InvalidArgument, "neg_samples must be >= 1");
  if (p.num_features < 1) fail(ErrorCode::InvalidArgument, "num_features must be >= 1");
  if (p.num_selected < 1 || p.num_selected > p.num_features) {
    fail(ErrorCode::InvalidArgument, "num_selected must be in [1, num_features]");
  }
  if (!(p.learning_rate > 0.0 && p.learning_rate < 1.0)) fail(ErrorCode::InvalidArgument, "learning_rate must be in (0,1)");
  if (!(p.sigma_floor > 0.0)) fail(ErrorCode::InvalidArgument, "sigma_floor must be positive");
}

TrackerParams parse_tracker_config(const std::string& text, TrackerParams p) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorCode::InvalidArgument, "tracker config line " + std::to_string(line_no) + ": expected key=value");
    auto strip = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != value.size()) fail(ErrorCode::InvalidArgument, "tracker config: bad value for " + key);
    auto as_int = [&] {
      if (v != std::floor(v)) fail(ErrorCode::InvalidArgument, "tracker config: " + key + " must be an integer");
      return static_cast<int>(v);
    };
    if (key == "search_radius") p.search_radius = as_int();
    else if (key == "pos_radius") p.pos_radius = as_int();
    else if (key == "neg_inner") p.neg_inner = v;
    else if (key == "neg_outer") p.neg_outer = v;
    else if (key == "neg_samples") p.neg_samples = as_int();
    else if (key == "num_features") p.num_features = as_int();
    else if (key == "num_selected") p.num_selected = as_int();
    else if (key == "learning_rate") p.learning_rate = v;
    else if (key == "sigma_floor") p.sigma_floor = v;
    else fail(ErrorCode::InvalidArgument, "tracker config: unknown key '" + key + "'");
  }
  validate(p);
  return p;
}

std::string serialize_tracker_config(const TrackerParams& p) {
  std::ostringstream out;
  out.precision(17);
  out << "search_radius=" << p.search_radius << "\npos_radius=" << p.pos_radius << "\nneg_inner=" << p.neg_inner
      << "\nneg_outer=" << p.neg_outer << "\nneg_samples=" << p.neg_samples << "\nnum_features=" << p.num_features
      << "\nnum_selected=" << p.num_selected << "\nlearning_rate=" << p.learning_rate
      << "\nsigma_floor=" << p.sigma_floor << "\n";
  return out.str();
}

double gaussian_log_density(double f, double mu, double sigma) {
  const double z = (f - mu) / sigma;
  return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
}

double WeakClassifier::llr(double f) const {
  return gaussian_log_density(f, mu_pos, sigma_pos) - gaussian_log_density(f, mu_neg, sigma_neg);
}

namespace {

void update_gaussian(double& mu, double& sigma, std::span<const double> xs, bool first, double gamma, double floor) {
  if (xs.empty()) return;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (first) {
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());
    mu = mean;
    sigma = std::sqrt(var);
  } else {
    mu = gamma * mu + (1.0 - gamma) * mean;
    double var = 0.0;
    for (double x : xs) var += (x - mu) * (x - mu);
    var /= static_cast<double>(xs.size());
    sigma = std::sqrt(gamma * sigma * sigma + (1.0 - gamma) * var);
  }
  if (!(sigma >= floor)) sigma = floor;
}

// log(sigmoid(z)), stable for any z.
double log_sigmoid(double z) { return -(std::max(-z, 0.0) + std::log1p(std::exp(-std::abs(z)))); }

}  // namespace

void WeakClassifier::update(std::span<const double> pos, std::span<const double> neg, double gamma, double sigma_floor) {
  update_gaussian(mu_pos, sigma_pos, pos, !trained, gamma, sigma_floor);
  update_gaussian(mu_neg, sigma_neg, neg, !trained, gamma, sigma_floor);
  trained = true;
}

double noisy_or(std::span<const double> probs) {
  double keep = 1.0;
  for (double p : probs) keep *= 1.0 - p;
  return 1.0 - keep;
}

double bag_log_likelihood(std::span<const double> pos_scores, std::span<const double> neg_scores) {
  double ll = 0.0;
  if (!pos_scores.empty()) {
    // log(1 - prod(1 - sigmoid(z))) = log(-expm1(sum log sigmoid(-z)))
    double s = 0.0;
    for (double z : pos_scores) s += log_sigmoid(-z);
    if (s < -1e-12) {
      ll += std::log(-std::expm1(s));
    } else {
      // Every instance probability is tiny: 1 - prod(1 - p) ~ sum p.
      const double m = *std::max_element(pos_scores.begin(), pos_scores.end());
      double acc = 0.0;
      for (double z : pos_scores) acc += std::exp(z - m);
      ll += m + std::log(acc);
    }
  }
  for (double z : neg_scores) ll += log_sigmoid(-z);
  return ll;
}

std::vector<HaarFeature> generate_features(int patch_w, int patch_h, int count, SplitMix64& rng) {
  std::vector<HaarFeature> features(static_cast<std::size_t>(count));
  for (auto& f : features) {
    const int n = rng.range(2, 4);
    for (int k = 0; k < n; ++k) {
      WeightedRect r;
      r.x = rng.range(0, patch_w - 1);
      r.y = rng.range(0, patch_h - 1);
      r.w = rng.range(1, patch_w - r.x);
      r.h = rng.range(1, patch_h - r.y);
      r.weight = rng.uniform(-1.0, 1.0);
      f.rects.push_back(r);
    }
  }
  return features;
}

namespace {

struct Offset {
  int dx, dy;
};

bool patch_fits(const TrackerState& s, int x, int y) {
  return x >= 0 && y >= 0 && x + s.bbox.w <= s.frame_w && y + s.bbox.h <= s.frame_h;
}

std::vector<Offset> disk_offsets(int radius) {
  std::vector<Offset> out;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx * dx + dy * dy <= radius * radius) out.push_back({dx, dy});
    }
  }
  return out;
}

std::vector<double> feature_row(const TrackerState& s, const IntegralTable& ii, std::size_t m,
                                const std::vector<Offset>& locs) {
  const double inv_area = 1.0 / static_cast<double>(s.bbox.area());
  std::vector<double> out;
  out.reserve(locs.size());
  for (const auto& o : locs) out.push_back(s.features[m].evaluate(ii, s.bbox.x + o.dx, s.bbox.y + o.dy, inv_area));
  return out;
}

}  // namespace

void mil_update(TrackerState& s, const IntegralTable& ii) {
  const auto& p = s.params;
  std::vector<Offset> pos;
  for (const auto& o : disk_offsets(p.pos_radius)) {
    if (patch_fits(s, s.bbox.x + o.dx, s.bbox.y + o.dy)) pos.push_back(o);
  }
  std::vector<Offset> annulus;
  const int outer = static_cast<int>(std::ceil(p.neg_outer));
  const double in2 = p.neg_inner * p.neg_inner, out2 = p.neg_outer * p.neg_outer;
  for (int dy = -outer; dy <= outer; ++dy) {
    for (int dx = -outer; dx <= outer; ++dx) {
      const double d2 = static_cast<double>(dx * dx + dy * dy);
      if (d2 > in2 && d2 <= out2 && patch_fits(s, s.bbox.x + dx, s.bbox.y + dy)) annulus.push_back({dx, dy});
    }
  }
  const std::size_t n_neg = std::min<std::size_t>(annulus.size(), static_cast<std::size_t>(p.neg_samples));
  for (std::size_t i = 0; i < n_neg; ++i) {
    std::swap(annulus[i], annulus[i + s.rng.below(annulus.size() - i)]);
  }
  annulus.resize(n_neg);

  const std::size_t M = s.features.size();
  std::vector<std::vector<double>> h_pos(M), h_neg(M);
  for (std::size_t m = 0; m < M; ++m) {
    const auto fp = feature_row(s, ii, m, pos);
    const auto fn = feature_row(s, ii, m, annulus);
    s.weak[m].update(fp, fn, p.learning_rate, p.sigma_floor);
    h_pos[m].resize(fp.size());
    h_neg[m].resize(fn.size());
    for (std::size_t i = 0; i < fp.size(); ++i) h_pos[m][i] = s.weak[m].llr(fp[i]);
    for (std::size_t i = 0; i < fn.size(); ++i) h_neg[m][i] = s.weak[m].llr(fn[i]);
  }

  // Greedy MILBoost selection.
  const std::size_t K = static_cast<std::size_t>(p.num_selected);
  std::vector<double> H_pos(pos.size(), 0.0), H_neg(annulus.size(), 0.0);
  std::vector<double> cand_pos(pos.size()), cand_neg(annulus.size());
  std::vector<bool> used(M, false);
  s.selected.clear();
  s.selection_loglik.clear();
  for (std::size_t k = 0; k < K; ++k) {
    std::size_t best = M;
    double best_ll = -std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < M; ++m) {
      if (used[m]) continue;
      for (std::size_t i = 0; i < H_pos.size(); ++i) cand_pos[i] = H_pos[i] + h_pos[m][i];
      for (std::size_t i = 0; i < H_neg.size(); ++i) cand_neg[i] = H_neg[i] + h_neg[m][i];
      const double ll = bag_log_likelihood(cand_pos, cand_neg);
      if (best == M || ll > best_ll) {
        best = m;
        best_ll = ll;
      }
    }
    used[best] = true;
    s.selected.push_back(best);
    s.selection_loglik.push_back(best_ll);
    for (std::size_t i = 0; i < H_pos.size(); ++i) H_pos[i] += h_pos[best][i];
    for (std::size_t i = 0; i < H_neg.size(); ++i) H_neg[i] += h_neg[best][i];
  }
}

TrackerState init_tracker(const Image& gray, const Rect& bbox, const TrackerParams& params, std::uint64_t seed) {
  if (gray.channels != 1) fail(ErrorCode::WrongChannelCount, "tracker needs a grayscale frame");
  validate(params);
  if (bbox.x < 0 || bbox.y < 0 || bbox.w <= 0 || bbox.h <= 0 || bbox.right() > gray.width || bbox.bottom() > gray.height) {
    fail(ErrorCode::BoxOutOfFrame, "initial box lies outside the frame");
  }
  if (bbox.area() < 16 || bbox.w < 2 || bbox.h < 2) fail(ErrorCode::DegenerateBox, "initial box needs at least 16 pixels");
  TrackerState s;
  s.bbox = bbox;
  s.frame_w = gray.width;
  s.frame_h = gray.height;
  s.params = params;
  s.rng = SplitMix64(seed);
  s.features = generate_features(bbox.w, bbox.h, params.num_features, s.rng);
  s.weak.assign(s.features.size(), WeakClassifier{});
  mil_update(s, integral_image(gray));
  return s;
}

double mil_score(const TrackerState& s, const IntegralTable& ii, int x, int y) {
  if (!patch_fits(s, x, y) || ii.width != s.frame_w || ii.height != s.frame_h) {
    fail(ErrorCode::PatchOutOfFrame, "score patch lies outside the frame");
  }
  const double inv_area = 1.0 / static_cast<double>(s.bbox.area());
  double score = 0.0;
  for (std::size_t m : s.selected) score += s.weak[m].llr(s.features[m].evaluate(ii, x, y, inv_area));
  return score;
}

double mil_score(const TrackerState& s, const Image& gray, int x, int y) { return mil_score(s, integral_image(gray), x, y); }

TrackResult track_step(TrackerState& s, const Image& gray) {
  if (gray.channels != 1 || gray.width != s.frame_w || gray.height != s.frame_h) {
    fail(ErrorCode::InvalidArgument, "frame size differs from the tracker's initial frame");
  }
  const IntegralTable ii = integral_image(gray);
  // Ties prefer the smallest displacement, then the smallest (dy, dx).
  const auto offsets = [&] {
    auto o = disk_offsets(s.params.search_radius);
    std::stable_sort(o.begin(), o.end(), [](const Offset& a, const Offset& b) {
      return a.dx * a.dx + a.dy * a.dy < b.dx * b.dx + b.dy * b.dy;
    });
    return o;
  }();
  double best_score = -std::numeric_limits<double>::infinity();
  Offset best{0, 0};
  bool found = false;
  for (const auto& o : offsets) {
    const int x = s.bbox.x + o.dx, y = s.bbox.y + o.dy;
    if (!patch_fits(s, x, y)) continue;
    const double score = mil_score(s, ii, x, y);
    if (!found || score > best_score) {
      best_score = score;
      best = o;
      found = true;
    }
  }
  s.bbox.x += best.dx;
  s.bbox.y += best.dy;
  mil_update(s, ii);
  return {s.bbox, best_score / static_cast<double>(s.selected.size())};
}

}  // namespace hgr
