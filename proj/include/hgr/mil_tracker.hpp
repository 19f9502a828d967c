#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hgr/haar_cascade.hpp"
#include "hgr/imaging.hpp"
#include "hgr/rng.hpp"

namespace hgr {

/// Weighted rectangle sum over a patch, normalized by patch area.
struct HaarFeature {
  std::vector<WeightedRect> rects;  // relative to the patch origin, weights in [-1, 1]

  double evaluate(const IntegralTable& ii, int patch_x, int patch_y, double inv_area) const;
  bool operator==(const HaarFeature&) const = default;
};

struct TrackerParams {
  int search_radius = 25;
  int pos_radius = 2;
  double neg_inner = 4.0;   // 2 * pos_radius
  double neg_outer = 37.5;  // 1.5 * search_radius
  int neg_samples = 65;
  int num_features = 250;   // M
  int num_selected = 50;    // K
  double learning_rate = 0.85;  // gamma: weight kept by the running Gaussians
  double sigma_floor = 1e-3;

  bool operator==(const TrackerParams&) const = default;
};

void validate(const TrackerParams& p);
/// Flat `key=value` lines; unknown keys are rejected. '#' starts a comment.
TrackerParams parse_tracker_config(const std::string& text, TrackerParams base = {});
std::string serialize_tracker_config(const TrackerParams& p);

/// Online Gaussian stump: log-likelihood ratio of a feature value under
/// running positive and negative Gaussians.
struct WeakClassifier {
  double mu_pos = 0.0, sigma_pos = 1.0;
  double mu_neg = 0.0, sigma_neg = 1.0;
  bool trained = false;

  double llr(double f) const;
  void update(std::span<const double> pos, std::span<const double> neg, double gamma, double sigma_floor);
  bool operator==(const WeakClassifier&) const = default;
};

// Log-density of N(mu, sigma^2) at f.
double gaussian_log_density(double f, double mu, double sigma);

/// 1 - prod(1 - p_i).
double noisy_or(std::span<const double> probs);

/// Bag log-likelihood of strong-classifier scores: one positive bag under
/// the noisy-OR model plus every negative instance as its own bag.
double bag_log_likelihood(std::span<const double> pos_scores, std::span<const double> neg_scores);

struct TrackerState {
  Rect bbox;
  int frame_w = 0;
  int frame_h = 0;
  TrackerParams params;
  std::vector<HaarFeature> features;
  std::vector<WeakClassifier> weak;
  std::vector<std::size_t> selected;
  std::vector<double> selection_loglik;  // bag log-likelihood after each greedy pick of the last update
  SplitMix64 rng{0};
};

struct TrackResult {
  Rect bbox;
  double confidence = 0.0;
  bool operator==(const TrackResult&) const = default;
};

std::vector<HaarFeature> generate_features(int patch_w, int patch_h, int count, SplitMix64& rng);

TrackerState init_tracker(const Image& gray, const Rect& bbox, const TrackerParams& params, std::uint64_t seed);

/// Sum of selected LLRs for the patch whose top-left corner is (x, y).
double mil_score(const TrackerState& state, const IntegralTable& ii, int x, int y);
double mil_score(const TrackerState& state, const Image& gray, int x, int y);

/// Positive bag, negative samples, Gaussian updates and greedy reselection
/// around the current bbox.
void mil_update(TrackerState& state, const IntegralTable& ii);

TrackResult track_step(TrackerState& state, const Image& gray);

inline constexpr double kDefaultConfidenceThreshold = 0.0;
inline bool confidence_ok(const TrackResult& result, double threshold) { return result.confidence >= threshold; }

}  // namespace hgr
