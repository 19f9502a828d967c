#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <vector>

#include "doctest.h"
#include "hgr/error.hpp"
#include "hgr/mil_tracker.hpp"
#include "hgr/rng.hpp"
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

TrackerParams small_params() {
  TrackerParams p;
  p.num_features = 60;
  p.num_selected = 15;
  p.search_radius = 10;
  p.neg_outer = 15.0;
  p.neg_samples = 30;
  return p;
}

double center_error(const Rect& a, const Rect& b) {
  return std::hypot(a.x + a.w / 2.0 - (b.x + b.w / 2.0), a.y + a.h / 2.0 - (b.y + b.h / 2.0));
}

}  // namespace

TEST_CASE("feature generation") {
  SplitMix64 a(5), b(5);
  const auto fa = generate_features(24, 20, 100, a);
  const auto fb = generate_features(24, 20, 100, b);
  CHECK(fa == fb);
  for (const auto& f : fa) {
    CHECK(f.rects.size() >= 2);
    CHECK(f.rects.size() <= 4);
    for (const auto& r : f.rects) {
      CHECK(r.x >= 0);
      CHECK(r.y >= 0);
      CHECK(r.w >= 1);
      CHECK(r.h >= 1);
      CHECK(r.x + r.w <= 24);
      CHECK(r.y + r.h <= 20);
      CHECK(r.weight >= -1.0);
      CHECK(r.weight <= 1.0);
    }
  }
}

TEST_CASE("feature values equal direct pixel loops") {
  const auto seq = scene::translating(3, 2);
  const Image& img = seq.frames[0];
  const IntegralTable ii = integral_image(img);
  SplitMix64 rng(8);
  const auto feats = generate_features(24, 24, 200, rng);
  for (const auto& f : feats) {
    const int px = static_cast<int>(rng.below(static_cast<std::uint64_t>(img.width - 24 + 1)));
    const int py = static_cast<int>(rng.below(static_cast<std::uint64_t>(img.height - 24 + 1)));
    CHECK(std::abs(f.evaluate(ii, px, py, 1.0 / 576) - oracle::tracker_feature(img, f, px, py, 24, 24)) <= 1e-6);
  }
}

TEST_CASE("gaussian weak classifier") {
  SUBCASE("identical class models give zero") {
    WeakClassifier w;
    w.mu_pos = w.mu_neg = 3.0;
    w.sigma_pos = w.sigma_neg = 2.0;
    for (double f : {-10.0, 0.0, 3.0, 8.5}) CHECK(w.llr(f) == 0.0);
  }
  SUBCASE("closer to the positive mean is positive") {
    WeakClassifier w;
    w.mu_pos = 1.0;
    w.mu_neg = -1.0;
    CHECK(w.llr(0.7) > 0.0);
    CHECK(w.llr(-0.7) < 0.0);
    CHECK(w.llr(0.7) == doctest::Approx(gaussian_log_density(0.7, 1, 1) - gaussian_log_density(0.7, -1, 1)));
  }
  SUBCASE("log density formula") {
    CHECK(gaussian_log_density(0.0, 0.0, 1.0) == doctest::Approx(-0.5 * std::log(2 * M_PI)));
    CHECK(gaussian_log_density(3.0, 1.0, 2.0) == doctest::Approx(-0.5 - std::log(2.0) - 0.5 * std::log(2 * M_PI)));
  }
  SUBCASE("first update takes the sample moments, later ones blend by gamma") {
    WeakClassifier w;
    const std::vector<double> pos{1, 3}, neg{10, 10, 10, 14};
    w.update(pos, neg, 0.85, 1e-3);
    CHECK(w.trained);
    CHECK(w.mu_pos == doctest::Approx(2.0));
    CHECK(w.sigma_pos == doctest::Approx(1.0));
    CHECK(w.mu_neg == doctest::Approx(11.0));
    CHECK(w.sigma_neg == doctest::Approx(std::sqrt(3.0)));
    const std::vector<double> pos2{5, 5};
    w.update(pos2, neg, 0.85, 1e-3);
    CHECK(w.mu_pos == doctest::Approx(0.85 * 2.0 + 0.15 * 5.0));
  }
  SUBCASE("sigma never drops below the floor") {
    WeakClassifier w;
    SplitMix64 rng(1);
    for (int it = 0; it < 200; ++it) {
      const double c = rng.uniform(-5, 5);
      const std::vector<double> same(4, c);
      const std::vector<double> jitter{c, c + rng.uniform(0, 1e-6)};
      w.update(same, jitter, 0.85, 1e-3);
      CHECK(w.sigma_pos >= 1e-3);
      CHECK(w.sigma_neg >= 1e-3);
    }
  }
}

TEST_CASE("noisy-OR") {
  const std::vector<double> one{0.37};
  CHECK(noisy_or(one) == doctest::Approx(0.37));
  CHECK(noisy_or(std::vector<double>{}) == 0.0);
  CHECK(noisy_or(std::vector<double>{0.5, 0.5}) == doctest::Approx(0.75));
  SplitMix64 rng(2);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> p(1 + rng.below(8));
    for (auto& v : p) v = rng.uniform();
    const double base = noisy_or(p);
    CHECK(base >= 0.0);
    CHECK(base <= 1.0);
    auto bumped = p;
    const std::size_t i = rng.below(p.size());
    bumped[i] = std::min(1.0, bumped[i] + rng.uniform(0, 0.5));
    CHECK(noisy_or(bumped) >= base - 1e-15);
  }
}

TEST_CASE("bag log-likelihood") {
  auto sigmoid = [](double z) { return 1 / (1 + std::exp(-z)); };
  const std::vector<double> pos{0.3, -1.2, 2.0}, neg{-0.5, 1.1};
  std::vector<double> probs;
  for (double z : pos) probs.push_back(sigmoid(z));
  double expect = std::log(noisy_or(probs));
  for (double z : neg) expect += std::log(1 - sigmoid(z));
  CHECK(bag_log_likelihood(pos, neg) == doctest::Approx(expect).epsilon(1e-12));
  // Extreme scores stay finite.
  const std::vector<double> low(5, -800.0), high(3, 800.0);
  CHECK(std::isfinite(bag_log_likelihood(low, high)));
  CHECK(bag_log_likelihood(high, low) == doctest::Approx(0.0).scale(1e-12));
}

TEST_CASE("init_tracker") {
  const auto seq = scene::translating(1, 3);
  const Image& f0 = seq.frames[0];
  SUBCASE("deterministic per seed") {
    const TrackerState a = init_tracker(f0, seq.truth[0], small_params(), 9);
    const TrackerState b = init_tracker(f0, seq.truth[0], small_params(), 9);
    CHECK(a.features == b.features);
    CHECK(a.weak == b.weak);
    CHECK(a.selected == b.selected);
    const TrackerState c = init_tracker(f0, seq.truth[0], small_params(), 10);
    CHECK_FALSE(a.features == c.features);
  }
  SUBCASE("M equal to K selects everything") {
    TrackerParams p = small_params();
    p.num_features = p.num_selected = 12;
    const TrackerState s = init_tracker(f0, seq.truth[0], p, 1);
    std::vector<std::size_t> sel = s.selected;
    std::sort(sel.begin(), sel.end());
    std::vector<std::size_t> all(12);
    std::iota(all.begin(), all.end(), 0);
    CHECK(sel == all);
  }
  SUBCASE("selected indices are unique and K long") {
    const TrackerState s = init_tracker(f0, seq.truth[0], {}, 3);
    CHECK(s.selected.size() == 50);
    CHECK(std::set<std::size_t>(s.selected.begin(), s.selected.end()).size() == 50);
    CHECK(s.features.size() == 250);
  }
  SUBCASE("true location outscores the annulus") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const TrackerState s = init_tracker(f0, seq.truth[0], {}, seed);
      const IntegralTable ii = integral_image(f0);
      const double at_truth = mil_score(s, ii, seq.truth[0].x, seq.truth[0].y);
      double sum = 0;
      int n = 0;
      for (int dy = -30; dy <= 30; ++dy)
        for (int dx = -30; dx <= 30; ++dx) {
          const double d = std::hypot(dx, dy);
          const int x = seq.truth[0].x + dx, y = seq.truth[0].y + dy;
          if (d <= 4.0 || d > 37.5 || x < 0 || y < 0 || x + 24 > f0.width || y + 24 > f0.height) continue;
          sum += mil_score(s, ii, x, y);
          ++n;
        }
      CHECK(at_truth > sum / n);
    }
  }
  SUBCASE("errors") {
    CHECK(code_of([&] { init_tracker(f0, {150, 10, 24, 24}, {}, 1); }) == ErrorCode::BoxOutOfFrame);
    CHECK(code_of([&] { init_tracker(f0, {-1, 10, 24, 24}, {}, 1); }) == ErrorCode::BoxOutOfFrame);
    CHECK(code_of([&] { init_tracker(f0, {10, 10, 3, 5}, {}, 1); }) == ErrorCode::DegenerateBox);
    CHECK(code_of([&] { init_tracker(f0, {10, 10, 1, 40}, {}, 1); }) == ErrorCode::DegenerateBox);
  }
}

TEST_CASE("mil_score equals the direct density oracle") {
  const auto seq = scene::translating(4, 5);
  TrackerState s = init_tracker(seq.frames[0], seq.truth[0], {}, 4);
  for (int f = 1; f < 5; ++f) track_step(s, seq.frames[static_cast<std::size_t>(f)]);
  const Image& img = seq.frames[4];
  SplitMix64 rng(1);
  for (int k = 0; k < 40; ++k) {
    const int x = static_cast<int>(rng.below(static_cast<std::uint64_t>(img.width - 24 + 1)));
    const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(img.height - 24 + 1)));
    CHECK(std::abs(mil_score(s, img, x, y) - oracle::tracker_score(s, img, x, y)) <= 1e-9);
  }
  CHECK(code_of([&] { mil_score(s, img, img.width - 10, 0); }) == ErrorCode::PatchOutOfFrame);
}

TEST_CASE("greedy selection log-likelihood is nondecreasing") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto seq = scene::translating(seed, 6);
    TrackerState s = init_tracker(seq.frames[0], seq.truth[0], {}, seed);
    for (std::size_t f = 0; f < seq.frames.size(); ++f) {
      if (f > 0) track_step(s, seq.frames[f]);
      REQUIRE(s.selection_loglik.size() == 50);
      for (std::size_t k = 1; k < s.selection_loglik.size(); ++k)
        CHECK(s.selection_loglik[k] >= s.selection_loglik[k - 1] - 1e-9);
    }
  }
}

TEST_CASE("tracking is deterministic") {
  const auto seq = scene::translating(6, 15);
  TrackerState a = init_tracker(seq.frames[0], seq.truth[0], {}, 6);
  TrackerState b = init_tracker(seq.frames[0], seq.truth[0], {}, 6);
  for (std::size_t f = 1; f < seq.frames.size(); ++f) CHECK(track_step(a, seq.frames[f]) == track_step(b, seq.frames[f]));
}

TEST_CASE("translating patch is followed") {
  for (std::uint64_t seed : {0u, 1u}) {
    const auto seq = scene::translating(seed);
    TrackerState s = init_tracker(seq.frames[0], seq.truth[0], {}, seed);
    double total = 0;
    for (std::size_t f = 1; f < seq.frames.size(); ++f) {
      const TrackResult r = track_step(s, seq.frames[f]);
      total += center_error(r.bbox, seq.truth[f]);
      CHECK(confidence_ok(r, kDefaultConfidenceThreshold));
      CHECK(r.bbox.x >= 0);
      CHECK(r.bbox.right() <= 160);
    }
    CHECK(total / 99.0 <= 5.0);
  }
}

TEST_CASE("static target stays locked with high confidence") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto seq = scene::stationary(seed, 40);
    TrackerState s = init_tracker(seq.frames[0], seq.truth[0], {}, seed);
    const TrackResult first = track_step(s, seq.frames[1]);
    // Positions inside the positive bag are indistinguishable to a bag learner.
    CHECK(std::abs(first.bbox.x - seq.truth[1].x) <= s.params.pos_radius);
    CHECK(std::abs(first.bbox.y - seq.truth[1].y) <= s.params.pos_radius);
    for (std::size_t f = 2; f < seq.frames.size(); ++f) {
      const TrackResult r = track_step(s, seq.frames[f]);
      CHECK(oracle::iou(r.bbox, seq.truth[f]) >= 0.5);
      CHECK(r.confidence > 1.0);
    }
  }
}

TEST_CASE("identical frames give zero displacement on every seed" * doctest::may_fail()) {
  int moved = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto seq = scene::stationary(seed, 2);
    TrackerState s = init_tracker(seq.frames[0], seq.truth[0], {}, seed);
    const TrackResult r = track_step(s, seq.frames[1]);
    moved += r.bbox.x != seq.truth[0].x || r.bbox.y != seq.truth[0].y;
  }
  CHECK(moved == 0);
}

TEST_CASE("occlusion drops confidence quickly") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto seq = scene::occluded(seed, 40, 25);
    TrackerState s = init_tracker(seq.frames[0], seq.truth[0], {}, seed);
    int dropped_at = -1;
    for (std::size_t f = 1; f < seq.frames.size(); ++f) {
      const TrackResult r = track_step(s, seq.frames[f]);
      if (static_cast<int>(f) < seq.occluded_from) {
        CHECK(confidence_ok(r, kDefaultConfidenceThreshold));
      } else if (dropped_at < 0 && !confidence_ok(r, kDefaultConfidenceThreshold)) {
        dropped_at = static_cast<int>(f);
      }
    }
    REQUIRE(dropped_at >= 0);
    CHECK(dropped_at - seq.occluded_from < 5);
  }
}

TEST_CASE("confidence threshold is inclusive") {
  CHECK(confidence_ok({{}, 0.25}, 0.25));
  CHECK_FALSE(confidence_ok({{}, 0.2499}, 0.25));
}

TEST_CASE("tracker config text") {
  const TrackerParams p = parse_tracker_config("# tuned\nsearch_radius = 20\nnum_selected=40\n\nlearning_rate=0.9\n");
  CHECK(p.search_radius == 20);
  CHECK(p.num_selected == 40);
  CHECK(p.learning_rate == 0.9);
  CHECK(p.num_features == 250);
  CHECK(parse_tracker_config(serialize_tracker_config(p)) == p);
  CHECK(code_of([] { parse_tracker_config("radius=3\n"); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { parse_tracker_config("search_radius=2.5\n"); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { parse_tracker_config("num_selected=300\n"); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { parse_tracker_config("learning_rate\n"); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("track_step rejects frames of another size") {
  const auto seq = scene::translating(1, 2);
  TrackerState s = init_tracker(seq.frames[0], seq.truth[0], small_params(), 1);
  CHECK(code_of([&] { track_step(s, Image(100, 100, 1)); }) == ErrorCode::InvalidArgument);
}
