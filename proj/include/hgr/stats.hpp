#pragma once

#include <cstddef>
#include <span>

namespace hgr {

/// Value at rank max(1, ceil(q*n)) of the sorted sample.
double percentile_nearest_rank(std::span<const double> sorted, double q);

struct LatencyStats {
  std::size_t count = 0;
  double mean = 0.0;
  double p50 = 0.0;
  double p95 = 0.0;
  double min = 0.0;
  double max = 0.0;
};

LatencyStats summarize(std::span<const double> samples_ms);

}  // namespace hgr
