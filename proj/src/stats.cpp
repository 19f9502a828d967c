#include "hgr/stats.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "hgr/error.hpp"

namespace hgr {

double percentile_nearest_rank(std::span<const double> sorted, double q) {
  if (sorted.empty()) fail(ErrorCode::EmptyInput, "percentile of an empty sample");
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size()) - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

LatencyStats summarize(std::span<const double> samples_ms) {
  LatencyStats s;
  s.count = samples_ms.size();
  if (samples_ms.empty()) return s;
  std::vector<double> sorted(samples_ms.begin(), samples_ms.end());
  std::sort(sorted.begin(), sorted.end());
  double total = 0.0;
  for (double v : sorted) total += v;
  s.mean = std::clamp(total / static_cast<double>(sorted.size()), sorted.front(), sorted.back());
  s.p50 = percentile_nearest_rank(sorted, 0.50);
  s.p95 = percentile_nearest_rank(sorted, 0.95);
  s.min = sorted.front();
  s.max = sorted.back();
  return s;
}

}  // namespace hgr
