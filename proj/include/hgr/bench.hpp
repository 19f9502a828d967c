#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "hgr/gesture_net.hpp"
#include "hgr/pipeline.hpp"
#include "hgr/stats.hpp"

namespace hgr {

struct BenchReport {
  std::string op;
  int iterations = 0;
  int warmup = 0;
  std::uint64_t seed = 42;
  std::vector<double> samples_ms;
  LatencyStats stats;
  std::map<std::string, LatencyStats> by_mode;  // pipeline runs only
  std::string environment;
  bool pinned = false;
  std::optional<double> power_w;
};

/// Host descriptor: CPU model, logical core count, compiler.
std::string host_description();
/// Restricts the calling thread to the CPU it is running on. Returns false
/// where the platform does not allow it.
bool pin_to_current_cpu();

/// `warmup` discarded passes, then `iters` timed single-image forward passes
/// over one fixed random 48x48 binary input.
BenchReport bench_forward(const Network& net, int iters, int warmup, std::uint64_t seed);
/// Replays the session `iters` times and pools every frame's total_ms.
BenchReport bench_pipeline(std::span<const Image> frames, const PipelineContext& ctx, int iters);

nlohmann::json to_json(const BenchReport& report);

}  // namespace hgr
