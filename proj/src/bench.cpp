#include "hgr/bench.hpp"

#include <chrono>
#include <fstream>
#include <thread>

#include "hgr/error.hpp"
#include "hgr/rng.hpp"

#if defined(__linux__)
#include <sched.h>
#endif

namespace hgr {

namespace {

using Clock = std::chrono::steady_clock;

void finalize(BenchReport& r) { r.stats = summarize(r.samples_ms); }

}  // namespace

std::string host_description() {
  std::string cpu = "unknown cpu";
#if defined(__linux__)
  std::ifstream info("/proc/cpuinfo");
  std::string line;
  while (std::getline(info, line)) {
    if (line.rfind("model name", 0) == 0) {
      if (const auto colon = line.find(':'); colon != std::string::npos) cpu = line.substr(colon + 2);
      break;
    }
  }
#endif
  std::string desc = cpu + "; " + std::to_string(std::thread::hardware_concurrency()) + " logical cpus";
#if defined(__clang__)
  desc += "; clang " __clang_version__;
#elif defined(__GNUC__)
  desc += "; gcc " __VERSION__;
#endif
  return desc;
}

bool pin_to_current_cpu() {
#if defined(__linux__)
  const int cpu = sched_getcpu();
  if (cpu < 0) return false;
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(cpu, &set);
  return sched_setaffinity(0, sizeof set, &set) == 0;
#else
  return false;
#endif
}

BenchReport bench_forward(const Network& net, int iters, int warmup, std::uint64_t seed) {
  if (iters < 1) fail(ErrorCode::InvalidArgument, "iterations must be >= 1");
  if (warmup < 0) fail(ErrorCode::InvalidArgument, "warmup must be >= 0");
  try {
    check_architecture(net);
  } catch (const Error& e) {
    fail(ErrorCode::BadWeights, e.what());
  }
  BenchReport r;
  r.op = "forward";
  r.iterations = iters;
  r.warmup = warmup;
  r.seed = seed;
  r.environment = host_description();
  r.pinned = pin_to_current_cpu();

  SplitMix64 rng(seed);
  BinaryMask input(kInputSide, kInputSide);
  for (auto& b : input.bits) b = rng.below(2) ? 1 : 0;
  const Tensor x = mask_to_tensor(input);
  volatile float sink = 0.0f;
  for (int i = 0; i < warmup; ++i) sink = sink + net.forward(x)[0];
  r.samples_ms.reserve(static_cast<std::size_t>(iters));
  for (int i = 0; i < iters; ++i) {
    const auto t0 = Clock::now();
    const Tensor logits = net.forward(x);
    const auto us = std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count();
    sink = sink + logits[0];
    r.samples_ms.push_back(static_cast<double>(us) / 1e6);
  }
  finalize(r);
  return r;
}

BenchReport bench_pipeline(std::span<const Image> frames, const PipelineContext& ctx, int iters) {
  if (iters < 1) fail(ErrorCode::InvalidArgument, "iterations must be >= 1");
  BenchReport r;
  r.op = "pipeline";
  r.iterations = 0;
  r.warmup = 0;
  r.seed = ctx.config.seed;
  r.environment = host_description();
  r.pinned = pin_to_current_cpu();
  std::map<std::string, std::vector<double>> per_mode;
  for (int i = 0; i < iters; ++i) {
    const SessionReport session = run_session(frames, ctx);
    for (const auto& f : session.frames) {
      r.samples_ms.push_back(f.timings.total_ms);
      per_mode[mode_name(f.mode)].push_back(f.timings.total_ms);
    }
  }
  r.iterations = static_cast<int>(r.samples_ms.size());
  finalize(r);
  for (const auto& [mode, samples] : per_mode) r.by_mode[mode] = summarize(samples);
  return r;
}

nlohmann::json to_json(const BenchReport& r) {
  nlohmann::json modes = nlohmann::json::object();
  for (const auto& [mode, s] : r.by_mode) modes[mode] = to_json(s);
  return {
      {"op", r.op},
      {"iterations", r.iterations},
      {"warmup", r.warmup},
      {"seed", r.seed},
      {"samples_ms", r.samples_ms},
      {"mean_ms", r.stats.mean},
      {"p50_ms", r.stats.p50},
      {"p95_ms", r.stats.p95},
      {"min_ms", r.stats.min},
      {"max_ms", r.stats.max},
      {"by_mode", modes},
      {"environment", r.environment},
      {"pinned", r.pinned},
      {"power_w", r.power_w ? nlohmann::json(*r.power_w) : nlohmann::json(nullptr)},
      {"reference",
       {{"platform", "Raspberry Pi 3 (4x Cortex-A53 @ 1.2 GHz)"},
        {"time_s", 0.351},
        {"power_w", 0.690},
        {"note", "published embedded measurement for the same network; not measured on this host"}}},
  };
}

}  // namespace hgr
