#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "rsfm/status.h"

namespace rsfm {

struct RansacOptions {
  // Inlier threshold in the units of the residual function.
  double threshold = 2.0;
  double confidence = 0.9999;
  int max_iterations = 10000;
  int min_iterations = 100;
  std::uint64_t seed = 0;

  bool IsValid() const {
    return threshold > 0.0 && confidence > 0.0 && confidence < 1.0 && min_iterations >= 0 &&
           max_iterations >= min_iterations && max_iterations > 0;
  }
};

template <typename Model>
struct RansacReport {
  Model model{};
  std::vector<char> inlier_mask;
  int num_inliers = 0;
  double inlier_ratio = 0.0;
  double mean_inlier_residual = 0.0;
  int iterations = 0;
  bool success = false;
};

// SplitMix64 finalizer; derives independent per-iteration streams.
inline std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Distinct indices in [0, n), drawn from the stream of one iteration.
inline std::vector<int> RansacSample(std::uint64_t seed, int iteration, int n, int k) {
  std::mt19937_64 rng(SplitMix64(seed + static_cast<std::uint64_t>(iteration)));
  std::vector<int> sample;
  sample.reserve(k);
  while (static_cast<int>(sample.size()) < k) {
    const int idx = static_cast<int>(rng() % static_cast<std::uint64_t>(n));
    if (std::find(sample.begin(), sample.end(), idx) == sample.end()) sample.push_back(idx);
  }
  return sample;
}

// Adaptive bound log(1 - p) / log(1 - w^s), clamped to [min, max].
inline int RansacRequiredIterations(double inlier_ratio, int sample_size,
                                    const RansacOptions& options) {
  const double ws = std::pow(inlier_ratio, sample_size);
  double n = static_cast<double>(options.max_iterations);
  if (ws >= 1.0) {
    n = 0.0;
  } else if (ws > 0.0) {
    n = std::ceil(std::log(1.0 - options.confidence) / std::log(1.0 - ws));
  }
  n = std::clamp(n, static_cast<double>(options.min_iterations),
                 static_cast<double>(options.max_iterations));
  return static_cast<int>(n);
}

// Inlier mask, count and mean inlier residual of a fixed model.
template <typename Model>
RansacReport<Model> ScoreModel(const Model& model, int num_data,
                               const std::function<double(const Model&, int)>& residual,
                               double threshold) {
  RansacReport<Model> report;
  report.model = model;
  report.inlier_mask.assign(num_data, 0);
  double sum = 0.0;
  for (int i = 0; i < num_data; ++i) {
    const double r = residual(model, i);
    if (r <= threshold) {
      report.inlier_mask[i] = 1;
      ++report.num_inliers;
      sum += r;
    }
  }
  report.inlier_ratio = num_data > 0 ? static_cast<double>(report.num_inliers) / num_data : 0.0;
  report.mean_inlier_residual =
      report.num_inliers > 0 ? sum / report.num_inliers : std::numeric_limits<double>::infinity();
  return report;
}

// Hypothesize-and-verify. The solver maps a minimal sample to candidate
// models; the best model has most inliers, ties go to lower mean residual.
template <typename Model>
Expected<RansacReport<Model>> Ransac(
    int num_data, int sample_size,
    const std::function<std::vector<Model>(const std::vector<int>&)>& solver,
    const std::function<double(const Model&, int)>& residual, const RansacOptions& options) {
  if (!options.IsValid()) return {ErrorCode::kInvalidArgument, "invalid RANSAC options"};
  if (num_data < sample_size) {
    return {ErrorCode::kRansacFailed, "fewer data than the minimal sample"};
  }

  RansacReport<Model> best;
  bool have_best = false;
  int required = options.max_iterations;
  int it = 0;
  for (; it < required && it < options.max_iterations; ++it) {
    const std::vector<int> sample = RansacSample(options.seed, it, num_data, sample_size);
    for (const Model& model : solver(sample)) {
      RansacReport<Model> cand = ScoreModel<Model>(model, num_data, residual, options.threshold);
      const bool better =
          !have_best || cand.num_inliers > best.num_inliers ||
          (cand.num_inliers == best.num_inliers &&
           cand.mean_inlier_residual < best.mean_inlier_residual);
      if (better) {
        best = std::move(cand);
        have_best = true;
        required = RansacRequiredIterations(best.inlier_ratio, sample_size, options);
      }
    }
  }

  if (!have_best || best.num_inliers < sample_size) {
    return {ErrorCode::kRansacFailed, "no hypothesis reached the minimal inlier count"};
  }
  best.iterations = it;
  best.success = true;
  return best;
}

}  // namespace rsfm
