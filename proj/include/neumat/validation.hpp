// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

// Self-checks and throughput measurements for a trained neural material.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "neumat/neural_brdf.hpp"
#include "neumat/stats.hpp"

namespace neumat {

struct ValidateOptions {
  int proxy_sets = 16;
  long normalize_samples = 400'000;
  Chi2Options chi2{.samples = 400'000};
  int precision_queries = 4000;
  double precision_smape = 0.01;
  long unbias_samples = 100'000;
  double unbias_level = 1.3;
  std::uint64_t seed = 1;
};

struct CheckResult {
  std::string name;
  bool passed = false;
  bool skipped = false;
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
};

struct ValidationReport {
  std::vector<CheckResult> checks;
  std::vector<std::string> warnings;
  bool passed() const;
  nlohmann::json to_json() const;
};

/// Normalization and chi-square sweeps over proxies inferred from the material,
/// FP16-vs-FP32 agreement, latent-fetch unbiasedness and quantization clamp warnings.
ValidationReport validate_material(const NeuralMaterial& mat, const ValidateOptions& options = {});

struct PathThroughput {
  double evals_per_second = 0.0;
  double seconds = 0.0;
};

struct BenchReport {
  long evaluations = 0;
  int threads = 1;
  PathThroughput naive_fp32;   // Mlp::forward per sample
  PathThroughput fused_fp16;   // QuantizedMlp::fused_forward per sample
  PathThroughput batched_fp16; // QuantizedMlp::fused_forward_batch
  double max_rel_diff_fused = 0.0;    // on BRDF values, fused vs naive
  double max_rel_diff_batched = 0.0;  // batched vs naive
  double agreement_tolerance = 1e-2;
  double checksum = 0.0;  // order-fixed sum of batched outputs
  bool agreement() const {
    return max_rel_diff_fused <= agreement_tolerance && max_rel_diff_batched <= agreement_tolerance;
  }
  nlohmann::json to_json() const;
};

/// Times the three evaluation paths of `net` on the columns of `inputs`.
/// Outputs are independent of the thread count.
BenchReport bench_network(const Mlp<float>& net, const Eigen::MatrixXf& inputs, int threads = 1,
                          bool brdf_map = true);

/// Benchmarks the BRDF decoder on n decoder inputs drawn from the material.
BenchReport bench_material(const NeuralMaterial& mat, long n, int threads = 1, std::uint64_t seed = 1);

/// Relative difference used by the bench agreement check.
inline double relative_diff(double a, double b, double floor = 1e-3) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace neumat
