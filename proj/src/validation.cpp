// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

#include "neumat/validation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <thread>

#include "neumat/random.hpp"

namespace neumat {

using nlohmann::json;

bool ValidationReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed || c.skipped; });
}

json ValidationReport::to_json() const {
  json j;
  j["passed"] = passed();
  j["checks"] = json::array();
  for (const auto& c : checks)
    j["checks"].push_back({{"name", c.name},
                           {"passed", c.passed},
                           {"skipped", c.skipped},
                           {"value", c.value},
                           {"threshold", c.threshold},
                           {"detail", c.detail}});
  j["warnings"] = warnings;
  return j;
}

namespace {

LatentQuery random_query(Rng& rng, double level) { return {{rng.uniform(), rng.uniform()}, level}; }

Vec3d random_view(Rng& rng) {
  Vec3d wi = sample_cosine_hemisphere<double>(Vec2d(rng.uniform(), rng.uniform()));
  wi.z() = std::max(wi.z(), 1e-3);
  return wi.normalized();
}

std::vector<ProxyParamsd> material_proxies(const NeuralMaterial& mat, int count, Rng& rng, std::vector<Vec3d>* views) {
  std::vector<ProxyParamsd> out;
  for (int i = 0; i < count; ++i) {
    const double level = rng.uniform() * std::max(0, mat.latent.num_levels() - 1);
    const LatentCode z = mat.latent.fetch(random_query(rng, level), rng.uniform()).z;
    const Vec3d wi = random_view(rng);
    out.push_back(mat.infer_proxy(z, wi));
    views->push_back(wi);
  }
  return out;
}

CheckResult normalize_sweep(const std::vector<ProxyParamsd>& proxies, const std::vector<Vec3d>& views,
                            long samples, Rng& rng) {
  CheckResult c;
  c.name = "proxy_normalization";
  c.threshold = 0.01;
  int failures = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < proxies.size(); ++i) {
    const double integral = proxy_normalize_check(proxies[i], views[i], samples, rng);
    const double tol = proxies[i].mu_d.cwiseAbs().maxCoeff() > 0.5 ? 0.03 : 0.01;
    const double err = std::abs(integral - 1.0);
    worst = std::max(worst, err);
    if (!(err <= tol) || !std::isfinite(integral)) ++failures;
  }
  c.value = worst;
  c.passed = failures == 0;
  c.detail = std::to_string(failures) + " of " + std::to_string(proxies.size()) + " sets outside tolerance";
  return c;
}

CheckResult chi2_sweep(const std::vector<ProxyParamsd>& proxies, const std::vector<Vec3d>& views,
                       const Chi2Options& options, Rng& rng) {
  CheckResult c;
  c.name = "proxy_chi2";
  int passed = 0;
  for (std::size_t i = 0; i < proxies.size(); ++i)
    if (proxy_chi2_test(proxies[i], views[i], rng, options).passed) ++passed;
  const int n = int(proxies.size());
  const int allowed = std::max(1, n / 20);
  c.value = double(passed) / std::max(1, n);
  c.threshold = double(n - allowed) / std::max(1, n);
  c.passed = passed >= n - allowed;
  c.detail = std::to_string(passed) + " of " + std::to_string(n) + " sets pass at significance " +
             std::to_string(options.significance);
  return c;
}

CheckResult precision_check(const NeuralMaterial& mat, int queries, double threshold, Rng& rng) {
  CheckResult c;
  c.name = "fp16_vs_fp32";
  c.threshold = threshold;
  const NeuralRuntime fp32(mat, Precision::kFp32);
  const NeuralRuntime fp16(mat, Precision::kFp16);
  double sum = 0.0;
  long count = 0;
  for (int i = 0; i < queries; ++i) {
    const LatentQuery q = random_query(rng, 0.0);
    const double u_rr = rng.uniform();
    const Vec3d wi = random_view(rng);
    const Vec3d wo = random_view(rng);
    const Spectrum a = fp32.eval(fp32.prepare(q, u_rr, wi), wo);
    const Spectrum b = fp16.eval(fp16.prepare(q, u_rr, wi), wo);
    for (int k = 0; k < 3; ++k) {
      const double den = std::abs(a[k]) + std::abs(b[k]);
      sum += den > 0.0 ? 2.0 * std::abs(a[k] - b[k]) / (den + 1e-3) : 0.0;
      ++count;
    }
  }
  c.value = count ? sum / double(count) : 0.0;
  c.passed = c.value < threshold;
  c.detail = "mean SMAPE over " + std::to_string(queries) + " BRDF queries";
  return c;
}

CheckResult unbiasedness_check(const LatentPyramid& latent, double level, long samples, Rng& rng) {
  CheckResult c;
  c.name = "latent_fetch_unbiased";
  c.threshold = 3.0;
  const int lo = int(std::floor(level));
  if (lo + 1 >= latent.num_levels()) {
    c.skipped = true;
    c.detail = "pyramid has fewer than " + std::to_string(lo + 2) + " levels";
    return c;
  }
  const double frac = level - lo;
  const Vec2d uv(rng.uniform(), rng.uniform());
  const Eigen::Matrix<double, kLatentChannels, 1> expected =
      (1.0 - frac) * latent.bilinear(lo, uv).cast<double>() + frac * latent.bilinear(lo + 1, uv).cast<double>();
  Eigen::Matrix<double, kLatentChannels, 1> sum = Eigen::Matrix<double, kLatentChannels, 1>::Zero();
  Eigen::Matrix<double, kLatentChannels, 1> sq = sum;
  for (long i = 0; i < samples; ++i) {
    const Eigen::Matrix<double, kLatentChannels, 1> z = latent.fetch({uv, level}, rng.uniform()).z.cast<double>();
    sum += z;
    sq += z.cwiseAbs2();
  }
  const double n = double(samples);
  double worst = 0.0;
  for (int k = 0; k < kLatentChannels; ++k) {
    const double mean = sum[k] / n;
    const double var = std::max(sq[k] / n - mean * mean, 0.0);
    const double se = std::sqrt(var / n);
    const double dev = std::abs(mean - expected[k]);
    const double score = se > 0.0 ? dev / se : (dev <= 1e-6 * (1.0 + std::abs(expected[k])) ? 0.0 : INFINITY);
    worst = std::max(worst, score);
  }
  c.value = worst;
  c.passed = worst <= 3.0;
  c.detail = "largest channel deviation in standard errors";
  return c;
}

}  // namespace

ValidationReport validate_material(const NeuralMaterial& mat, const ValidateOptions& options) {
  ValidationReport report;
  Rng rng(options.seed, 0x76616c);
  std::vector<Vec3d> views;
  const auto proxies = material_proxies(mat, options.proxy_sets, rng, &views);
  report.checks.push_back(normalize_sweep(proxies, views, options.normalize_samples, rng));
  report.checks.push_back(chi2_sweep(proxies, views, options.chi2, rng));
  report.checks.push_back(precision_check(mat, options.precision_queries, options.precision_smape, rng));
  report.checks.push_back(unbiasedness_check(mat.latent, options.unbias_level, options.unbias_samples, rng));

  const NeuralRuntime fp16(mat, Precision::kFp16);
  if (const int clamps = fp16.quantization_clamps(); clamps > 0)
    report.warnings.push_back("quantization clamped " + std::to_string(clamps) + " values to +-65504");
  if (!mat.all_finite()) report.warnings.push_back("material contains non-finite parameters");
  return report;
}

json BenchReport::to_json() const {
  auto path = [](const PathThroughput& p) { return json{{"evals_per_second", p.evals_per_second}, {"seconds", p.seconds}}; };
  return {{"evaluations", evaluations},
          {"threads", threads},
          {"naive_fp32", path(naive_fp32)},
          {"fused_fp16", path(fused_fp16)},
          {"batched_fused_fp16", path(batched_fp16)},
          {"max_rel_diff_fused", max_rel_diff_fused},
          {"max_rel_diff_batched", max_rel_diff_batched},
          {"agreement_tolerance", agreement_tolerance},
          {"agreement", agreement()},
          {"checksum", checksum}};
}

namespace {

template <typename Fn>
PathThroughput timed(long n, int threads, Fn&& body) {
  const auto start = std::chrono::steady_clock::now();
  if (threads <= 1) {
    body(0L, n);
  } else {
    std::vector<std::jthread> pool;
    const long chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const long begin = std::min(n, t * chunk);
      const long end = std::min(n, begin + chunk);
      pool.emplace_back([&body, begin, end] { body(begin, end); });
    }
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {seconds > 0.0 ? double(n) / seconds : 0.0, seconds};
}

}  // namespace

BenchReport bench_network(const Mlp<float>& net, const Eigen::MatrixXf& inputs, int threads, bool brdf_map) {
  const long n = inputs.cols();
  const int in = net.input_size();
  const int out = net.output_size();
  if (inputs.rows() != in) throw DimensionError("bench_network: input size mismatch");
  const QuantizedMlp q = quantize(net);
  Eigen::MatrixXf naive(out, n), fused(out, n), batched(out, n);

  BenchReport r;
  r.evaluations = n;
  r.threads = std::max(1, threads);
  r.naive_fp32 = timed(n, r.threads, [&](long b, long e) {
    for (long i = b; i < e; ++i) naive.col(i) = net.forward(inputs.col(i));
  });
  r.fused_fp16 = timed(n, r.threads, [&](long b, long e) {
    for (long i = b; i < e; ++i)
      q.fused_forward({inputs.col(i).data(), std::size_t(in)}, {fused.col(i).data(), std::size_t(out)});
  });
  constexpr long kBatch = 4096;
  r.batched_fp16 = timed(n, r.threads, [&](long b, long e) {
    for (long s = b; s < e; s += kBatch) {
      const int count = int(std::min(kBatch, e - s));
      q.fused_forward_batch(inputs.col(s).data(), batched.col(s).data(), count);
    }
  });

  auto map = [brdf_map](float y) { return brdf_map ? double(brdf_output(y)) : double(y); };
  for (long i = 0; i < n; ++i)
    for (int k = 0; k < out; ++k) {
      const double ref = map(naive(k, i));
      r.max_rel_diff_fused = std::max(r.max_rel_diff_fused, relative_diff(map(fused(k, i)), ref));
      r.max_rel_diff_batched = std::max(r.max_rel_diff_batched, relative_diff(map(batched(k, i)), ref));
      r.checksum += double(batched(k, i));
    }
  return r;
}

BenchReport bench_material(const NeuralMaterial& mat, long n, int threads, std::uint64_t seed) {
  Rng rng(seed, 0x62656e);
  Eigen::MatrixXf inputs(mat.decoder_input_size(), n);
  for (long i = 0; i < n; ++i) {
    const double level = rng.uniform() * std::max(0, mat.latent.num_levels() - 1);
    const LatentCode z = mat.latent.fetch(random_query(rng, level), rng.uniform()).z;
    inputs.col(i) = mat.decoder_input(z, random_view(rng), random_view(rng));
  }
  return bench_network(mat.brdf_decoder, inputs, threads, true);
}

}  // namespace neumat
