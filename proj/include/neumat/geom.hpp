// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>

namespace neumat {

template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;

using Vec2d = Vec2<double>;
using Vec3d = Vec3<double>;
using Vec3f = Vec3<float>;

/// RGB triple. BRDF values are in 1/sr, radiance in W/(sr m^2).
using Spectrum = Eigen::Array3d;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kInvPi = std::numbers::inv_pi;

/// Rec. 709 luminance.
inline double luminance(const Spectrum& s) { return 0.2126 * s[0] + 0.7152 * s[1] + 0.0722 * s[2]; }

class DegenerateFrameError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

template <typename Scalar>
Vec3<Scalar> normalized(const Vec3<Scalar>& v) {
  using std::sqrt;
  return v / sqrt(v.squaredNorm());
}

/// Shading basis with unit-length columns. t is not required to be orthogonal to n;
/// b is always orthogonal to both.
template <typename Scalar>
struct Frame {
  Vec3<Scalar> t{1, 0, 0};
  Vec3<Scalar> b{0, 1, 0};
  Vec3<Scalar> n{0, 0, 1};

  /// Rows (t, b, n) applied to v.
  Vec3<Scalar> to_local(const Vec3<Scalar>& v) const { return {t.dot(v), b.dot(v), n.dot(v)}; }
  Vec3<Scalar> to_world(const Vec3<Scalar>& v) const { return t * v[0] + b * v[1] + n * v[2]; }
};

template <typename Scalar>
Frame<Scalar> build_frame(const Vec3<Scalar>& n, const Vec3<Scalar>& t) {
  using std::sqrt;
  const Vec3<Scalar> c = n.cross(t);
  const Scalar len = sqrt(c.squaredNorm());
  if (!(len > Scalar(1e-8))) throw DegenerateFrameError("build_frame: normal and tangent are parallel");
  Frame<Scalar> f;
  f.n = n;
  f.t = normalized<Scalar>(t);
  f.b = c / len;
  return f;
}

/// Orthonormal frame around n (Duff et al. branchless construction).
template <typename Scalar>
Frame<Scalar> frame_from_normal(const Vec3<Scalar>& n) {
  using std::copysign;
  const Scalar sign = copysign(Scalar(1), n[2]);
  const Scalar a = Scalar(-1) / (sign + n[2]);
  const Scalar b = n[0] * n[1] * a;
  Frame<Scalar> f;
  f.n = n;
  f.t = Vec3<Scalar>(Scalar(1) + sign * n[0] * n[0] * a, sign * b, -sign * n[0]);
  f.b = Vec3<Scalar>(b, sign + n[1] * n[1] * a, -n[1]);
  return f;
}

template <typename Scalar>
Vec3<Scalar> reflect(const Vec3<Scalar>& w, const Vec3<Scalar>& h) {
  return Scalar(2) * w.dot(h) * h - w;
}

/// Polar mapping theta = acos(sqrt(1-u1)), phi = 2 pi u2.
template <typename Scalar>
Vec3<Scalar> sample_cosine_hemisphere(const Vec2<Scalar>& u) {
  using std::cos;
  using std::max;
  using std::sin;
  using std::sqrt;
  const Scalar cos_theta = sqrt(max(Scalar(Scalar(1) - u[0]), Scalar(0)));
  const Scalar sin_theta = sqrt(max(Scalar(u[0]), Scalar(0)));
  const Scalar phi = Scalar(2 * kPi) * u[1];
  return {sin_theta * cos(phi), sin_theta * sin(phi), cos_theta};
}

template <typename Scalar>
Scalar cosine_hemisphere_pdf(const Vec3<Scalar>& w) {
  return w[2] > Scalar(0) ? w[2] * Scalar(kInvPi) : Scalar(0);
}

inline Vec3d sample_uniform_sphere(const Vec2d& u) {
  const double z = 1.0 - 2.0 * u[0];
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  const double phi = 2.0 * kPi * u[1];
  return {r * std::cos(phi), r * std::sin(phi), z};
}

inline constexpr double kUniformSpherePdf = 0.25 * std::numbers::inv_pi;

inline Vec3d sample_uniform_hemisphere(const Vec2d& u) {
  const double z = u[0];
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  const double phi = 2.0 * kPi * u[1];
  return {r * std::cos(phi), r * std::sin(phi), z};
}

/// Uniform solid-angle sample in the cone of half-angle `half_angle` around `axis`.
inline Vec3d sample_uniform_cone(const Vec3d& axis, double half_angle, const Vec2d& u) {
  const double cos_max = std::cos(half_angle);
  const double z = 1.0 - u[0] * (1.0 - cos_max);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  const double phi = 2.0 * kPi * u[1];
  return frame_from_normal<double>(axis).to_world({r * std::cos(phi), r * std::sin(phi), z});
}

/// Rotates the difference vector `diff` (given in the half-vector frame) into world
/// space around `half`, returning (wi, wo) with normalize(wi + wo) == half.
inline std::pair<Vec3d, Vec3d> directions_from_half_diff(const Vec3d& half, const Vec3d& diff) {
  const double theta_h = std::acos(std::clamp(half[2], -1.0, 1.0));
  const double phi_h = std::atan2(half[1], half[0]);
  const Eigen::Matrix3d rot =
      (Eigen::AngleAxisd(phi_h, Vec3d::UnitZ()) * Eigen::AngleAxisd(theta_h, Vec3d::UnitY()))
          .toRotationMatrix();
  const Vec3d wi = rot * diff;
  const Vec3d wo = rot * Vec3d(-diff[0], -diff[1], diff[2]);
  return {wi.normalized(), wo.normalized()};
}

/// One Rusinkiewicz draw: half vector uniform on the upper hemisphere, difference
/// vector uniform on the hemisphere around it. Either result may be below the horizon.
inline std::pair<Vec3d, Vec3d> half_diff_from_u(const Eigen::Vector4d& u) {
  const Vec3d half = sample_uniform_hemisphere({u[0], u[1]});
  const Vec3d diff = sample_uniform_hemisphere({u[2], u[3]});
  return directions_from_half_diff(half, diff);
}

/// Draws half/difference pairs until both directions are above the horizon.
template <typename Rng>
std::pair<Vec3d, Vec3d> sample_half_diff(Rng& rng) {
  for (;;) {
    const Eigen::Vector4d u(rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform());
    auto dirs = half_diff_from_u(u);
    if (dirs.first[2] > 0.0 && dirs.second[2] > 0.0) return dirs;
  }
}

}  // namespace neumat
