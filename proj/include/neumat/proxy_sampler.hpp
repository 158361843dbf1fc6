// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

// Two-lobe analytic importance distribution driven by the sampler decoder: a
// cosine lobe tilted by a predicted slope, blended with an anisotropic,
// non-centered GGX lobe expressed through the linear slope transform M.
//
// All functions are templated on the scalar so that the trainer can evaluate them
// with Eigen::AutoDiffScalar and differentiate the sample transform and density
// with respect to the proxy parameters.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "neumat/geom.hpp"

namespace neumat {

/// Floor applied to alpha_x, alpha_y and 1 - rho^2 to keep M invertible.
inline constexpr double kProxyEpsilon = 1e-4;

template <typename Scalar>
struct ProxyParams {
  Scalar w_d{0.5};
  Scalar w_s{0.5};
  Vec2<Scalar> mu_d{Scalar(0), Scalar(0)};
  Scalar alpha_x{0.5};
  Scalar alpha_y{0.5};
  Scalar rho{0};
  Vec2<Scalar> mu_s{Scalar(0), Scalar(0)};

  template <typename Other>
  ProxyParams<Other> cast() const {
    ProxyParams<Other> p;
    p.w_d = Other(w_d);
    p.w_s = Other(w_s);
    p.mu_d = mu_d.template cast<Other>();
    p.alpha_x = Other(alpha_x);
    p.alpha_y = Other(alpha_y);
    p.rho = Other(rho);
    p.mu_s = mu_s.template cast<Other>();
    return p;
  }
};

using ProxyParamsd = ProxyParams<double>;

namespace proxy_detail {

template <typename Scalar>
Scalar floored(const Scalar& x) {
  return x < Scalar(kProxyEpsilon) ? Scalar(kProxyEpsilon) : x;
}

template <typename Scalar>
Scalar sqrt_one_minus_rho2(const Scalar& rho) {
  using std::sqrt;
  return sqrt(floored<Scalar>(Scalar(1) - rho * rho));
}

}  // namespace proxy_detail

/// Rows [ax, 0, -mx; ay*rho, ay*sqrt(1-rho^2), -my; 0, 0, 1] with the epsilon floors applied.
template <typename Scalar>
Mat3<Scalar> slope_matrix(const ProxyParams<Scalar>& p) {
  const Scalar ax = proxy_detail::floored(p.alpha_x);
  const Scalar ay = proxy_detail::floored(p.alpha_y);
  Mat3<Scalar> m;
  m << ax, Scalar(0), -p.mu_s[0],                                        //
      ay * p.rho, ay * proxy_detail::sqrt_one_minus_rho2(p.rho), -p.mu_s[1],  //
      Scalar(0), Scalar(0), Scalar(1);
  return m;
}

template <typename Scalar>
Scalar slope_matrix_det(const ProxyParams<Scalar>& p) {
  return proxy_detail::floored(p.alpha_x) * proxy_detail::floored(p.alpha_y) *
         proxy_detail::sqrt_one_minus_rho2(p.rho);
}

/// Closed-form inverse of slope_matrix(p).
template <typename Scalar>
Mat3<Scalar> slope_matrix_inverse(const ProxyParams<Scalar>& p) {
  const Scalar a = proxy_detail::floored(p.alpha_x);
  const Scalar ay = proxy_detail::floored(p.alpha_y);
  const Scalar c = ay * p.rho;
  const Scalar d = ay * proxy_detail::sqrt_one_minus_rho2(p.rho);
  const Scalar ia = Scalar(1) / a;
  const Scalar id = Scalar(1) / d;
  const Scalar off = -c * ia * id;
  Mat3<Scalar> m;
  m << ia, Scalar(0), ia * p.mu_s[0],                           //
      off, id, off * p.mu_s[0] + id * p.mu_s[1],                //
      Scalar(0), Scalar(0), Scalar(1);
  return m;
}

/// Normal of the tilted diffuse lobe, normalize(-mu_d,x, -mu_d,y, 1).
template <typename Scalar>
Vec3<Scalar> diffuse_normal(const ProxyParams<Scalar>& p) {
  return normalized<Scalar>(Vec3<Scalar>(-p.mu_d[0], -p.mu_d[1], Scalar(1)));
}

/// Minimal rotation taking +z to n (requires n.z > -1); smooth in n.
template <typename Scalar>
Frame<Scalar> tilt_frame(const Vec3<Scalar>& n) {
  const Scalar a = Scalar(-1) / (Scalar(1) + n[2]);
  const Scalar b = n[0] * n[1] * a;
  Frame<Scalar> f;
  f.n = n;
  f.t = Vec3<Scalar>(Scalar(1) + n[0] * n[0] * a, b, -n[0]);
  f.b = Vec3<Scalar>(b, Scalar(1) + n[1] * n[1] * a, -n[1]);
  return f;
}

template <typename Scalar>
Scalar proxy_pdf_diffuse(const ProxyParams<Scalar>& p, const Vec3<Scalar>& wo) {
  const Scalar c = wo.dot(diffuse_normal(p));
  return c > Scalar(0) ? c * Scalar(kInvPi) : Scalar(0);
}

/// Density of the specular lobe over reflected directions wo. The half vector is taken
/// in the upper hemisphere: reflect(wi, h) == reflect(wi, -h), so the lobe is
/// normalized over the whole sphere of wo.
template <typename Scalar>
Scalar proxy_pdf_specular(const ProxyParams<Scalar>& p, const Vec3<Scalar>& wi, const Vec3<Scalar>& wo) {
  using std::abs;
  using std::sqrt;
  Vec3<Scalar> h = wi + wo;
  const Scalar len2 = h.squaredNorm();
  if (!(len2 > Scalar(1e-20))) return Scalar(0);
  h /= sqrt(len2);
  if (h[2] < Scalar(0)) h = -h;
  if (!(h[2] > Scalar(0))) return Scalar(0);
  const Vec3<Scalar> mh = slope_matrix_inverse(p) * h;
  const Scalar r = sqrt(mh.squaredNorm());
  // Standard (alpha = 1) NDF is the constant 1/pi over the upper hemisphere; its
  // sampling density carries the extra cos(theta_m) = mh.z / r.
  const Scalar m_z = mh[2] / r;
  const Scalar density_std = Scalar(kInvPi) * m_z;
  const Scalar jacobian_h = Scalar(1) / (slope_matrix_det(p) * r * r * r);
  const Scalar jacobian_o = Scalar(1) / (Scalar(4) * abs(wo.dot(h)));
  return density_std * jacobian_h * jacobian_o;
}

template <typename Scalar>
Scalar proxy_pdf(const ProxyParams<Scalar>& p, const Vec3<Scalar>& wi, const Vec3<Scalar>& wo) {
  return p.w_d * proxy_pdf_diffuse(p, wo) + p.w_s * proxy_pdf_specular(p, wi, wo);
}

/// Cosine sample around the tilted diffuse normal.
template <typename Scalar>
Vec3<Scalar> proxy_sample_diffuse(const ProxyParams<Scalar>& p, const Vec2<Scalar>& u) {
  return tilt_frame(diffuse_normal(p)).to_world(sample_cosine_hemisphere<Scalar>(u));
}

/// Unit-roughness GGX microfacet normal via slope-space sampling.
template <typename Scalar>
Vec3<Scalar> sample_std_ggx_normal(const Vec2<Scalar>& u) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const Scalar u0 = u[0] < Scalar(1 - 1e-12) ? u[0] : Scalar(1 - 1e-12);
  const Scalar r = sqrt(u0 / (Scalar(1) - u0));
  const Scalar phi = Scalar(2 * kPi) * u[1];
  return normalized<Scalar>(Vec3<Scalar>(-r * cos(phi), -r * sin(phi), Scalar(1)));
}

template <typename Scalar>
Vec3<Scalar> proxy_sample_half_vector(const ProxyParams<Scalar>& p, const Vec2<Scalar>& u) {
  return normalized<Scalar>(slope_matrix(p) * sample_std_ggx_normal(u));
}

/// Mirror reflection of wi about a sampled half vector; may fall below the horizon.
template <typename Scalar>
Vec3<Scalar> proxy_sample_specular(const ProxyParams<Scalar>& p, const Vec3<Scalar>& wi, const Vec2<Scalar>& u) {
  return reflect<Scalar>(wi, proxy_sample_half_vector(p, u));
}

/// u[0] selects the lobe (diffuse when u[0] < w_d), u[1..2] drive the lobe sample.
template <typename Scalar>
Vec3<Scalar> proxy_sample(const ProxyParams<Scalar>& p, const Vec3<Scalar>& wi, const Vec3<Scalar>& u) {
  const Vec2<Scalar> u2(u[1], u[2]);
  if (u[0] < p.w_d) return proxy_sample_diffuse(p, u2);
  return proxy_sample_specular(p, wi, u2);
}

}  // namespace neumat
