// GGX microfacet BRDF: Lambertian diffuse plus a specular lobe built from the
// GGX normal distribution, Smith height-correlated masking-shadowing and
// Schlick Fresnel with F0 = specular albedo. The distribution width is
// alpha = roughness^2.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "nirvis/core.hpp"

namespace nirvis {

inline constexpr double kGrazingFloor = 1e-6;

inline double ggx_alpha(double roughness) { return roughness * roughness; }

/// GGX normal distribution D(h).
inline double ggx_d(double n_dot_h, double alpha) {
  const double a2 = alpha * alpha;
  const double t = n_dot_h * n_dot_h * (a2 - 1.0) + 1.0;
  return a2 / (kPi * t * t);
}

/// Smith Lambda for GGX.
inline double smith_lambda(double n_dot_w, double alpha) {
  const double c2 = n_dot_w * n_dot_w;
  const double tan2 = std::max(0.0, 1.0 - c2) / std::max(c2, kGrazingFloor);
  return 0.5 * (-1.0 + std::sqrt(1.0 + alpha * alpha * tan2));
}

/// Height-correlated masking-shadowing G2(v, l).
inline double smith_g2(double n_dot_v, double n_dot_l, double alpha) {
  return 1.0 / (1.0 + smith_lambda(n_dot_v, alpha) + smith_lambda(n_dot_l, alpha));
}

inline double schlick_fresnel(double f0, double v_dot_h) {
  const double m = std::clamp(1.0 - v_dot_h, 0.0, 1.0);
  const double m2 = m * m;
  return f0 + (1.0 - f0) * m2 * m2 * m;
}

/// Specular part D G F / (4 (n.v)(n.l)); zero for back-facing v or l.
inline double ggx_specular(const Vec3& n, const Vec3& v, const Vec3& l, double albedo_s, double roughness) {
  const double nv = dot(n, v), nl = dot(n, l);
  if (nv <= 0 || nl <= 0 || albedo_s <= 0) return 0.0;
  const Vec3 h = normalize(v + l);
  const double alpha = ggx_alpha(roughness);
  const double d = ggx_d(std::max(0.0, dot(n, h)), alpha);
  const double g = smith_g2(nv, nl, alpha);
  const double f = schlick_fresnel(albedo_s, std::max(0.0, dot(v, h)));
  return d * g * f / (4.0 * std::max(nv, kGrazingFloor) * std::max(nl, kGrazingFloor));
}

/// Full BRDF per channel: albedo_d / pi + specular.
template <std::size_t C>
std::array<double, C> ggx_brdf(const Vec3& n, const Vec3& v, const Vec3& l, const std::array<double, C>& albedo_d,
                               double albedo_s, double roughness) {
  std::array<double, C> out{};
  if (dot(n, v) <= 0 || dot(n, l) <= 0) return out;
  const double spec = ggx_specular(n, v, l, albedo_s, roughness);
  for (std::size_t c = 0; c < C; ++c) out[c] = albedo_d[c] / kPi + spec;
  return out;
}

/// Orthonormal frame around n.
struct Frame {
  Vec3 t, b, n;
  explicit Frame(const Vec3& normal) : n(normal) {
    t = any_perpendicular_to(n);
    b = cross(n, t);
  }
  Frame(const Vec3& tangent, const Vec3& bitangent, const Vec3& normal) : t(tangent), b(bitangent), n(normal) {}
  Vec3 to_world(const Vec3& local) const { return t * local.x + b * local.y + n * local.z; }

  static Vec3 any_perpendicular_to(const Vec3& n) {
    const Vec3 a = std::abs(n.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    return normalize(cross(a, n));
  }
};

/// Cosine-weighted hemisphere direction (local frame, z up); pdf = cos/pi.
inline Vec3 sample_cosine_hemisphere(double u1, double u2) {
  const double r = std::sqrt(u1);
  const double phi = 2.0 * kPi * u2;
  return {r * std::cos(phi), r * std::sin(phi), std::sqrt(std::max(0.0, 1.0 - u1))};
}

/// GGX half-vector sample (local frame); pdf_h = D(h) (n.h).
inline Vec3 sample_ggx_half(double u1, double u2, double alpha) {
  const double cos2 = (1.0 - u1) / (1.0 + (alpha * alpha - 1.0) * u1);
  const double cos_t = std::sqrt(std::max(0.0, cos2));
  const double sin_t = std::sqrt(std::max(0.0, 1.0 - cos2));
  const double phi = 2.0 * kPi * u2;
  return {sin_t * std::cos(phi), sin_t * std::sin(phi), cos_t};
}

inline Vec3 reflect(const Vec3& v, const Vec3& h) { return h * (2.0 * dot(v, h)) - v; }

}  // namespace nirvis
