// Equirectangular environment maps.
//
// Direction convention (y up, camera on +z looking toward -z):
//   u = atan2(d.x, d.z) / 2pi + 1/2,   v = acos(d.y) / pi
// so the camera-facing direction +z sits at the image centre and row 0 is
// straight up.
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include "nirvis/texmaps.hpp"

namespace nirvis {

enum class EnvKind { scene, flood, composite };

struct EnvironmentMap {
  TextureMap map;
  EnvKind kind = EnvKind::scene;

  EnvironmentMap() = default;
  explicit EnvironmentMap(TextureMap m, EnvKind k = EnvKind::scene) : map(std::move(m)), kind(k) {
    require(map.width() == 2 * map.height(), "EnvironmentMap: equirectangular maps need width = 2 x height");
    require(map.min_value() >= 0.0f && map.all_finite(), "EnvironmentMap: radiance must be finite and >= 0");
  }

  int width() const { return map.width(); }
  int height() const { return map.height(); }
  int channels() const { return map.channels(); }
};

inline Vec3 direction_from_uv(double u, double v) {
  const double phi = (u - 0.5) * 2.0 * kPi;
  const double theta = v * kPi;
  return {std::sin(theta) * std::sin(phi), std::cos(theta), std::sin(theta) * std::cos(phi)};
}

inline void uv_from_direction(const Vec3& d, double& u, double& v) {
  u = std::atan2(d.x, d.z) / (2.0 * kPi) + 0.5;
  v = std::acos(std::clamp(d.y, -1.0, 1.0)) / kPi;
}

/// Solid angle covered by texel row y.
inline double texel_solid_angle(int y, int width, int height) {
  const double t0 = kPi * y / height, t1 = kPi * (y + 1) / height;
  return (2.0 * kPi / width) * (std::cos(t0) - std::cos(t1));
}

/// Bilinear radiance lookup, wrapping in u and clamping in v.
template <int C>
std::array<double, C> env_lookup(const EnvironmentMap& e, const Vec3& dir) {
  double u, v;
  uv_from_direction(dir, u, v);
  const int w = e.width(), h = e.height();
  const double fx = u * w - 0.5, fy = v * h - 0.5;
  const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
  const double tx = fx - x0, ty = fy - y0;
  auto wrap = [w](int x) { return ((x % w) + w) % w; };
  const int xa = wrap(x0), xb = wrap(x0 + 1);
  const int ya = std::clamp(y0, 0, h - 1), yb = std::clamp(y0 + 1, 0, h - 1);
  std::array<double, C> out{};
  for (int c = 0; c < C; ++c) {
    const double a = e.map.at(xa, ya, c) * (1 - tx) + e.map.at(xb, ya, c) * tx;
    const double b = e.map.at(xa, yb, c) * (1 - tx) + e.map.at(xb, yb, c) * tx;
    out[c] = a * (1 - ty) + b * ty;
  }
  return out;
}

/// Solid-angle weighted sum of radiance per channel (total power proxy).
inline std::vector<double> env_power(const EnvironmentMap& e) {
  std::vector<double> p(e.channels(), 0.0);
  for (int y = 0; y < e.height(); ++y) {
    const double dw = texel_solid_angle(y, e.width(), e.height());
    for (int x = 0; x < e.width(); ++x)
      for (int c = 0; c < e.channels(); ++c) p[c] += dw * e.map.at(x, y, c);
  }
  return p;
}

/// Rotation about +y: a cyclic horizontal shift by yaw/360 of the width with
/// linear interpolation for fractional shifts.
inline EnvironmentMap rotate_env(const EnvironmentMap& e, double yaw_deg) {
  const int w = e.width();
  double shift = std::fmod(yaw_deg / 360.0 * w, static_cast<double>(w));
  if (shift < 0) shift += w;
  if (shift == 0.0) return e;
  const int whole = static_cast<int>(std::floor(shift));
  const double frac = shift - whole;
  TextureMap out(w, e.height(), e.channels());
  for (int y = 0; y < e.height(); ++y)
    for (int x = 0; x < w; ++x) {
      // out(x) = in(x - shift)
      const int xa = ((x - whole) % w + w) % w;
      const int xb = ((x - whole - 1) % w + w) % w;
      for (int c = 0; c < e.channels(); ++c) {
        const double v = frac == 0.0 ? e.map.at(xa, y, c) : (1.0 - frac) * e.map.at(xa, y, c) + frac * e.map.at(xb, y, c);
        out.at(x, y, c) = static_cast<float>(v);
      }
    }
  return EnvironmentMap(std::move(out), e.kind);
}

/// Flood illuminator: a disk of constant radiance centred on the direction
/// toward the camera. Texels straddling the rim get their covered fraction
/// (4x4 supersampled). `resolution` is the map width.
inline EnvironmentMap make_flood_env(double intensity, double angular_radius_deg, int resolution) {
  require(intensity > 0, "make_flood_env: intensity must be positive");
  require(angular_radius_deg > 0 && angular_radius_deg <= 90, "make_flood_env: angular radius must be in (0, 90]");
  require(resolution >= 2 && resolution % 2 == 0, "make_flood_env: resolution must be an even width >= 2");
  const int w = resolution, h = resolution / 2;
  const double cos_r = std::cos(deg_to_rad(angular_radius_deg));
  const Vec3 toward_camera{0, 0, 1};
  constexpr int kSub = 4;
  TextureMap m(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int inside = 0;
      for (int j = 0; j < kSub; ++j)
        for (int i = 0; i < kSub; ++i) {
          const Vec3 d = direction_from_uv((x + (i + 0.5) / kSub) / w, (y + (j + 0.5) / kSub) / h);
          inside += dot(d, toward_camera) >= cos_r;
        }
      m.at(x, y) = static_cast<float>(intensity * inside / (kSub * kSub));
    }
  return EnvironmentMap(std::move(m), EnvKind::flood);
}

/// Disk radiance for which a frontal albedo-1 Lambertian patch lit only by the
/// flood renders at `target` (irradiance of a cap of radius r is L pi sin^2 r).
inline double flood_intensity_for(double target, double angular_radius_deg) {
  const double s = std::sin(deg_to_rad(angular_radius_deg));
  return target / (s * s);
}

inline constexpr double kLumR = 0.2126, kLumG = 0.7152, kLumB = 0.0722;

/// Rec. 709 luminance as a 1-channel map (1-channel input passes through).
inline EnvironmentMap luminance_env(const EnvironmentMap& e) {
  if (e.channels() == 1) return e;
  TextureMap out(e.width(), e.height(), 1);
  for (int y = 0; y < e.height(); ++y)
    for (int x = 0; x < e.width(); ++x)
      out.at(x, y) = static_cast<float>(kLumR * e.map.at(x, y, 0) + kLumG * e.map.at(x, y, 1) +
                                        kLumB * e.map.at(x, y, 2));
  return EnvironmentMap(std::move(out), e.kind);
}

/// NIR illumination: luminance(e) + flood.
inline EnvironmentMap nir_env(const EnvironmentMap& e, const EnvironmentMap& e_flood) {
  require(e_flood.channels() == 1 && e_flood.kind == EnvKind::flood, "nir_env: second map must be a 1-channel flood map");
  require(e.width() == e_flood.width() && e.height() == e_flood.height(),
          "nir_env: resolution mismatch (" + std::to_string(e.width()) + "x" + std::to_string(e.height()) + " vs " +
              std::to_string(e_flood.width()) + "x" + std::to_string(e_flood.height()) + "); resample upstream");
  EnvironmentMap lum = luminance_env(e);
  TextureMap out(e.width(), e.height(), 1);
  for (std::size_t i = 0; i < out.texel_count(); ++i) out.data()[i] = lum.map.data()[i] + e_flood.map.data()[i];
  return EnvironmentMap(std::move(out), EnvKind::composite);
}

/// Texel-wise a*E1 + b*E2 (same shape).
inline EnvironmentMap combine_env(const EnvironmentMap& e1, double a, const EnvironmentMap& e2, double b) {
  require(e1.map.same_shape(e2.map), "combine_env: shape mismatch");
  TextureMap out(e1.width(), e1.height(), e1.channels());
  for (std::size_t i = 0; i < out.data().size(); ++i)
    out.data()[i] = static_cast<float>(a * e1.map.data()[i] + b * e2.map.data()[i]);
  return EnvironmentMap(std::move(out), EnvKind::composite);
}

inline EnvironmentMap constant_env(int width, int channels, float value) {
  return EnvironmentMap(TextureMap(width, width / 2, channels, value));
}

}  // namespace nirvis
