// Seeded procedural stand-ins for scanned identities and HDR scenes, so the
// pipeline can run without external assets.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>

#include "nirvis/environment.hpp"
#include "nirvis/mesh.hpp"
#include "nirvis/nir_transform.hpp"

namespace nirvis {

struct ProceduralIdentity {
  Mesh mesh;
  ReflectanceSet vis;
  /// Red-channel normals: the VIS normals blurred by `red_sigma`.
  NormalMap normals_red;
  double red_sigma = 0;
};

namespace detail {

/// Smooth field in [0, 1]: white noise blurred at `sigma` then min-max scaled.
inline TextureMap smooth_noise(Rng& rng, int w, int h, double sigma) {
  TextureMap m(w, h, 1);
  for (float& v : m.data()) v = static_cast<float>(rng.uniform());
  m = gaussian_blur(m, sigma);
  const float lo = m.min_value(), hi = m.max_value();
  const float span = hi > lo ? hi - lo : 1.0f;
  for (float& v : m.data()) v = (v - lo) / span;
  return m;
}

}  // namespace detail

/// Random unit normals around +z: tilts drawn from a blurred height field.
inline NormalMap random_normal_map(std::uint64_t seed, int width, int height, double bump = 2.0,
                                   double feature_sigma = 0.0) {
  Rng rng(seed);
  TextureMap hf(width, height, 1);
  for (float& v : hf.data()) v = static_cast<float>(rng.normal());
  if (feature_sigma > 0) hf = gaussian_blur(hf, feature_sigma);
  TextureMap n(width, height, 3);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double dx = 0.5 * (hf.clamped(x + 1, y) - hf.clamped(x - 1, y));
      const double dy = 0.5 * (hf.clamped(x, y + 1) - hf.clamped(x, y - 1));
      const Vec3 v = normalize(Vec3{-bump * dx, -bump * dy, 1.0});
      n.at(x, y, 0) = static_cast<float>(v.x);
      n.at(x, y, 1) = static_cast<float>(v.y);
      n.at(x, y, 2) = static_cast<float>(v.z);
    }
  return renormalize_normals(NormalMap(std::move(n)));
}

struct ProceduralOptions {
  int texture_size = 64;
  int segments = 48;
  int rings = 24;
  double red_sigma = 1.0;  ///< width relating the red normals to the VIS normals
};

/// One synthetic identity: ellipsoidal head with skin-like albedo, a darker
/// brow/eye band, fine bump normals and a scalar roughness.
inline ProceduralIdentity make_procedural_identity(std::uint64_t seed, const ProceduralOptions& opt = {}) {
  require(opt.texture_size >= 4, "make_procedural_identity: texture size too small");
  require(opt.red_sigma >= 0, "make_procedural_identity: negative red sigma");
  Rng rng(hash_combine(seed, 0x1D3u));
  const int n = opt.texture_size;
  ProceduralIdentity id;

  const Vec3 radii{0.75 + 0.1 * rng.uniform(), 0.95 + 0.1 * rng.uniform(), 0.8 + 0.1 * rng.uniform()};
  id.mesh = make_uv_ellipsoid(radii, opt.segments, opt.rings);

  const double r = rng.uniform(0.55, 0.85);
  const double g = r * rng.uniform(0.6, 0.8);
  const double b = g * rng.uniform(0.7, 0.9);
  const double band_v = rng.uniform(0.5, 0.6);
  const double band_half = rng.uniform(0.03, 0.06);
  const double band_depth = rng.uniform(0.3, 0.6);
  const TextureMap tone = detail::smooth_noise(rng, n, n, n / 16.0);
  const TextureMap speck = detail::smooth_noise(rng, n, n, n / 32.0);

  TextureMap diffuse(n, n, 3);
  TextureMap specular(n, n, 1);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double u = (x + 0.5) / n, v = (y + 0.5) / n;
      double shade = 0.85 + 0.3 * tone.at(x, y);
      // The face looks along +z, which sits at u = 0.5.
      if (std::abs(v - band_v) < band_half && std::abs(u - 0.5) < 0.12) shade *= 1.0 - band_depth;
      const double rgb[3] = {r, g, b};
      for (int c = 0; c < 3; ++c) diffuse.at(x, y, c) = static_cast<float>(std::clamp(rgb[c] * shade, 0.0, 1.0));
      specular.at(x, y) = static_cast<float>(0.03 + 0.05 * speck.at(x, y));
    }

  id.vis.diffuse_albedo = std::move(diffuse);
  id.vis.specular_albedo = std::move(specular);
  id.vis.normals = random_normal_map(rng.next_u64(), n, n, 1.5, 0.7);
  id.vis.roughness = rng.uniform(0.35, 0.6);
  id.vis.spectrum = Spectrum::vis;
  id.vis.validate();
  id.red_sigma = opt.red_sigma;
  id.normals_red = blur_normals(id.vis.normals, opt.red_sigma);
  return id;
}

/// Outdoor-like HDR scene: sky gradient, darker ground, and a bright sun lobe
/// at a random direction above the horizon.
inline EnvironmentMap make_procedural_env(std::uint64_t seed, int width = 64) {
  require(width >= 4 && width % 2 == 0, "make_procedural_env: width must be even and >= 4");
  Rng rng(hash_combine(seed, 0xE7Fu));
  const int height = width / 2;
  const double sun_az = rng.uniform(0, 2 * kPi);
  const double sun_el = rng.uniform(0.15, 1.2);
  const Vec3 sun{std::cos(sun_el) * std::sin(sun_az), std::sin(sun_el), std::cos(sun_el) * std::cos(sun_az)};
  const double sun_power = rng.uniform(2.0, 6.0);
  const double sky[3] = {rng.uniform(0.25, 0.45), rng.uniform(0.35, 0.55), rng.uniform(0.55, 0.85)};
  const double ground[3] = {rng.uniform(0.1, 0.25), rng.uniform(0.08, 0.2), rng.uniform(0.05, 0.15)};
  const double warm[3] = {1.0, 0.9, 0.75};

  TextureMap m(width, height, 3);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const Vec3 d = direction_from_uv((x + 0.5) / width, (y + 0.5) / height);
      const double lobe = sun_power * std::exp((dot(d, sun) - 1.0) / 0.02);
      for (int c = 0; c < 3; ++c) {
        const double base = d.y >= 0 ? sky[c] * (0.6 + 0.4 * d.y) : ground[c];
        m.at(x, y, c) = static_cast<float>(base + lobe * warm[c]);
      }
    }
  return EnvironmentMap(std::move(m), EnvKind::scene);
}

}  // namespace nirvis
