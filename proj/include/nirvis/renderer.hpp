// Rasterizing renderer with Monte-Carlo image-based lighting.
//
// Each covered pixel integrates the GGX BRDF against the (yaw-rotated)
// environment: stratified cosine-weighted samples for the diffuse lobe and
// GGX half-vector samples for the specular lobe. Direct lighting only, no
// shadows or interreflection. Per-pixel random streams are keyed by
// (seed, stream, pixel), so images do not depend on the worker count.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <thread>
#include <vector>

#include "nirvis/brdf.hpp"
#include "nirvis/environment.hpp"
#include "nirvis/mesh.hpp"
#include "nirvis/nir_transform.hpp"

namespace nirvis {

/// Pinhole camera on +z at `distance` from the origin, looking down -z.
struct Camera {
  int width = 128;
  int height = 128;
  double focal = 160.0;  // pixels
  double cx = 64.0;
  double cy = 64.0;
  double distance = 4.0;

  static Camera framing(int width, int height, double distance, double half_extent) {
    Camera c;
    c.width = width;
    c.height = height;
    c.distance = distance;
    c.cx = 0.5 * width;
    c.cy = 0.5 * height;
    // Fit a disc of radius half_extent at the origin into the shorter side.
    c.focal = 0.5 * std::min(width, height) * (distance - half_extent) / half_extent;
    return c;
  }

  void validate() const {
    require(focal > 0, "Camera: focal length must be positive");
    require(width >= 1 && height >= 1, "Camera: image size must be at least 1x1");
    require(distance > 0, "Camera: distance must be positive");
  }
  Vec3 position() const { return {0, 0, distance}; }
};

struct PoseSample {
  Mat3 rotation;
  int env_index = 0;
  double env_yaw_deg = 0;
  // Head rotation angles that produced `rotation` (degrees).
  double yaw_deg = 0, pitch_deg = 0, roll_deg = 0;

  bool operator==(const PoseSample& o) const {
    return rotation.m == o.rotation.m && env_index == o.env_index && env_yaw_deg == o.env_yaw_deg &&
           yaw_deg == o.yaw_deg && pitch_deg == o.pitch_deg && roll_deg == o.roll_deg;
  }
};

inline Mat3 head_rotation(double yaw_deg, double pitch_deg, double roll_deg) {
  return rotation_y(deg_to_rad(yaw_deg)) * rotation_x(deg_to_rad(pitch_deg)) * rotation_z(deg_to_rad(roll_deg));
}

struct PoseLimits {
  double yaw = 45, pitch = 15, roll = 10;  // +/- degrees
};

struct RenderQuality {
  int spp = 64;  ///< samples per lobe per pixel
  int jobs = 1;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;  ///< e.g. pair index
};

namespace detail {

struct Fragment {
  int tri = -1;
  double b0 = 0, b1 = 0, b2 = 0;  // perspective-correct barycentrics
};

inline std::vector<Fragment> rasterize(const std::vector<Vec3>& verts, const Mesh& mesh, const Camera& cam) {
  std::vector<Fragment> frags(static_cast<std::size_t>(cam.width) * cam.height);
  std::vector<double> depth(frags.size(), std::numeric_limits<double>::infinity());

  struct Projected {
    double x, y, inv_z;
  };
  std::vector<Projected> proj(verts.size());
  for (std::size_t i = 0; i < verts.size(); ++i) {
    const double zc = cam.distance - verts[i].z;
    require(zc > 1e-9, "render: geometry behind the camera");
    proj[i] = {cam.cx + cam.focal * verts[i].x / zc, cam.cy - cam.focal * verts[i].y / zc, 1.0 / zc};
  }

  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Projected &p0 = proj[tri[0]], &p1 = proj[tri[1]], &p2 = proj[tri[2]];
    const double area = (p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y);
    if (std::abs(area) < 1e-12) continue;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({p0.x, p1.x, p2.x}))));
    const int x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(std::max({p0.x, p1.x, p2.x}))));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({p0.y, p1.y, p2.y}))));
    const int y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(std::max({p0.y, p1.y, p2.y}))));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        const double w0 = ((p1.x - px) * (p2.y - py) - (p2.x - px) * (p1.y - py)) / area;
        const double w1 = ((p2.x - px) * (p0.y - py) - (p0.x - px) * (p2.y - py)) / area;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < 0 || w1 < 0 || w2 < 0) continue;
        const double inv_z = w0 * p0.inv_z + w1 * p1.inv_z + w2 * p2.inv_z;
        const double z = 1.0 / inv_z;
        const std::size_t idx = static_cast<std::size_t>(y) * cam.width + x;
        if (z >= depth[idx]) continue;
        depth[idx] = z;
        frags[idx] = {static_cast<int>(t), w0 * p0.inv_z * z, w1 * p1.inv_z * z, w2 * p2.inv_z * z};
      }
  }
  return frags;
}

/// Stratified 2-D point i of n (jittered grid when n is a square, else
/// stratified along the first axis).
inline void stratified(int i, int n, double j1, double j2, double& u1, double& u2) {
  const int s = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
  if (s * s == n) {
    u1 = ((i % s) + j1) / s;
    u2 = ((i / s) + j2) / s;
  } else {
    u1 = (i + j1) / n;
    u2 = j2;
  }
}

template <int C>
TextureMap render_image(const Mesh& mesh, const ReflectanceSet& r, const PoseSample& pose, const EnvironmentMap& env,
                        const Camera& cam, const RenderQuality& quality) {
  cam.validate();
  mesh.validate();
  r.validate();
  require(quality.spp >= 1, "render: spp must be >= 1");
  require(env.channels() == C, "render: environment channel count mismatch");
  require(r.diffuse_albedo.channels() == C, "render: reflectance channel count mismatch");

  const EnvironmentMap lit = rotate_env(env, pose.env_yaw_deg);
  std::vector<Vec3> verts(mesh.vertices.size()), nrm(mesh.vertices.size()), tan(mesh.vertices.size());
  for (std::size_t i = 0; i < verts.size(); ++i) {
    verts[i] = pose.rotation * mesh.vertices[i];
    nrm[i] = pose.rotation * mesh.normals[i];
    tan[i] = pose.rotation * mesh.tangents[i];
  }
  const auto frags = rasterize(verts, mesh, cam);
  const std::uint64_t key = hash_combine(hash_combine(quality.seed, quality.stream), 0x52454e44ull);
  const Vec3 eye = cam.position();
  const double alpha = ggx_alpha(r.roughness);
  const int spp = quality.spp;

  TextureMap out(cam.width, cam.height, C);
  auto shade_row = [&](int y) {
    for (int x = 0; x < cam.width; ++x) {
      const std::size_t pix = static_cast<std::size_t>(y) * cam.width + x;
      const Fragment& f = frags[pix];
      if (f.tri < 0) continue;
      const auto& tri = mesh.triangles[f.tri];
      const Vec3 p = verts[tri[0]] * f.b0 + verts[tri[1]] * f.b1 + verts[tri[2]] * f.b2;
      const Vec3 ng = normalize(nrm[tri[0]] * f.b0 + nrm[tri[1]] * f.b1 + nrm[tri[2]] * f.b2);
      Vec3 tg = tan[tri[0]] * f.b0 + tan[tri[1]] * f.b1 + tan[tri[2]] * f.b2;
      tg = tg - ng * dot(ng, tg);
      tg = length(tg) > 1e-12 ? normalize(tg) : Frame::any_perpendicular_to(ng);
      const double sign = mesh.bitangent_sign[tri[0]];
      const Vec3 bt = cross(ng, tg) * sign;
      const double u = mesh.uvs[tri[0]].u * f.b0 + mesh.uvs[tri[1]].u * f.b1 + mesh.uvs[tri[2]].u * f.b2;
      const double v = 1.0 - (mesh.uvs[tri[0]].v * f.b0 + mesh.uvs[tri[1]].v * f.b1 + mesh.uvs[tri[2]].v * f.b2);

      const Vec3 nts{sample_bilinear(r.normals.base, u, v, 0), sample_bilinear(r.normals.base, u, v, 1),
                     sample_bilinear(r.normals.base, u, v, 2)};
      Vec3 ns = tg * nts.x + bt * nts.y + ng * nts.z;
      ns = length(ns) > 1e-12 ? normalize(ns) : ng;
      std::array<double, C> albedo_d{};
      for (int c = 0; c < C; ++c) albedo_d[c] = sample_bilinear(r.diffuse_albedo, u, v, c);
      const double albedo_s = sample_bilinear(r.specular_albedo, u, v, 0);

      const Vec3 wo = normalize(eye - p);
      const double nv = dot(ns, wo);
      const Frame frame(ns);
      const CounterRng rng(hash_combine(key, pix));

      std::array<double, C> diffuse{}, specular{};
      for (int i = 0; i < spp; ++i) {
        const std::uint64_t base = 4ull * static_cast<std::uint64_t>(i);
        double u1, u2;
        stratified(i, spp, rng.uniform(base), rng.uniform(base + 1), u1, u2);
        const Vec3 wi = frame.to_world(sample_cosine_hemisphere(u1, u2));
        const auto radiance = env_lookup<C>(lit, wi);
        for (int c = 0; c < C; ++c) diffuse[c] += radiance[c];

        if (albedo_s > 0 && nv > 0) {
          stratified(i, spp, rng.uniform(base + 2), rng.uniform(base + 3), u1, u2);
          const Vec3 h = frame.to_world(sample_ggx_half(u1, u2, alpha));
          const Vec3 wl = reflect(wo, h);
          const double nl = dot(ns, wl), nh = dot(ns, h), vh = dot(wo, h);
          if (nl > 0 && nh > 0 && vh > 0) {
            const double weight = smith_g2(nv, nl, alpha) * schlick_fresnel(albedo_s, vh) * vh /
                                  (std::max(nv, kGrazingFloor) * nh);
            const auto rad = env_lookup<C>(lit, wl);
            for (int c = 0; c < C; ++c) specular[c] += weight * rad[c];
          }
        }
      }
      for (int c = 0; c < C; ++c)
        out.at(x, y, c) = static_cast<float>((albedo_d[c] * diffuse[c] + specular[c]) / spp);
    }
  };

  const int jobs = std::max(1, std::min(quality.jobs, cam.height));
  if (jobs == 1) {
    for (int y = 0; y < cam.height; ++y) shade_row(y);
  } else {
    std::vector<std::thread> workers;
    for (int j = 0; j < jobs; ++j)
      workers.emplace_back([&, j] {
        for (int y = j; y < cam.height; y += jobs) shade_row(y);
      });
    for (auto& w : workers) w.join();
  }
  return out;
}

}  // namespace detail

/// 3-channel VIS rendering.
inline TextureMap render_vis(const Mesh& mesh, const ReflectanceSet& r, const PoseSample& pose,
                             const EnvironmentMap& e, const Camera& cam, const RenderQuality& quality) {
  require(r.spectrum == Spectrum::vis, "render_vis: reflectance must be VIS");
  require(e.channels() == 3, "render_vis: environment must have 3 channels");
  return detail::render_image<3>(mesh, r, pose, e, cam, quality);
}

/// 1-channel NIR rendering; same light transport as render_vis.
inline TextureMap render_nir(const Mesh& mesh, const ReflectanceSet& r, const PoseSample& pose,
                             const EnvironmentMap& e_nir, const Camera& cam, const RenderQuality& quality) {
  require(r.spectrum == Spectrum::nir, "render_nir: reflectance must be NIR");
  require(e_nir.channels() == 1, "render_nir: environment must have 1 channel");
  return detail::render_image<1>(mesh, r, pose, e_nir, cam, quality);
}

inline constexpr int kDefaultPairsPerIdentity = 20;

/// Random environment choice, environment yaw in [0, 360) and head rotation
/// within +/- limits, one per pair. Deterministic per seed.
inline std::vector<PoseSample> sample_pose_env(std::uint64_t seed, int n_pairs, int env_count,
                                               const PoseLimits& limits = {}) {
  require(env_count >= 1, "sample_pose_env: need at least one environment");
  require(n_pairs >= 0, "sample_pose_env: negative pair count");
  Rng rng(seed);
  std::vector<PoseSample> out;
  out.reserve(n_pairs);
  for (int i = 0; i < n_pairs; ++i) {
    PoseSample s;
    s.env_index = static_cast<int>(rng.index(static_cast<std::uint64_t>(env_count)));
    s.env_yaw_deg = 360.0 * rng.uniform();
    s.yaw_deg = rng.uniform(-limits.yaw, limits.yaw);
    s.pitch_deg = rng.uniform(-limits.pitch, limits.pitch);
    s.roll_deg = rng.uniform(-limits.roll, limits.roll);
    s.rotation = head_rotation(s.yaw_deg, s.pitch_deg, s.roll_deg);
    out.push_back(s);
  }
  return out;
}

struct RenderedPair {
  int pair_index = 0;
  PoseSample pose;
  TextureMap vis;
  TextureMap nir;
  std::uint64_t nir_asset_checksum = 0;  ///< checksum of the NIR set actually used
};

struct PairSet {
  ReflectanceSet nir_assets;
  std::uint64_t nir_checksum = 0;
  std::vector<RenderedPair> pairs;
};

/// Renders one identity under every sample. The NIR reflectance is derived
/// once and shared by all pairs; VIS and NIR images of a pair share pose,
/// environment, yaw and random stream.
inline PairSet render_pair_set(const Mesh& mesh, const ReflectanceSet& r_vis, const WavelengthConfig& wl,
                               const TransformParams& params, const std::vector<PoseSample>& samples,
                               const std::vector<EnvironmentMap>& envs, const EnvironmentMap& e_flood,
                               const Camera& cam, const RenderQuality& quality) {
  require(!envs.empty(), "render_pair_set: no environments");
  PairSet set;
  set.nir_assets = transform_assets(r_vis, wl, params);
  set.nir_checksum = set.nir_assets.checksum();

  std::vector<EnvironmentMap> nir_envs;
  nir_envs.reserve(envs.size());
  for (const auto& e : envs) nir_envs.push_back(nir_env(e, e_flood));

  for (std::size_t j = 0; j < samples.size(); ++j) {
    const PoseSample& s = samples[j];
    require(s.env_index >= 0 && s.env_index < static_cast<int>(envs.size()), "render_pair_set: env index out of range");
    RenderQuality q = quality;
    q.stream = j;
    RenderedPair p;
    p.pair_index = static_cast<int>(j);
    p.pose = s;
    p.vis = render_vis(mesh, r_vis, s, envs[s.env_index], cam, q);
    p.nir = render_nir(mesh, set.nir_assets, s, nir_envs[s.env_index], cam, q);
    p.nir_asset_checksum = set.nir_assets.checksum();
    set.pairs.push_back(std::move(p));
  }
  return set;
}

}  // namespace nirvis
