// VIS -> NIR reflectance transformation.
//
// Normals: the Gaussian width sigma that best maps green-band normals onto
// red-band normals is fitted, scaled by (w_nir - w_green) / (w_red - w_green)
// and applied to the VIS normals. Diffuse: the red albedo channel is
// edge-preserving (bilateral) filtered. Specular albedo is kept; the scalar
// roughness is lowered in proportion to the distance of w_nir from the
// centre of the visible band.
//
// All widths are in texels of the map being filtered.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nirvis/texmaps.hpp"

namespace nirvis {

struct WavelengthConfig {
  double w_green = 550.0;  // nm
  double w_red = 650.0;
  double w_nir = 850.0;
  double vis_lo = 380.0;
  double vis_hi = 700.0;

  void validate() const {
    require(w_red != w_green, "WavelengthConfig: w_red equals w_green (degenerate scaling)");
    require(w_green < w_red && w_red < w_nir, "WavelengthConfig: expected w_green < w_red < w_nir");
    require(vis_lo < vis_hi, "WavelengthConfig: visible band must satisfy lo < hi");
  }

  /// Multiplier from the fitted green->red width to the NIR blur width.
  double blur_scale() const {
    require(w_red != w_green, "WavelengthConfig: w_red equals w_green (degenerate scaling)");
    return (w_nir - w_green) / (w_red - w_green);
  }
  double vis_mid() const { return 0.5 * (vis_lo + vis_hi); }
};

enum class Spectrum { vis, nir };

inline const char* to_string(Spectrum s) { return s == Spectrum::vis ? "VIS" : "NIR"; }
inline Spectrum parse_spectrum(const std::string& s) {
  if (s == "VIS") return Spectrum::vis;
  if (s == "NIR") return Spectrum::nir;
  throw Error("unknown spectrum tag '" + s + "' (expected VIS or NIR)");
}

/// One identity's renderable reflectance.
struct ReflectanceSet {
  TextureMap diffuse_albedo;   // 3 channels (VIS) or 1 (NIR)
  TextureMap specular_albedo;  // 1 channel
  NormalMap normals;
  double roughness = 0.5;  // (0, 1]
  Spectrum spectrum = Spectrum::vis;

  void validate() const {
    validate_albedo(diffuse_albedo, "diffuse_albedo");
    validate_albedo(specular_albedo, "specular_albedo");
    require(specular_albedo.channels() == 1, "ReflectanceSet: specular albedo must have 1 channel");
    require(spectrum == Spectrum::vis ? diffuse_albedo.channels() == 3 : diffuse_albedo.channels() == 1,
            std::string("ReflectanceSet: ") + to_string(spectrum) + " diffuse albedo has wrong channel count");
    require(diffuse_albedo.same_size(specular_albedo) && diffuse_albedo.same_size(normals.base),
            "ReflectanceSet: maps must share width and height");
    require(roughness > 0.0 && roughness <= 1.0, "ReflectanceSet: roughness must lie in (0, 1]");
  }

  std::uint64_t checksum() const {
    Fnv1a h;
    diffuse_albedo.hash_into(h);
    specular_albedo.hash_into(h);
    normals.base.hash_into(h);
    h.update_value(roughness);
    h.update_value(static_cast<int>(spectrum));
    return h.digest();
  }

  bool operator==(const ReflectanceSet& o) const {
    return diffuse_albedo == o.diffuse_albedo && specular_albedo == o.specular_albedo &&
           normals == o.normals && roughness == o.roughness && spectrum == o.spectrum;
  }
};

inline constexpr double kMinRoughness = 0.01;
inline constexpr double kSigmaMaxAt1024 = 16.0;

/// Default upper end of the width search for a map of the given size.
/// Proportional to resolution but never below 8 texels.
inline double default_sigma_max(int width, int height) {
  return std::max(8.0, kSigmaMaxAt1024 * std::max(width, height) / 1024.0);
}

/// ‖n_red - renormalize(blur(n_green, sigma))‖₂ over all texels.
inline double normals_fit_residual(const NormalMap& n_green, const NormalMap& n_red, double sigma) {
  const NormalMap blurred = blur_normals(n_green, sigma);
  double acc = 0;
  const auto a = n_red.base.data();
  const auto b = blurred.base.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

struct SigmaFit {
  double sigma = 0;
  double residual = 0;
};

/// Width minimizing normals_fit_residual over [0, sigma_max]: a coarse scan
/// brackets the minimum, golden-section search refines it to `tol` texels.
inline SigmaFit fit_sigma_detailed(const NormalMap& n_green, const NormalMap& n_red,
                                   std::optional<double> sigma_max = std::nullopt, double tol = 1e-3) {
  require(n_green.base.same_shape(n_red.base), "fit_sigma: normal maps differ in dimensions");
  const double hi = sigma_max.value_or(default_sigma_max(n_green.width(), n_green.height()));
  require(hi > 0, "fit_sigma: sigma_max must be positive");
  auto f = [&](double s) { return normals_fit_residual(n_green, n_red, s); };

  constexpr int kScan = 32;
  const double step = hi / kScan;
  int best = 0;
  double best_val = f(0.0);
  for (int i = 1; i <= kScan; ++i) {
    const double v = f(i * step);
    if (v < best_val) {
      best_val = v;
      best = i;
    }
  }

  double a = std::max(0.0, (best - 1) * step);
  double b = std::min(hi, (best + 1) * step);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  SigmaFit fit{0.5 * (a + b), 0.0};
  fit.residual = f(fit.sigma);
  // The scan may already hold a better point (e.g. the sigma = 0 endpoint).
  if (best_val <= fit.residual) fit = {best * step, best_val};
  return fit;
}

inline double fit_sigma(const NormalMap& n_green, const NormalMap& n_red,
                        std::optional<double> sigma_max = std::nullopt) {
  return fit_sigma_detailed(n_green, n_red, sigma_max).sigma;
}

/// NIR normals: VIS normals blurred by blur_scale() * sigma, renormalized.
inline NormalMap nir_normals(const NormalMap& n_vis, double sigma, const WavelengthConfig& wl) {
  require(sigma >= 0, "nir_normals: sigma must be >= 0");
  return blur_normals(n_vis, wl.blur_scale() * sigma);
}

/// NIR diffuse albedo: bilateral-filtered red channel of the VIS albedo.
inline TextureMap nir_diffuse(const TextureMap& a_d_vis, double sigma_space, double sigma_range) {
  require(a_d_vis.channels() == 3, "nir_diffuse: VIS diffuse albedo must have 3 channels");
  validate_albedo(a_d_vis, "nir_diffuse");
  return bilateral_filter(a_d_vis.channel(0), sigma_space, sigma_range);
}

inline double nir_roughness(double roughness_vis, const WavelengthConfig& wl, double k_rough) {
  require(roughness_vis > 0 && roughness_vis <= 1, "nir_specular: roughness must lie in (0, 1]");
  require(k_rough >= 0, "nir_specular: k_rough must be >= 0");
  const double w_mid = wl.vis_mid();
  const double factor = 1.0 - k_rough * (wl.w_nir - w_mid) / w_mid;
  return std::clamp(roughness_vis * factor, kMinRoughness, 1.0);
}

/// Specular albedo is passed through unchanged; roughness is rescaled.
inline std::pair<TextureMap, double> nir_specular(const TextureMap& a_s_vis, double roughness_vis,
                                                  const WavelengthConfig& wl, double k_rough) {
  return {a_s_vis, nir_roughness(roughness_vis, wl, k_rough)};
}

struct TransformParams {
  double sigma = 1.0;  ///< fitted green->red width (texels)
  double k_rough = 0.25;
  double sigma_range = 0.1;
  /// Bilateral spatial width; defaults to the scaled normals width.
  std::optional<double> sigma_space;

  double resolved_sigma_space(const WavelengthConfig& wl) const {
    return sigma_space.value_or(wl.blur_scale() * sigma);
  }
};

/// Applies the full VIS -> NIR transformation. Deterministic and free of any
/// cross-identity input.
inline ReflectanceSet transform_assets(const ReflectanceSet& r_vis, const WavelengthConfig& wl,
                                       const TransformParams& params) {
  require(r_vis.spectrum == Spectrum::vis, "transform_assets: input reflectance must be VIS");
  r_vis.validate();
  wl.validate();

  ReflectanceSet out;
  out.spectrum = Spectrum::nir;
  const double sigma_space = params.resolved_sigma_space(wl);
  // A zero spatial width degenerates to the unfiltered red channel.
  out.diffuse_albedo = sigma_space > 0 ? nir_diffuse(r_vis.diffuse_albedo, sigma_space, params.sigma_range)
                                       : r_vis.diffuse_albedo.channel(0);
  auto [spec, rough] = nir_specular(r_vis.specular_albedo, r_vis.roughness, wl, params.k_rough);
  out.specular_albedo = std::move(spec);
  out.roughness = rough;
  out.normals = nir_normals(r_vis.normals, params.sigma, wl);
  out.validate();
  return out;
}

}  // namespace nirvis
