// Pipeline configuration: one JSON file, every field optional. Unknown keys
// are rejected so typos surface instead of silently falling back to defaults.
#pragma once

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "nirvis/metrics.hpp"
#include "nirvis/renderer.hpp"
#include "nirvis/toytrain.hpp"

namespace nirvis {

using Json = nlohmann::json;

/// Environment variable naming a default config file.
inline constexpr const char* kConfigEnvVar = "NIRVIS_CONFIG";

struct FloodParams {
  double radius_deg = 15.0;
  double target = 0.75;  ///< frontal albedo-1 Lambertian response
  std::optional<double> intensity;  ///< overrides `target` when set

  double resolved_intensity() const { return intensity.value_or(flood_intensity_for(target, radius_deg)); }
};

struct RenderParams {
  int width = 128;
  int height = 128;
  int spp = 64;  ///< per lobe
  double camera_distance = 4.0;
  double half_extent = 1.15;  ///< object radius to frame
  double exposure = 1.0;      ///< scale applied before 16-bit quantization
  bool float_sidecar = false;

  Camera camera() const { return Camera::framing(width, height, camera_distance, half_extent); }
};

struct TransformOptions {
  TransformParams params;
  bool fit_sigma = true;  ///< fit from normals_red when the bundle has it
  std::optional<double> sigma_max;
};

struct ToyParams {
  int num_ids = 10;
  int per_id = 8;
  int dim = 16;
  double modality_shift = 0.8;
  TrainConfig train;
};

struct EvalParams {
  int folds = 0;  ///< 0 = whole set only
  double train_fraction = 0.5;
  std::vector<double> far_targets = default_far_targets();
};

struct PipelineConfig {
  WavelengthConfig wavelengths;
  TransformOptions transform;
  FloodParams flood;
  PoseLimits pose_limits;
  RenderParams render;
  int pairs_per_identity = kDefaultPairsPerIdentity;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::filesystem::path out = "out";
  ToyParams toy;
  EvalParams eval;

  void validate() const {
    wavelengths.validate();
    require(pairs_per_identity >= 1, "config: pairs_per_identity must be >= 1");
    require(jobs >= 1, "config: jobs must be >= 1");
    require(render.spp >= 1, "config: render.spp must be >= 1");
    require(render.exposure > 0, "config: render.exposure must be positive");
    require(flood.radius_deg > 0 && flood.radius_deg <= 90, "config: flood.radius_deg must lie in (0, 90]");
    require(transform.params.sigma >= 0, "config: transform.sigma must be >= 0");
    require(transform.params.k_rough >= 0, "config: transform.k_rough must be >= 0");
    require(transform.params.sigma_range > 0, "config: transform.sigma_range must be positive");
    require(eval.folds >= 0, "config: eval.folds must be >= 0");
    render.camera().validate();
    toy.train.validate();
  }
};

namespace detail {

inline void check_keys(const Json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  require(j.is_object(), "config: '" + where + "' must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items())
    require(ok.count(key) != 0, "config: unknown key '" + (where.empty() ? key : where + "." + key) + "'");
}

template <class T>
void read(const Json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

template <class T>
void read(const Json& j, const char* key, std::optional<T>& out) {
  if (j.contains(key)) out = j.at(key).is_null() ? std::nullopt : std::optional<T>(j.at(key).get<T>());
}

}  // namespace detail

/// Overlays the fields present in `j` onto `cfg`.
inline void apply_config_json(PipelineConfig& cfg, const Json& j) {
  using detail::check_keys;
  using detail::read;
  check_keys(j, "", {"wavelengths", "transform", "flood", "pose_limits", "render", "pairs_per_identity", "seed",
                     "jobs", "out", "toy", "eval"});
  if (j.contains("wavelengths")) {
    const Json& w = j["wavelengths"];
    check_keys(w, "wavelengths", {"green", "red", "nir", "vis_band"});
    read(w, "green", cfg.wavelengths.w_green);
    read(w, "red", cfg.wavelengths.w_red);
    read(w, "nir", cfg.wavelengths.w_nir);
    if (w.contains("vis_band")) {
      const auto band = w["vis_band"].get<std::vector<double>>();
      require(band.size() == 2, "config: wavelengths.vis_band must be [lo, hi]");
      cfg.wavelengths.vis_lo = band[0];
      cfg.wavelengths.vis_hi = band[1];
    }
  }
  if (j.contains("transform")) {
    const Json& t = j["transform"];
    check_keys(t, "transform", {"sigma", "fit_sigma", "sigma_max", "k_rough", "sigma_range", "sigma_space"});
    read(t, "sigma", cfg.transform.params.sigma);
    read(t, "fit_sigma", cfg.transform.fit_sigma);
    read(t, "sigma_max", cfg.transform.sigma_max);
    read(t, "k_rough", cfg.transform.params.k_rough);
    read(t, "sigma_range", cfg.transform.params.sigma_range);
    read(t, "sigma_space", cfg.transform.params.sigma_space);
  }
  if (j.contains("flood")) {
    const Json& f = j["flood"];
    check_keys(f, "flood", {"radius_deg", "target", "intensity"});
    read(f, "radius_deg", cfg.flood.radius_deg);
    read(f, "target", cfg.flood.target);
    read(f, "intensity", cfg.flood.intensity);
  }
  if (j.contains("pose_limits")) {
    const Json& p = j["pose_limits"];
    check_keys(p, "pose_limits", {"yaw", "pitch", "roll"});
    read(p, "yaw", cfg.pose_limits.yaw);
    read(p, "pitch", cfg.pose_limits.pitch);
    read(p, "roll", cfg.pose_limits.roll);
  }
  if (j.contains("render")) {
    const Json& r = j["render"];
    check_keys(r, "render", {"width", "height", "spp", "camera_distance", "half_extent", "exposure", "float_sidecar"});
    read(r, "width", cfg.render.width);
    read(r, "height", cfg.render.height);
    read(r, "spp", cfg.render.spp);
    read(r, "camera_distance", cfg.render.camera_distance);
    read(r, "half_extent", cfg.render.half_extent);
    read(r, "exposure", cfg.render.exposure);
    read(r, "float_sidecar", cfg.render.float_sidecar);
  }
  read(j, "pairs_per_identity", cfg.pairs_per_identity);
  read(j, "seed", cfg.seed);
  read(j, "jobs", cfg.jobs);
  if (j.contains("out")) cfg.out = j["out"].get<std::string>();
  if (j.contains("toy")) {
    const Json& t = j["toy"];
    check_keys(t, "toy", {"num_ids", "per_id", "dim", "modality_shift", "lr", "momentum", "weight_decay",
                          "lr_decay_factor", "lr_decay_every", "epochs_pretrain", "epochs_finetune", "lambda", "p", "k",
                          "n_r", "n_s", "steps_per_epoch", "hidden", "embedding", "margin", "kernel"});
    read(t, "num_ids", cfg.toy.num_ids);
    read(t, "per_id", cfg.toy.per_id);
    read(t, "dim", cfg.toy.dim);
    read(t, "modality_shift", cfg.toy.modality_shift);
    TrainConfig& tc = cfg.toy.train;
    read(t, "lr", tc.lr);
    read(t, "momentum", tc.momentum);
    read(t, "weight_decay", tc.weight_decay);
    read(t, "lr_decay_factor", tc.lr_decay_factor);
    read(t, "lr_decay_every", tc.lr_decay_every);
    read(t, "epochs_pretrain", tc.epochs_pretrain);
    read(t, "epochs_finetune", tc.epochs_finetune);
    read(t, "lambda", tc.lambda);
    read(t, "p", tc.p);
    read(t, "k", tc.k);
    read(t, "n_r", tc.n_r);
    read(t, "n_s", tc.n_s);
    read(t, "steps_per_epoch", tc.steps_per_epoch);
    read(t, "hidden", tc.hidden);
    read(t, "embedding", tc.embedding);
    if (t.contains("margin")) {
      const Json& m = t["margin"];
      check_keys(m, "toy.margin", {"m1", "m2", "m3", "s"});
      read(m, "m1", tc.margin.m1);
      read(m, "m2", tc.margin.m2);
      read(m, "m3", tc.margin.m3);
      read(m, "s", tc.margin.s);
    }
    if (t.contains("kernel")) {
      const Json& k = t["kernel"];
      check_keys(k, "toy.kernel", {"bandwidths", "median_multipliers"});
      if (k.contains("bandwidths")) tc.kernel = KernelSpec::fixed(k["bandwidths"].get<std::vector<double>>());
      if (k.contains("median_multipliers")) {
        tc.kernel = KernelSpec::median();
        tc.kernel.median_multipliers = k["median_multipliers"].get<std::vector<double>>();
      }
    }
  }
  if (j.contains("eval")) {
    const Json& e = j["eval"];
    check_keys(e, "eval", {"folds", "train_fraction", "far"});
    read(e, "folds", cfg.eval.folds);
    read(e, "train_fraction", cfg.eval.train_fraction);
    read(e, "far", cfg.eval.far_targets);
  }
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "config: cannot open " + path.string());
  Json j;
  try {
    j = Json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const Json::exception& e) {
    throw Error("config: " + path.string() + ": " + e.what());
  }
  PipelineConfig cfg;
  try {
    apply_config_json(cfg, j);
  } catch (const Json::exception& e) {
    throw Error("config: " + path.string() + ": " + e.what());
  }
  return cfg;
}

/// Explicit path, else $NIRVIS_CONFIG, else built-in defaults.
inline PipelineConfig resolve_config(const std::optional<std::filesystem::path>& explicit_path) {
  if (explicit_path) return load_config(*explicit_path);
  if (const char* env = std::getenv(kConfigEnvVar); env != nullptr && *env != '\0') return load_config(env);
  return PipelineConfig{};
}

inline Json wavelengths_json(const WavelengthConfig& w) {
  return {{"green", w.w_green}, {"red", w.w_red}, {"nir", w.w_nir}, {"vis_band", {w.vis_lo, w.vis_hi}}};
}

}  // namespace nirvis
