// Asset bundles and the command implementations behind the CLI.
//
// A bundle is a directory holding
//   diffuse.{pfm,png}  specular.{pfm,png}  normals.{pfm,png}
//   [normals_red.{pfm,png}]  mesh.obj  metadata.json
// where metadata.json carries {"spectrum", "roughness", "identity"}.
#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "nirvis/config.hpp"
#include "nirvis/image_io.hpp"
#include "nirvis/procedural.hpp"

namespace nirvis {

namespace fs = std::filesystem;

inline constexpr const char* kManifestSchema = "nirvis.manifest/1";
inline constexpr const char* kProvenanceSchema = "nirvis.provenance/1";
inline constexpr const char* kReportSchema = "nirvis.report/1";

// -----------------------------------------------------------------------------
// Bundles
// -----------------------------------------------------------------------------

struct Bundle {
  std::string identity;
  Mesh mesh;
  ReflectanceSet reflectance;
  std::optional<NormalMap> normals_red;
};

namespace detail {

/// The unique `<stem>.pfm` or `<stem>.png` in `dir`, if any.
inline std::optional<fs::path> find_map(const fs::path& dir, const std::string& stem) {
  std::optional<fs::path> found;
  for (const char* ext : {".pfm", ".png"}) {
    const fs::path p = dir / (stem + ext);
    if (!fs::exists(p)) continue;
    require(!found, "bundle " + dir.string() + ": both " + found.value_or(p).filename().string() + " and " +
                        p.filename().string() + " present");
    found = p;
  }
  return found;
}

inline fs::path require_map(const fs::path& dir, const std::string& stem) {
  auto p = find_map(dir, stem);
  require(p.has_value(), "bundle " + dir.string() + ": missing " + stem + ".pfm or " + stem + ".png");
  return *p;
}

inline Json read_json(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot open " + path.string() + " for writing");
  out << text;
  require(out.good(), "write failure on " + path.string());
}

inline std::string map_ext(Encoding e) { return e == Encoding::f32 ? ".pfm" : ".png"; }

}  // namespace detail

inline Bundle load_bundle(const fs::path& dir) {
  require(fs::is_directory(dir), "bundle: not a directory: " + dir.string());
  const Json meta = detail::read_json(dir / "metadata.json");
  Bundle b;
  try {
    b.identity = meta.value("identity", dir.filename().string());
    b.reflectance.spectrum = parse_spectrum(meta.at("spectrum").get<std::string>());
    b.reflectance.roughness = meta.at("roughness").get<double>();
  } catch (const Json::exception& e) {
    throw Error("bundle " + dir.string() + ": metadata.json: " + e.what());
  }
  b.reflectance.diffuse_albedo = load_map(detail::require_map(dir, "diffuse"), MapRole::albedo);
  b.reflectance.specular_albedo = load_map(detail::require_map(dir, "specular"), MapRole::albedo);
  b.reflectance.normals = load_normals(detail::require_map(dir, "normals"));
  if (auto red = detail::find_map(dir, "normals_red")) b.normals_red = load_normals(*red);
  b.mesh = load_mesh(dir / "mesh.obj");
  try {
    b.reflectance.validate();
  } catch (const Error& e) {
    throw Error("bundle " + dir.string() + ": " + e.what());
  }
  return b;
}

/// Writes every map with one encoding (.pfm for f32, .png otherwise).
inline void save_bundle(const Bundle& b, const fs::path& dir, Encoding enc = Encoding::f32) {
  fs::create_directories(dir);
  const std::string ext = detail::map_ext(enc);
  save_map(b.reflectance.diffuse_albedo, dir / ("diffuse" + ext), enc, MapRole::albedo);
  save_map(b.reflectance.specular_albedo, dir / ("specular" + ext), enc, MapRole::albedo);
  save_normals(b.reflectance.normals, dir / ("normals" + ext), enc);
  if (b.normals_red) save_normals(*b.normals_red, dir / ("normals_red" + ext), enc);
  write_obj(b.mesh, dir / "mesh.obj");
  const Json meta{{"identity", b.identity},
                  {"spectrum", to_string(b.reflectance.spectrum)},
                  {"roughness", b.reflectance.roughness}};
  detail::write_text(dir / "metadata.json", meta.dump(2) + "\n");
}

/// Normals width used for one bundle: fitted from normals_red when present
/// and enabled, else the configured value.
struct SigmaChoice {
  double sigma = 0;
  std::string source;  ///< "fitted" or "config"
  std::optional<double> residual;
};

inline SigmaChoice choose_sigma(const Bundle& b, const TransformOptions& opt) {
  if (opt.fit_sigma && b.normals_red) {
    const SigmaFit fit = fit_sigma_detailed(b.reflectance.normals, *b.normals_red, opt.sigma_max);
    return {fit.sigma, "fitted", fit.residual};
  }
  return {opt.params.sigma, "config", std::nullopt};
}

inline Json provenance_json(const Bundle& vis, const ReflectanceSet& nir, const SigmaChoice& sigma,
                            const WavelengthConfig& wl, const TransformParams& params) {
  Json j{{"schema", kProvenanceSchema},
         {"identity", vis.identity},
         {"wavelengths", wavelengths_json(wl)},
         {"sigma", sigma.sigma},
         {"sigma_source", sigma.source},
         {"blur_scale", wl.blur_scale()},
         {"effective_normals_width", wl.blur_scale() * sigma.sigma},
         {"diffuse_sigma_space", params.resolved_sigma_space(wl)},
         {"diffuse_sigma_range", params.sigma_range},
         {"k_rough", params.k_rough},
         {"roughness_vis", vis.reflectance.roughness},
         {"roughness_nir", nir.roughness},
         {"roughness_factor", nir.roughness / vis.reflectance.roughness},
         {"nir_checksum", hex64(nir.checksum())}};
  if (sigma.residual) j["fit_residual"] = *sigma.residual;
  return j;
}

struct TransformOutcome {
  Bundle nir;
  SigmaChoice sigma;
  TransformParams params;
};

inline TransformOutcome transform_bundle(const Bundle& vis, const PipelineConfig& cfg) {
  TransformOutcome out;
  out.sigma = choose_sigma(vis, cfg.transform);
  out.params = cfg.transform.params;
  out.params.sigma = out.sigma.sigma;
  out.nir.identity = vis.identity;
  out.nir.mesh = vis.mesh;
  out.nir.reflectance = transform_assets(vis.reflectance, cfg.wavelengths, out.params);
  return out;
}

// -----------------------------------------------------------------------------
// Commands. Each returns a process exit code and reports on `log`.
// -----------------------------------------------------------------------------

inline int cmd_transform(const PipelineConfig& cfg, const fs::path& asset_dir, const fs::path& out_dir,
                         std::ostream& log = std::cout) {
  cfg.validate();
  const Bundle vis = load_bundle(asset_dir);
  const TransformOutcome t = transform_bundle(vis, cfg);
  save_bundle(t.nir, out_dir, Encoding::f32);
  const Json prov = provenance_json(vis, t.nir.reflectance, t.sigma, cfg.wavelengths, t.params);
  detail::write_text(out_dir / "provenance.json", prov.dump(2) + "\n");
  log << "transform: " << vis.identity << " sigma=" << t.sigma.sigma << " (" << t.sigma.source << ")"
      << " nir_width=" << cfg.wavelengths.blur_scale() * t.sigma.sigma << " roughness " << vis.reflectance.roughness
      << " -> " << t.nir.reflectance.roughness << " -> " << out_dir.string() << "\n";
  return 0;
}

/// Environment maps (*.pfm, *.png) of one directory in name order.
inline std::vector<std::pair<std::string, EnvironmentMap>> load_env_dir(const fs::path& env_dir) {
  require(fs::is_directory(env_dir), "generate: environment directory not found: " + env_dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(env_dir)) {
    const std::string ext = detail::lower_extension(e.path());
    if (e.is_regular_file() && (ext == ".pfm" || ext == ".png")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  require(!files.empty(), "generate: no environment maps (*.pfm, *.png) in " + env_dir.string());
  std::vector<std::pair<std::string, EnvironmentMap>> envs;
  for (const auto& f : files) {
    TextureMap m = load_map(f, MapRole::environment);
    require(m.channels() == 3, "generate: environment " + f.string() + " must have 3 channels");
    envs.emplace_back(f.filename().string(), EnvironmentMap(std::move(m), EnvKind::scene));
    require(envs.back().second.width() == envs.front().second.width(),
            "generate: environment maps must share one resolution (" + f.string() + ")");
  }
  return envs;
}

/// Seed for one identity: depends on the run seed and the identity name only,
/// so adding or reordering identities does not change the others.
inline std::uint64_t identity_seed(std::uint64_t run_seed, const std::string& identity) {
  Fnv1a h;
  h.update(identity.data(), identity.size());
  return hash_combine(run_seed, h.digest());
}

struct ManifestRecord {
  std::string identity_id;
  int pair_index = 0;
  PoseSample pose;
  std::string env_name;
  std::string vis_path;  ///< relative to the output directory
  std::string nir_path;
  std::uint64_t seed = 0;
  std::uint64_t nir_asset_checksum = 0;

  Json to_json() const {
    std::vector<double> rot(pose.rotation.m.begin(), pose.rotation.m.end());
    return {{"schema", kManifestSchema},
            {"identity_id", identity_id},
            {"pair_index", pair_index},
            {"pose", {{"yaw_deg", pose.yaw_deg}, {"pitch_deg", pose.pitch_deg}, {"roll_deg", pose.roll_deg},
                      {"rotation", rot}}},
            {"env_index", pose.env_index},
            {"env_name", env_name},
            {"env_yaw_deg", pose.env_yaw_deg},
            {"vis_path", vis_path},
            {"nir_path", nir_path},
            {"seed", seed},
            {"nir_asset_checksum", hex64(nir_asset_checksum)}};
  }
};

/// Output image: exposure-scaled, clamped, 16-bit.
inline std::size_t write_render(const TextureMap& img, const fs::path& png, double exposure, bool sidecar) {
  TextureMap scaled = img;
  for (float& v : scaled.data()) v = static_cast<float>(v * exposure);
  const SaveReport rep = save_map(scaled, png, Encoding::u16);
  if (sidecar) save_map(img, fs::path(png).replace_extension(".pfm"), Encoding::f32);
  return rep.clamped;
}

struct IdentityResult {
  bool ok = false;
  std::string error;
  std::vector<ManifestRecord> records;
  std::size_t clamped = 0;
};

inline IdentityResult generate_identity(const PipelineConfig& cfg, const fs::path& asset_dir,
                                        const std::vector<std::pair<std::string, EnvironmentMap>>& envs,
                                        const EnvironmentMap& flood, const fs::path& out_dir, int render_jobs) {
  IdentityResult res;
  try {
    const Bundle vis = load_bundle(asset_dir);
    require(vis.reflectance.spectrum == Spectrum::vis, "asset bundle must be VIS");
    const TransformOutcome t = transform_bundle(vis, cfg);
    const std::uint64_t seed = identity_seed(cfg.seed, vis.identity);
    const auto samples = sample_pose_env(seed, cfg.pairs_per_identity, static_cast<int>(envs.size()), cfg.pose_limits);
    std::vector<EnvironmentMap> env_maps;
    for (const auto& e : envs) env_maps.push_back(e.second);
    RenderQuality q;
    q.spp = cfg.render.spp;
    q.jobs = render_jobs;
    q.seed = seed;
    const PairSet set = render_pair_set(vis.mesh, vis.reflectance, cfg.wavelengths, t.params, samples, env_maps, flood,
                                        cfg.render.camera(), q);
    const fs::path id_dir = out_dir / vis.identity;
    fs::create_directories(id_dir);
    save_bundle(t.nir, id_dir / "nir_assets", Encoding::f32);
    detail::write_text(id_dir / "nir_assets" / "provenance.json",
                       provenance_json(vis, t.nir.reflectance, t.sigma, cfg.wavelengths, t.params).dump(2) + "\n");
    for (const RenderedPair& p : set.pairs) {
      std::ostringstream stem;
      stem << "pair_" << std::setw(3) << std::setfill('0') << p.pair_index;
      const std::string vis_rel = vis.identity + "/" + stem.str() + "_vis.png";
      const std::string nir_rel = vis.identity + "/" + stem.str() + "_nir.png";
      res.clamped += write_render(p.vis, out_dir / vis_rel, cfg.render.exposure, cfg.render.float_sidecar);
      res.clamped += write_render(p.nir, out_dir / nir_rel, cfg.render.exposure, cfg.render.float_sidecar);
      ManifestRecord r;
      r.identity_id = vis.identity;
      r.pair_index = p.pair_index;
      r.pose = p.pose;
      r.env_name = envs[p.pose.env_index].first;
      r.vis_path = vis_rel;
      r.nir_path = nir_rel;
      r.seed = seed;
      r.nir_asset_checksum = p.nir_asset_checksum;
      res.records.push_back(std::move(r));
    }
    res.ok = true;
  } catch (const std::exception& e) {
    res.error = e.what();
    res.records.clear();
  }
  return res;
}

/// Renders every identity; failures are reported and skipped, and make the
/// exit code nonzero. The manifest lists identities in argument order.
inline int cmd_generate(const PipelineConfig& cfg, const std::vector<fs::path>& asset_dirs, const fs::path& env_dir,
                        const fs::path& out_dir, std::ostream& log = std::cout) {
  cfg.validate();
  require(!asset_dirs.empty(), "generate: no asset bundles given");
  const auto envs = load_env_dir(env_dir);
  const EnvironmentMap flood =
      make_flood_env(cfg.flood.resolved_intensity(), cfg.flood.radius_deg, envs.front().second.width());
  fs::create_directories(out_dir);

  const int n = static_cast<int>(asset_dirs.size());
  const int workers = std::max(1, std::min(cfg.jobs, n));
  const int render_jobs = std::max(1, cfg.jobs / workers);
  std::vector<IdentityResult> results(n);
  std::atomic<int> next{0};
  auto work = [&] {
    for (int i = next++; i < n; i = next++)
      results[i] = generate_identity(cfg, asset_dirs[i], envs, flood, out_dir, render_jobs);
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  std::ostringstream manifest;
  int failed = 0;
  std::size_t pairs = 0, clamped = 0;
  for (int i = 0; i < n; ++i) {
    if (!results[i].ok) {
      ++failed;
      log << "generate: FAILED " << asset_dirs[i].string() << ": " << results[i].error << "\n";
      continue;
    }
    for (const auto& r : results[i].records) manifest << r.to_json().dump() << "\n";
    pairs += results[i].records.size();
    clamped += results[i].clamped;
  }
  detail::write_text(out_dir / "manifest.jsonl", manifest.str());
  log << "generate: identities=" << n - failed << "/" << n << " pairs=" << pairs << " images=" << 2 * pairs
      << " clamped_values=" << clamped << " manifest=" << (out_dir / "manifest.jsonl").string() << "\n";
  return failed == 0 ? 0 : 1;
}

inline std::vector<ManifestRecord> load_manifest(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open manifest " + path.string());
  std::vector<ManifestRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const Json j = Json::parse(line);
      require(j.at("schema").get<std::string>() == kManifestSchema,
              "unsupported schema '" + j.at("schema").get<std::string>() + "'");
      ManifestRecord r;
      r.identity_id = j.at("identity_id").get<std::string>();
      r.pair_index = j.at("pair_index").get<int>();
      const Json& pose = j.at("pose");
      r.pose.yaw_deg = pose.at("yaw_deg").get<double>();
      r.pose.pitch_deg = pose.at("pitch_deg").get<double>();
      r.pose.roll_deg = pose.at("roll_deg").get<double>();
      const auto rot = pose.at("rotation").get<std::vector<double>>();
      require(rot.size() == 9, "rotation must have 9 entries");
      std::copy(rot.begin(), rot.end(), r.pose.rotation.m.begin());
      r.pose.env_index = j.at("env_index").get<int>();
      r.pose.env_yaw_deg = j.at("env_yaw_deg").get<double>();
      r.env_name = j.at("env_name").get<std::string>();
      r.vis_path = j.at("vis_path").get<std::string>();
      r.nir_path = j.at("nir_path").get<std::string>();
      r.seed = j.at("seed").get<std::uint64_t>();
      r.nir_asset_checksum = std::stoull(j.at("nir_asset_checksum").get<std::string>(), nullptr, 16);
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw Error("manifest " + path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

// -----------------------------------------------------------------------------
// Feature extraction from rendered pairs
// -----------------------------------------------------------------------------

/// Fixed descriptor: mean luminance over a grid x grid partition of the
/// image, centred and L2-normalized. Stands in for a learned face embedding.
inline Eigen::RowVectorXd pooled_descriptor(const TextureMap& img, int grid) {
  require(grid >= 1 && grid <= std::min(img.width(), img.height()), "pooled_descriptor: bad grid size");
  Eigen::RowVectorXd f = Eigen::RowVectorXd::Zero(grid * grid);
  Eigen::RowVectorXd count = Eigen::RowVectorXd::Zero(grid * grid);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      double lum = img.at(x, y, 0);
      if (img.channels() == 3) lum = kLumR * img.at(x, y, 0) + kLumG * img.at(x, y, 1) + kLumB * img.at(x, y, 2);
      const int cell = (y * grid / img.height()) * grid + x * grid / img.width();
      f[cell] += lum;
      count[cell] += 1;
    }
  f = f.cwiseQuotient(count);
  f.array() -= f.mean();
  const double norm = f.norm();
  require(norm > 0, "pooled_descriptor: image has no spatial variation");
  return f / norm;
}

/// One NIR and one VIS row per manifest record, in manifest order.
inline int cmd_extract_features(const fs::path& manifest_path, const fs::path& out_file, int grid,
                                std::ostream& log = std::cout) {
  const auto records = load_manifest(manifest_path);
  require(!records.empty(), "extract-features: manifest has no records");
  const fs::path root = manifest_path.parent_path();
  LabeledFeatures f;
  for (const auto& r : records) {
    f.add(r.identity_id, Modality::nir, pooled_descriptor(load_map(root / r.nir_path), grid));
    f.add(r.identity_id, Modality::vis, pooled_descriptor(load_map(root / r.vis_path), grid));
  }
  if (out_file.has_parent_path()) fs::create_directories(out_file.parent_path());
  save_features(f, out_file);
  log << "extract-features: " << f.size() << " rows, " << f.identity_count() << " identities, dim " << f.dim()
      << " -> " << out_file.string() << "\n";
  return 0;
}

// -----------------------------------------------------------------------------
// Evaluation report
// -----------------------------------------------------------------------------

namespace detail {

inline Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline std::string format_value(double v) {
  if (!std::isfinite(v)) return "nan";
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

inline Json report_json(const MetricReport& r) {
  Json j;
  for (const auto& [k, v] : r.scalars()) j[k] = number_or_null(v);
  Json vr = Json::object();
  for (const auto& [far, pt] : r.vr_at_far)
    vr[MetricReport::format_far(far)] = {{"vr", pt.vr},
                                         {"threshold", number_or_null(pt.threshold)},
                                         {"achieved_far", pt.achieved_far},
                                         {"imprecise", pt.imprecise}};
  j["vr_detail"] = vr;
  j["notes"] = r.notes;
  return j;
}

inline void report_text(std::ostream& out, const MetricReport& r) {
  for (const auto& [k, v] : r.scalars()) out << k << "=" << format_value(v) << "\n";
  for (const auto& [far, pt] : r.vr_at_far) {
    const std::string key = "vr@far_" + MetricReport::format_far(far);
    out << key << ".threshold=" << format_value(pt.threshold) << "\n";
    out << key << ".imprecise=" << (pt.imprecise ? 1 : 0) << "\n";
  }
  for (const auto& n : r.notes) out << "note=" << n << "\n";
}

}  // namespace detail

/// Metrics on the whole feature set, plus per-fold blocks and mean/std when
/// folds > 0. Writes report.txt (key=value) and report.json into out_dir.
inline int cmd_eval(const PipelineConfig& cfg, const fs::path& feature_file, const fs::path& out_dir,
                    std::ostream& log = std::cout) {
  const LabeledFeatures data = load_features(feature_file);
  MetricSelection sel;
  sel.far_targets = cfg.eval.far_targets;
  const MetricReport overall = evaluate_metrics(data, sel);

  std::ostringstream txt;
  txt << "# nirvis metric report\n";
  txt << "input=" << feature_file.string() << "\n";
  txt << "samples=" << data.size() << "\nidentities=" << data.identity_count() << "\ndim=" << data.dim() << "\n";
  txt << "[overall]\n";
  detail::report_text(txt, overall);
  Json j{{"schema", kReportSchema},
         {"input", feature_file.string()},
         {"samples", data.size()},
         {"identities", data.identity_count()},
         {"dim", data.dim()},
         {"overall", detail::report_json(overall)}};

  if (cfg.eval.folds > 0) {
    const TenfoldResult tf = tenfold_protocol(data, cfg.seed, cfg.eval.folds, cfg.eval.train_fraction, sel);
    Json folds = Json::array();
    for (std::size_t i = 0; i < tf.folds.size(); ++i) {
      txt << "[fold " << i + 1 << "]\n";
      std::vector<std::string> train_names, test_names;
      for (int id : tf.splits[i].train_ids) train_names.push_back(data.names[id]);
      for (int id : tf.splits[i].test_ids) test_names.push_back(data.names[id]);
      txt << "train_identities=" << train_names.size() << "\ntest_identities=" << test_names.size() << "\n";
      detail::report_text(txt, tf.folds[i]);
      Json fj = detail::report_json(tf.folds[i]);
      fj["train_ids"] = train_names;
      fj["test_ids"] = test_names;
      folds.push_back(fj);
    }
    txt << "[aggregate]\n";
    txt << "folds=" << tf.folds.size() << "\n";
    Json agg = Json::object();
    for (const auto& [k, a] : tf.aggregate) {
      txt << k << ".mean=" << detail::format_value(a.mean) << "\n" << k << ".std=" << detail::format_value(a.std)
          << "\n";
      agg[k] = {{"mean", a.mean}, {"std", a.std}, {"folds", a.folds}};
    }
    j["folds"] = folds;
    j["aggregate"] = agg;
  }

  fs::create_directories(out_dir);
  detail::write_text(out_dir / "report.txt", txt.str());
  detail::write_text(out_dir / "report.json", j.dump(2) + "\n");
  log << "eval: " << data.size() << " samples, " << data.identity_count() << " identities";
  if (std::isfinite(overall.rank1)) log << ", rank1=" << overall.rank1;
  if (std::isfinite(overall.ms_1v1)) log << ", ms_1v1=" << overall.ms_1v1;
  log << " -> " << (out_dir / "report.txt").string() << "\n";
  return 0;
}

// -----------------------------------------------------------------------------
// Toy training and the loss-mode comparison
// -----------------------------------------------------------------------------

inline std::string mode_file_tag(LossMode m) {
  std::string s = to_string(m);
  std::replace(s.begin(), s.end(), '+', '_');
  return s;
}

inline void write_history_csv(const std::vector<EpochRecord>& h, const fs::path& path) {
  std::ostringstream out;
  out << std::setprecision(12);
  out << "epoch,stage,lr,id_loss,mmd,pmse,idmmd,objective,batch_mean,centroid_cosine\n";
  for (const auto& r : h)
    out << r.epoch << ',' << r.stage << ',' << r.lr << ',' << r.id_loss << ',' << r.mmd << ',' << r.pmse << ','
        << r.idmmd << ',' << r.objective << ',' << r.batch_mean << ',' << r.centroid_cosine << '\n';
  detail::write_text(path, out.str());
}

inline int cmd_train_toy(const PipelineConfig& cfg, const std::vector<LossMode>& modes, const fs::path& out_dir,
                         std::ostream& log = std::cout) {
  require(!modes.empty(), "train-toy: no loss modes");
  TrainConfig tc = cfg.toy.train;
  tc.seed = cfg.seed;
  tc.validate();
  const LabeledFeatures data =
      synth_two_modality_data(cfg.seed, cfg.toy.num_ids, cfg.toy.per_id, cfg.toy.dim, cfg.toy.modality_shift);
  fs::create_directories(out_dir);
  std::ostringstream cmp;
  cmp << std::setprecision(12);
  cmp << "mode,epochs,final_objective,id_loss,mmd,pmse,idmmd,centroid_cosine,initial_centroid_cosine,diverged\n";
  int failures = 0;
  for (LossMode m : modes) {
    const TrainResult r = train(tc, data, m);
    write_history_csv(r.history, out_dir / ("history_" + mode_file_tag(m) + ".csv"));
    const EpochRecord& last = r.history.back();
    cmp << to_string(m) << ',' << last.epoch << ',' << last.objective << ',' << last.id_loss << ',' << last.mmd << ','
        << last.pmse << ',' << last.idmmd << ',' << last.centroid_cosine << ',' << r.history.front().centroid_cosine
        << ',' << (r.diverged ? 1 : 0) << '\n';
    log << "train-toy: " << to_string(m) << " centroid_cosine " << r.history.front().centroid_cosine << " -> "
        << last.centroid_cosine;
    if (r.diverged) {
      ++failures;
      log << " DIVERGED: " << r.diagnostic;
    }
    log << "\n";
  }
  detail::write_text(out_dir / "comparison.csv", cmp.str());
  log << "train-toy: comparison -> " << (out_dir / "comparison.csv").string() << "\n";
  return failures == 0 ? 0 : 1;
}

// -----------------------------------------------------------------------------
// Width fitting and procedural assets
// -----------------------------------------------------------------------------

inline int cmd_fit_sigma(const PipelineConfig& cfg, const fs::path& green, const fs::path& red,
                         std::ostream& log = std::cout) {
  const NormalMap g = load_normals(green);
  const NormalMap r = load_normals(red);
  const SigmaFit fit = fit_sigma_detailed(g, r, cfg.transform.sigma_max);
  log << std::setprecision(6) << "sigma=" << fit.sigma << "\nresidual=" << fit.residual
      << "\nsigma_max=" << cfg.transform.sigma_max.value_or(default_sigma_max(g.width(), g.height()))
      << "\nblur_scale=" << cfg.wavelengths.blur_scale()
      << "\nnir_width=" << cfg.wavelengths.blur_scale() * fit.sigma << "\n";
  return 0;
}

struct AssetOptions {
  int identities = 3;
  int environments = 2;
  int env_width = 64;
  ProceduralOptions procedural;
  Encoding encoding = Encoding::f32;
};

/// Writes out_dir/assets/identity_NNN bundles and out_dir/envs/env_NNN.pfm.
inline int cmd_make_assets(const PipelineConfig& cfg, const AssetOptions& opt, const fs::path& out_dir,
                           std::ostream& log = std::cout) {
  require(opt.identities >= 1 && opt.environments >= 1, "make-assets: counts must be >= 1");
  fs::create_directories(out_dir / "assets");
  fs::create_directories(out_dir / "envs");
  for (int i = 0; i < opt.identities; ++i) {
    std::ostringstream name;
    name << "identity_" << std::setw(3) << std::setfill('0') << i;
    const ProceduralIdentity p =
        make_procedural_identity(hash_combine(cfg.seed, static_cast<std::uint64_t>(i)), opt.procedural);
    Bundle b{name.str(), p.mesh, p.vis, p.normals_red};
    save_bundle(b, out_dir / "assets" / name.str(), opt.encoding);
  }
  for (int e = 0; e < opt.environments; ++e) {
    std::ostringstream name;
    name << "env_" << std::setw(3) << std::setfill('0') << e << ".pfm";
    const EnvironmentMap env =
        make_procedural_env(hash_combine(cfg.seed ^ 0xE17u, static_cast<std::uint64_t>(e)), opt.env_width);
    save_map(env.map, out_dir / "envs" / name.str(), Encoding::f32);
  }
  log << "make-assets: " << opt.identities << " identities, " << opt.environments << " environments -> "
      << out_dir.string() << "\n";
  return 0;
}

}  // namespace nirvis
