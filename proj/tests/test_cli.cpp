#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "nirvis/pipeline.hpp"

using namespace nirvis;
namespace fs = std::filesystem;

namespace {

/// Fresh scratch directory per test.
fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("nirvis_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

/// Runs the built CLI; returns the exit status and captures combined output.
int run_cli(const std::string& args, std::string* output = nullptr, const std::string& env = "") {
  const fs::path log = fs::temp_directory_path() / ("nirvis_cli_run_" + std::to_string(::getpid()) + ".log");
  const std::string cmd = env + " \"" NIRVIS_CLI_PATH "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  if (output) *output = slurp(log);
  fs::remove(log);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

/// Small, fast render settings.
PipelineConfig quick_config() {
  PipelineConfig cfg;
  cfg.render.width = 24;
  cfg.render.height = 24;
  cfg.render.spp = 2;
  cfg.seed = 5;
  return cfg;
}

/// make-assets output: <dir>/assets/identity_00N and <dir>/envs.
std::vector<fs::path> make_assets(const fs::path& dir, int identities, int texture = 32) {
  AssetOptions opt;
  opt.identities = identities;
  opt.environments = 2;
  opt.env_width = 32;
  opt.procedural.texture_size = texture;
  opt.procedural.segments = 16;
  opt.procedural.rings = 8;
  std::ostringstream log;
  EXPECT_EQ(cmd_make_assets(PipelineConfig{}, opt, dir, log), 0);
  std::vector<fs::path> out;
  for (int i = 0; i < identities; ++i) out.push_back(dir / "assets" / ("identity_00" + std::to_string(i)));
  return out;
}

std::map<std::string, std::string> key_values(const std::string& text, const std::string& section = "[overall]") {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  bool inside = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '[') {
      inside = line == section;
      continue;
    }
    const auto eq = line.find('=');
    if (inside && eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

TEST(Config, ParsesEveryGroup) {
  const fs::path dir = scratch("config");
  write_file(dir / "c.json", R"({
    // comments are allowed
    "wavelengths": {"green": 540, "red": 640, "nir": 900, "vis_band": [400, 700]},
    "transform": {"sigma": 1.5, "fit_sigma": false, "k_rough": 0.3, "sigma_range": 0.2},
    "flood": {"radius_deg": 10, "target": 0.5},
    "render": {"width": 40, "height": 30, "spp": 8},
    "pairs_per_identity": 4, "seed": 77, "jobs": 2,
    "toy": {"lambda": 50, "epochs_pretrain": 3, "kernel": {"bandwidths": [0.5, 1.0]}},
    "eval": {"folds": 10, "far": [0.01, 0.1]}
  })");
  const PipelineConfig c = load_config(dir / "c.json");
  EXPECT_EQ(c.wavelengths.w_nir, 900);
  EXPECT_EQ(c.wavelengths.vis_lo, 400);
  EXPECT_EQ(c.transform.params.sigma, 1.5);
  EXPECT_FALSE(c.transform.fit_sigma);
  EXPECT_EQ(c.flood.radius_deg, 10);
  EXPECT_EQ(c.render.width, 40);
  EXPECT_EQ(c.pairs_per_identity, 4);
  EXPECT_EQ(c.seed, 77u);
  EXPECT_EQ(c.toy.train.lambda, 50);
  EXPECT_EQ(c.toy.train.kernel.bandwidths, (std::vector<double>{0.5, 1.0}));
  EXPECT_EQ(c.eval.folds, 10);
  EXPECT_EQ(c.eval.far_targets, (std::vector<double>{0.01, 0.1}));
  EXPECT_NO_THROW(c.validate());
  fs::remove_all(dir);
}

TEST(Config, DefaultsAndRejections) {
  const PipelineConfig d;
  EXPECT_EQ(d.pairs_per_identity, 20);
  EXPECT_EQ(d.toy.train.lambda, 100.0);
  EXPECT_EQ(d.eval.folds, 0);

  const fs::path dir = scratch("config_bad");
  write_file(dir / "typo.json", R"({"render": {"widht": 3}})");
  try {
    load_config(dir / "typo.json");
    FAIL() << "unknown key accepted";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("render.widht"), std::string::npos) << e.what();
  }
  write_file(dir / "broken.json", "{\"seed\": ");
  EXPECT_THROW(load_config(dir / "broken.json"), Error);
  write_file(dir / "type.json", R"({"seed": "many"})");
  EXPECT_THROW(load_config(dir / "type.json"), Error);
  EXPECT_THROW(load_config(dir / "absent.json"), Error);
  PipelineConfig zero;
  zero.pairs_per_identity = 0;
  EXPECT_THROW(zero.validate(), Error);
  fs::remove_all(dir);
}

TEST(Config, EnvironmentVariableSuppliesDefaultPath) {
  const fs::path dir = scratch("config_env");
  write_file(dir / "env.json", R"({"seed": 31})");
  write_file(dir / "explicit.json", R"({"seed": 32})");
  ::setenv(kConfigEnvVar, (dir / "env.json").c_str(), 1);
  EXPECT_EQ(resolve_config(std::nullopt).seed, 31u);
  EXPECT_EQ(resolve_config(dir / "explicit.json").seed, 32u);
  ::unsetenv(kConfigEnvVar);
  EXPECT_EQ(resolve_config(std::nullopt).seed, 0u);
  fs::remove_all(dir);
}

// ---------------------------------------------------------------------------
// transform
// ---------------------------------------------------------------------------

TEST(Transform, WritesNirBundleWithProvenanceDeterministically) {
  const fs::path dir = scratch("transform");
  const auto assets = make_assets(dir, 1);
  std::ostringstream log;
  PipelineConfig cfg;
  ASSERT_EQ(cmd_transform(cfg, assets[0], dir / "nir_a", log), 0);
  ASSERT_EQ(cmd_transform(cfg, assets[0], dir / "nir_b", log), 0);

  const Bundle nir = load_bundle(dir / "nir_a");
  EXPECT_EQ(nir.reflectance.spectrum, Spectrum::nir);
  EXPECT_EQ(nir.reflectance.diffuse_albedo.channels(), 1);

  const Json prov = Json::parse(slurp(dir / "nir_a" / "provenance.json"));
  EXPECT_EQ(prov["sigma_source"], "fitted");
  // make-assets relates the red normals to VIS normals by a width of 1 texel.
  EXPECT_NEAR(prov["sigma"].get<double>(), 1.0, 0.05);
  EXPECT_EQ(prov["blur_scale"].get<double>(), 3.0);
  EXPECT_EQ(prov["wavelengths"]["nir"].get<double>(), 850.0);
  EXPECT_EQ(prov["nir_checksum"].get<std::string>(), hex64(nir.reflectance.checksum()));

  for (const char* f : {"diffuse.pfm", "specular.pfm", "normals.pfm", "mesh.obj", "metadata.json", "provenance.json"})
    EXPECT_EQ(slurp(dir / "nir_a" / f), slurp(dir / "nir_b" / f)) << f;

  cfg.transform.fit_sigma = false;
  cfg.transform.params.sigma = 0.4;
  ASSERT_EQ(cmd_transform(cfg, assets[0], dir / "nir_c", log), 0);
  const Json prov_c = Json::parse(slurp(dir / "nir_c" / "provenance.json"));
  EXPECT_EQ(prov_c["sigma_source"], "config");
  EXPECT_EQ(prov_c["sigma"].get<double>(), 0.4);
  fs::remove_all(dir);
}

TEST(Transform, MalformedBundleGivesNonzeroExit) {
  const fs::path dir = scratch("transform_bad");
  const auto assets = make_assets(dir, 1);
  fs::remove(assets[0] / "specular.pfm");
  std::string out;
  EXPECT_NE(run_cli("--out \"" + (dir / "nir").string() + "\" transform \"" + assets[0].string() + "\"", &out), 0);
  EXPECT_NE(out.find("specular"), std::string::npos) << out;
  fs::remove_all(dir);
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

TEST(Generate, ThreeIdentitiesTwentyPairsEach) {
  const fs::path dir = scratch("generate");
  const auto assets = make_assets(dir, 3);
  PipelineConfig cfg = quick_config();
  std::ostringstream log;
  ASSERT_EQ(cmd_generate(cfg, assets, dir / "envs", dir / "run_a", log), 0) << log.str();
  const auto records = load_manifest(dir / "run_a" / "manifest.jsonl");
  ASSERT_EQ(records.size(), 60u);

  std::map<std::string, std::set<int>> pair_indices;
  std::map<std::string, std::set<std::uint64_t>> checksums;
  std::set<std::string> images;
  for (const auto& r : records) {
    EXPECT_NE(r.vis_path, r.nir_path);
    EXPECT_TRUE(fs::exists(dir / "run_a" / r.vis_path));
    EXPECT_TRUE(fs::exists(dir / "run_a" / r.nir_path));
    images.insert(r.vis_path);
    images.insert(r.nir_path);
    EXPECT_TRUE(pair_indices[r.identity_id].insert(r.pair_index).second);
    checksums[r.identity_id].insert(r.nir_asset_checksum);
    EXPECT_LT(r.pose.env_index, 2);
  }
  EXPECT_EQ(images.size(), 120u);
  ASSERT_EQ(checksums.size(), 3u);
  for (const auto& [id, sums] : checksums) {
    EXPECT_EQ(sums.size(), 1u) << id;
    const Bundle nir = load_bundle(dir / "run_a" / id / "nir_assets");
    EXPECT_EQ(nir.reflectance.checksum(), *sums.begin()) << id;
  }
  const std::string first = slurp(dir / "run_a" / "manifest.jsonl");
  EXPECT_NE(first.find(kManifestSchema), std::string::npos);
  EXPECT_NE(log.str().find("pairs=60 images=120"), std::string::npos) << log.str();

  // Same seed, more workers: byte-identical manifest and images.
  cfg.jobs = 3;
  ASSERT_EQ(cmd_generate(cfg, assets, dir / "envs", dir / "run_b", log), 0);
  EXPECT_EQ(slurp(dir / "run_b" / "manifest.jsonl"), first);
  for (const auto& img : images) EXPECT_EQ(slurp(dir / "run_a" / img), slurp(dir / "run_b" / img)) << img;

  cfg.seed = 6;
  cfg.jobs = 1;
  ASSERT_EQ(cmd_generate(cfg, assets, dir / "envs", dir / "run_c", log), 0);
  EXPECT_NE(slurp(dir / "run_c" / "manifest.jsonl"), first);
  fs::remove_all(dir);
}

TEST(Generate, FailedIdentityIsReportedAndOthersContinue) {
  const fs::path dir = scratch("generate_fail");
  const auto assets = make_assets(dir, 3);
  write_file(assets[1] / "metadata.json", "{ not json");
  PipelineConfig cfg = quick_config();
  cfg.pairs_per_identity = 2;
  std::ostringstream log;
  EXPECT_EQ(cmd_generate(cfg, assets, dir / "envs", dir / "out", log), 1);
  EXPECT_NE(log.str().find("FAILED"), std::string::npos);
  EXPECT_NE(log.str().find("identity_001"), std::string::npos);
  const auto records = load_manifest(dir / "out" / "manifest.jsonl");
  ASSERT_EQ(records.size(), 4u);
  for (const auto& r : records) EXPECT_NE(r.identity_id, "identity_001");
  fs::remove_all(dir);
}

TEST(Generate, MissingEnvironmentsRejected) {
  const fs::path dir = scratch("generate_noenv");
  const auto assets = make_assets(dir, 1);
  fs::create_directories(dir / "empty");
  std::ostringstream log;
  EXPECT_THROW(cmd_generate(quick_config(), assets, dir / "empty", dir / "out", log), Error);
  fs::remove_all(dir);
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

TEST(Eval, SeparatedFeaturesAndTenFolds) {
  const fs::path dir = scratch("eval");
  LabeledFeatures f;
  Rng rng(3);
  for (int i = 0; i < 12; ++i)
    for (Modality m : {Modality::nir, Modality::vis})
      for (int k = 0; k < 3; ++k) {
        Eigen::RowVectorXd v = Eigen::RowVectorXd::Unit(12, i);
        for (int d = 0; d < 12; ++d) v[d] += 0.02 * rng.normal();
        f.add("person" + std::to_string(i), m, v);
      }
  save_features(f, dir / "features.csv");

  PipelineConfig cfg;
  cfg.eval.folds = 10;
  std::ostringstream log;
  ASSERT_EQ(cmd_eval(cfg, dir / "features.csv", dir / "report", log), 0);
  const std::string txt = slurp(dir / "report" / "report.txt");
  EXPECT_EQ(key_values(txt)["rank1"], "1");
  for (int fold = 1; fold <= 10; ++fold)
    EXPECT_NE(txt.find("[fold " + std::to_string(fold) + "]"), std::string::npos) << fold;
  EXPECT_EQ(txt.find("[fold 11]"), std::string::npos);
  const auto agg = key_values(txt, "[aggregate]");
  EXPECT_EQ(agg.at("folds"), "10");
  EXPECT_EQ(agg.at("rank1.mean"), "1");
  EXPECT_EQ(agg.at("rank1.std"), "0");

  const Json j = Json::parse(slurp(dir / "report" / "report.json"));
  EXPECT_EQ(j["schema"], kReportSchema);
  EXPECT_EQ(j["folds"].size(), 10u);
  for (const auto& fold : j["folds"]) {
    std::set<std::string> train(fold["train_ids"].begin(), fold["train_ids"].end());
    for (const auto& t : fold["test_ids"]) EXPECT_EQ(train.count(t.get<std::string>()), 0u);
  }
  EXPECT_EQ(j["overall"]["rank1"].get<double>(), 1.0);
  fs::remove_all(dir);
}

TEST(Eval, MalformedRowsListLineNumbers) {
  const fs::path dir = scratch("eval_bad");
  write_file(dir / "f.csv", "# header\na,NIR,1,0\na,1,0\nb,VIS,0,x\nb,VIS,0,1\n");
  std::ostringstream log;
  try {
    cmd_eval(PipelineConfig{}, dir / "f.csv", dir / "out", log);
    FAIL() << "malformed rows accepted";
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("modality"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 4"), std::string::npos) << msg;
    EXPECT_EQ(msg.find("line 5"), std::string::npos) << msg;
  }
  std::string out;
  EXPECT_NE(run_cli("--out \"" + (dir / "out").string() + "\" eval \"" + (dir / "f.csv").string() + "\"", &out), 0);
  EXPECT_NE(out.find("line 3"), std::string::npos) << out;
  fs::remove_all(dir);
}

// ---------------------------------------------------------------------------
// train-toy
// ---------------------------------------------------------------------------

TEST(TrainToy, HistoryPerModeAndComparisonTable) {
  const fs::path dir = scratch("toy");
  PipelineConfig cfg;
  cfg.toy.train.epochs_pretrain = 2;
  cfg.toy.train.epochs_finetune = 1;
  cfg.toy.num_ids = 4;
  cfg.toy.per_id = 4;
  cfg.toy.train.p = 4;
  cfg.toy.train.k = 4;
  const std::vector<LossMode> modes{LossMode::id, LossMode::id_pmse, LossMode::id_mmd, LossMode::id_idmmd};
  std::ostringstream log;
  ASSERT_EQ(cmd_train_toy(cfg, modes, dir, log), 0) << log.str();
  for (const char* tag : {"id", "id_pmse", "id_mmd", "id_idmmd"}) {
    const std::string h = slurp(dir / ("history_" + std::string(tag) + ".csv"));
    EXPECT_EQ(std::count(h.begin(), h.end(), '\n'), 1 + 4) << tag;
    EXPECT_NE(h.find("centroid_cosine"), std::string::npos);
  }
  const std::string cmp = slurp(dir / "comparison.csv");
  EXPECT_EQ(std::count(cmp.begin(), cmp.end(), '\n'), 5);
  EXPECT_NE(cmp.find("centroid_cosine"), std::string::npos);
  for (const char* m : {"\nid,", "\nid+pmse,", "\nid+mmd,", "\nid+idmmd,"}) EXPECT_NE(cmp.find(m), std::string::npos) << m;

  // Same seed through the binary reproduces the table byte for byte.
  write_file(dir / "cfg.json", R"({"toy": {"epochs_pretrain": 2, "epochs_finetune": 1, "num_ids": 4, "per_id": 4, "p": 4, "k": 4}})");
  ASSERT_EQ(run_cli("--config \"" + (dir / "cfg.json").string() + "\" --out \"" + (dir / "bin").string() +
                    "\" train-toy --modes id,id+pmse,id+mmd,id+idmmd"),
            0);
  EXPECT_EQ(slurp(dir / "bin" / "comparison.csv"), cmp);
  fs::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Front end
// ---------------------------------------------------------------------------

TEST(FrontEnd, SubcommandsFlagsAndExitCodes) {
  std::string out;
  EXPECT_EQ(run_cli("--help", &out), 0);
  for (const char* sub : {"transform", "generate", "eval", "train-toy", "fit-sigma"})
    EXPECT_NE(out.find(sub), std::string::npos) << sub;
  EXPECT_NE(run_cli("", &out), 0);
  EXPECT_NE(run_cli("frobnicate", &out), 0);
  EXPECT_NE(run_cli("train-toy --modes id+nothing", &out), 0);
  EXPECT_NE(out.find("unknown loss mode"), std::string::npos) << out;
}

TEST(FrontEnd, FitSigmaAndConfigFromEnvironment) {
  const fs::path dir = scratch("frontend");
  const auto assets = make_assets(dir, 1, 48);
  std::string out;
  ASSERT_EQ(run_cli("fit-sigma \"" + (assets[0] / "normals.pfm").string() + "\" \"" +
                        (assets[0] / "normals_red.pfm").string() + "\"",
                    &out),
            0)
      << out;
  const auto kv = key_values("[x]\n" + out, "[x]");
  EXPECT_NEAR(std::stod(kv.at("sigma")), 1.0, 0.05);
  EXPECT_EQ(kv.at("blur_scale"), "3");

  // $NIRVIS_CONFIG is read when --config is absent; flags override it.
  write_file(dir / "cfg.json", R"({"wavelengths": {"red": 600}})");
  ASSERT_EQ(run_cli("fit-sigma \"" + (assets[0] / "normals.pfm").string() + "\" \"" +
                        (assets[0] / "normals_red.pfm").string() + "\"",
                    &out, "NIRVIS_CONFIG=\"" + (dir / "cfg.json").string() + "\""),
            0)
      << out;
  EXPECT_EQ(key_values("[x]\n" + out, "[x]").at("blur_scale"), "6");
  write_file(dir / "bad.json", R"({"nope": 1})");
  EXPECT_NE(run_cli("fit-sigma a b", &out, "NIRVIS_CONFIG=\"" + (dir / "bad.json").string() + "\""), 0);
  fs::remove_all(dir);
}
