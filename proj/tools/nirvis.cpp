// nirvis command-line front end.
//
//   nirvis [--config FILE] [--seed N] [--jobs N] [--out DIR] <subcommand> ...
//
// Flags override values from the config file; without --config the file
// named by $NIRVIS_CONFIG is used when set.
#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nirvis/pipeline.hpp"

namespace {

std::vector<nirvis::LossMode> parse_modes(const std::string& list) {
  std::vector<nirvis::LossMode> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(nirvis::parse_loss_mode(item));
  return out;
}

template <class T>
void override_if(const std::optional<T>& flag, T& target) {
  if (flag) target = *flag;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NIR-VIS synthetic face pipeline: reflectance transform, paired rendering, losses and metrics"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> out;
  app.add_option("--config", config_path, "JSON config file (default: $NIRVIS_CONFIG)");
  app.add_option("--seed", seed, "Random seed");
  app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "Output directory");

  // transform
  auto* transform = app.add_subcommand("transform", "Convert a VIS asset bundle into an NIR bundle");
  std::string t_asset;
  std::optional<double> t_sigma, t_k_rough, t_sigma_range, t_sigma_space, t_green, t_red, t_nir;
  bool t_no_fit = false;
  transform->add_option("asset_dir", t_asset, "VIS bundle directory")->required()->check(CLI::ExistingDirectory);
  transform->add_option("--sigma", t_sigma, "Normals width (texels) when not fitted");
  transform->add_flag("--no-fit", t_no_fit, "Ignore normals_red and use --sigma / config sigma");
  transform->add_option("--k-rough", t_k_rough, "Roughness decrease factor");
  transform->add_option("--sigma-range", t_sigma_range, "Bilateral range width (albedo units)");
  transform->add_option("--sigma-space", t_sigma_space, "Bilateral spatial width (texels)");
  transform->add_option("--w-green", t_green, "Green channel wavelength (nm)");
  transform->add_option("--w-red", t_red, "Red channel wavelength (nm)");
  transform->add_option("--w-nir", t_nir, "NIR wavelength (nm)");

  // generate
  auto* generate = app.add_subcommand("generate", "Render paired VIS/NIR images and a manifest");
  std::vector<std::string> g_assets;
  std::string g_envs;
  std::optional<int> g_pairs, g_spp, g_width, g_height;
  std::optional<double> g_exposure;
  bool g_sidecar = false;
  generate->add_option("asset_dirs", g_assets, "VIS bundle directories")->required()->check(CLI::ExistingDirectory);
  generate->add_option("--envs", g_envs, "Directory of equirectangular environment maps")
      ->required()
      ->check(CLI::ExistingDirectory);
  generate->add_option("--pairs", g_pairs, "Pairs per identity (default 20)")->check(CLI::PositiveNumber);
  generate->add_option("--spp", g_spp, "Samples per lobe per pixel")->check(CLI::PositiveNumber);
  generate->add_option("--width", g_width, "Image width")->check(CLI::PositiveNumber);
  generate->add_option("--height", g_height, "Image height")->check(CLI::PositiveNumber);
  generate->add_option("--exposure", g_exposure, "Scale before 16-bit quantization");
  generate->add_flag("--float-sidecar", g_sidecar, "Also write .pfm images");

  // extract-features
  auto* extract = app.add_subcommand("extract-features", "Pooled-luminance descriptors of rendered pairs");
  std::string x_manifest;
  std::optional<std::string> x_output;
  int x_grid = 8;
  extract->add_option("manifest", x_manifest, "manifest.jsonl written by generate")->required()->check(CLI::ExistingFile);
  extract->add_option("-o,--output", x_output, "Feature file (default: <out>/features.csv)");
  extract->add_option("--grid", x_grid, "Pooling grid size")->check(CLI::PositiveNumber);

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate MS/MIS/FID/VR@FAR/Rank-1 on a feature file");
  std::string e_features;
  std::optional<int> e_folds;
  std::optional<std::vector<double>> e_far;
  std::optional<double> e_train_fraction;
  eval->add_option("feature_file", e_features, "label,NIR|VIS,v1,... rows")->required()->check(CLI::ExistingFile);
  eval->add_option("--folds", e_folds, "Identity-disjoint folds (0: whole set only)")->check(CLI::NonNegativeNumber);
  eval->add_option("--far", e_far, "FAR targets")->delimiter(',');
  eval->add_option("--train-fraction", e_train_fraction, "Share of identities held out for training per fold");

  // train-toy
  auto* toy = app.add_subcommand("train-toy", "Train the toy embedding network under several loss modes");
  std::string y_modes = "id,id+mmd,id+pmse,id+idmmd";
  std::optional<double> y_lambda, y_shift, y_lr;
  std::optional<int> y_pre, y_fine, y_ids, y_per_id, y_dim;
  toy->add_option("--modes", y_modes, "Comma-separated subset of id,id+mmd,id+pmse,id+idmmd");
  toy->add_option("--lambda", y_lambda, "Weight of the alignment term (default 100)");
  toy->add_option("--lr", y_lr, "Initial learning rate");
  toy->add_option("--epochs-pretrain", y_pre, "Identity-loss epochs");
  toy->add_option("--epochs-finetune", y_fine, "Fine-tuning epochs");
  toy->add_option("--num-ids", y_ids, "Synthetic identities");
  toy->add_option("--per-id", y_per_id, "Samples per identity and modality");
  toy->add_option("--dim", y_dim, "Input feature dimension");
  toy->add_option("--shift", y_shift, "Modality shift of the VIS samples");

  // fit-sigma
  auto* fit = app.add_subcommand("fit-sigma", "Fit the green->red normals blur width");
  std::string f_green, f_red;
  std::optional<double> f_sigma_max;
  fit->add_option("green_normals", f_green, "Green-channel (or VIS) normal map")->required()->check(CLI::ExistingFile);
  fit->add_option("red_normals", f_red, "Red-channel normal map")->required()->check(CLI::ExistingFile);
  fit->add_option("--sigma-max", f_sigma_max, "Upper end of the search range (texels)");

  // make-assets
  auto* assets = app.add_subcommand("make-assets", "Write procedural VIS bundles and environment maps");
  nirvis::AssetOptions a_opt;
  std::string a_format = "pfm";
  assets->add_option("--identities", a_opt.identities, "Number of identities")->check(CLI::PositiveNumber);
  assets->add_option("--envs", a_opt.environments, "Number of environment maps")->check(CLI::PositiveNumber);
  assets->add_option("--texture-size", a_opt.procedural.texture_size, "Texture resolution")->check(CLI::PositiveNumber);
  assets->add_option("--env-width", a_opt.env_width, "Environment map width")->check(CLI::PositiveNumber);
  assets->add_option("--red-sigma", a_opt.procedural.red_sigma, "Width relating red to VIS normals");
  assets->add_option("--format", a_format, "Map format")->check(CLI::IsMember({"pfm", "png"}));

  CLI11_PARSE(app, argc, argv);

  try {
    nirvis::PipelineConfig cfg = nirvis::resolve_config(config_path);
    override_if(seed, cfg.seed);
    override_if(jobs, cfg.jobs);
    if (out) cfg.out = *out;

    if (*transform) {
      override_if(t_sigma, cfg.transform.params.sigma);
      override_if(t_k_rough, cfg.transform.params.k_rough);
      override_if(t_sigma_range, cfg.transform.params.sigma_range);
      if (t_sigma_space) cfg.transform.params.sigma_space = t_sigma_space;
      override_if(t_green, cfg.wavelengths.w_green);
      override_if(t_red, cfg.wavelengths.w_red);
      override_if(t_nir, cfg.wavelengths.w_nir);
      if (t_no_fit) cfg.transform.fit_sigma = false;
      return nirvis::cmd_transform(cfg, t_asset, cfg.out);
    }
    if (*generate) {
      override_if(g_pairs, cfg.pairs_per_identity);
      override_if(g_spp, cfg.render.spp);
      override_if(g_width, cfg.render.width);
      override_if(g_height, cfg.render.height);
      override_if(g_exposure, cfg.render.exposure);
      if (g_sidecar) cfg.render.float_sidecar = true;
      std::vector<std::filesystem::path> dirs(g_assets.begin(), g_assets.end());
      return nirvis::cmd_generate(cfg, dirs, g_envs, cfg.out);
    }
    if (*extract) {
      const std::filesystem::path dest = x_output ? std::filesystem::path(*x_output) : cfg.out / "features.csv";
      return nirvis::cmd_extract_features(x_manifest, dest, x_grid);
    }
    if (*eval) {
      override_if(e_folds, cfg.eval.folds);
      override_if(e_far, cfg.eval.far_targets);
      override_if(e_train_fraction, cfg.eval.train_fraction);
      return nirvis::cmd_eval(cfg, e_features, cfg.out);
    }
    if (*toy) {
      nirvis::TrainConfig& tc = cfg.toy.train;
      override_if(y_lambda, tc.lambda);
      override_if(y_lr, tc.lr);
      override_if(y_pre, tc.epochs_pretrain);
      override_if(y_fine, tc.epochs_finetune);
      override_if(y_ids, cfg.toy.num_ids);
      override_if(y_per_id, cfg.toy.per_id);
      override_if(y_dim, cfg.toy.dim);
      override_if(y_shift, cfg.toy.modality_shift);
      return nirvis::cmd_train_toy(cfg, parse_modes(y_modes), cfg.out);
    }
    if (*fit) {
      if (f_sigma_max) cfg.transform.sigma_max = f_sigma_max;
      return nirvis::cmd_fit_sigma(cfg, f_green, f_red);
    }
    if (*assets) {
      a_opt.encoding = a_format == "png" ? nirvis::Encoding::u16 : nirvis::Encoding::f32;
      return nirvis::cmd_make_assets(cfg, a_opt, cfg.out);
    }
  } catch (const std::exception& e) {
    std::cerr << "nirvis: error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
