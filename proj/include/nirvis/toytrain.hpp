// Desk-scale trainer: a dim -> 64 -> 32 tanh network with L2-normalized
// output, a jointly trained normalized classifier, SGD with momentum and
// weight decay, and a two-stage schedule (identity loss, then identity loss
// plus a modality-alignment term).
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nirvis/features.hpp"
#include "nirvis/losses.hpp"

namespace nirvis {

enum class LossMode { id, id_mmd, id_pmse, id_idmmd };

inline const char* to_string(LossMode m) {
  switch (m) {
    case LossMode::id: return "id";
    case LossMode::id_mmd: return "id+mmd";
    case LossMode::id_pmse: return "id+pmse";
    case LossMode::id_idmmd: return "id+idmmd";
  }
  return "?";
}

inline LossMode parse_loss_mode(const std::string& s) {
  for (LossMode m : {LossMode::id, LossMode::id_mmd, LossMode::id_pmse, LossMode::id_idmmd})
    if (s == to_string(m)) return m;
  throw Error("unknown loss mode '" + s + "' (expected id, id+mmd, id+pmse or id+idmmd)");
}

struct TrainConfig {
  double lr = 1e-2;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double lr_decay_factor = 0.5;
  int lr_decay_every = 10;  // epochs
  int epochs_pretrain = 20;
  int epochs_finetune = 5;
  double lambda = kDefaultLambda;
  int p = kDefaultBatchIdentities;
  int k = kDefaultImagesPerModality;
  // Real / synthetic sample counts. Every sample carries equal weight, so the
  // identity loss is the batch mean; the counts are recorded for provenance.
  int n_r = 0;
  int n_s = 0;
  std::uint64_t seed = 0;
  int steps_per_epoch = 0;  ///< 0: one pass over the data per epoch
  int hidden = 64;
  int embedding = 32;
  MarginConfig margin{};
  KernelSpec kernel = KernelSpec::median();

  void validate() const {
    require(lr >= 0, "TrainConfig: lr must be >= 0");
    require(momentum >= 0 && momentum < 1, "TrainConfig: momentum must lie in [0, 1)");
    require(lambda >= 0, "TrainConfig: lambda must be >= 0");
    require(weight_decay >= 0, "TrainConfig: weight decay must be >= 0");
    require(lr_decay_every >= 1, "TrainConfig: lr_decay_every must be >= 1");
    require(epochs_pretrain >= 0 && epochs_finetune >= 0, "TrainConfig: negative epoch count");
    require(p >= 1 && k >= 1, "TrainConfig: p and k must be >= 1");
    require(hidden >= 1 && embedding >= 1, "TrainConfig: layer sizes must be >= 1");
    margin.validate();
    kernel.validate();
  }

  double lr_at(int epoch) const {
    return lr * std::pow(lr_decay_factor, static_cast<double>(epoch / lr_decay_every));
  }
};

// -----------------------------------------------------------------------------
// Synthetic data
// -----------------------------------------------------------------------------

inline constexpr double kSynthNoise = 0.35;

/// Identity clusters around random unit centres; VIS samples are offset along
/// one shared modality direction by `modality_shift` and renormalized.
inline LabeledFeatures synth_two_modality_data(std::uint64_t seed, int num_ids, int per_id, int dim,
                                               double modality_shift) {
  require(num_ids >= 1 && per_id >= 1 && dim >= 1, "synth_two_modality_data: counts must be >= 1");
  Rng rng(seed);
  auto unit = [&] {
    RowVectorXd v(dim);
    for (int i = 0; i < dim; ++i) v[i] = rng.normal();
    return RowVectorXd(v.normalized());
  };
  const RowVectorXd shift_dir = unit();
  LabeledFeatures out;
  out.features.resize(static_cast<Eigen::Index>(num_ids) * per_id * 2, dim);
  Eigen::Index row = 0;
  for (int id = 0; id < num_ids; ++id) {
    out.names.push_back("id" + std::to_string(id));
    const RowVectorXd center = unit();
    for (Modality m : {Modality::nir, Modality::vis})
      for (int j = 0; j < per_id; ++j) {
        RowVectorXd x = center;
        for (int i = 0; i < dim; ++i) x[i] += kSynthNoise / std::sqrt(static_cast<double>(dim)) * rng.normal();
        x.normalize();
        if (m == Modality::vis) x = (x + modality_shift * shift_dir).normalized();
        out.features.row(row++) = x;
        out.identity.push_back(id);
        out.modality.push_back(m);
      }
  }
  return out;
}

// -----------------------------------------------------------------------------
// Model
// -----------------------------------------------------------------------------

struct ToyModel {
  MatrixXd w1;  // hidden x input
  Eigen::VectorXd b1;
  MatrixXd w2;  // embedding x hidden
  Eigen::VectorXd b2;

  static ToyModel init(int input, int hidden, int embedding, Rng& rng) {
    ToyModel m;
    auto fill = [&](MatrixXd& w, int rows, int cols) {
      w.resize(rows, cols);
      const double scale = std::sqrt(1.0 / cols);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = scale * rng.normal();
    };
    fill(m.w1, hidden, input);
    fill(m.w2, embedding, hidden);
    m.b1 = Eigen::VectorXd::Zero(hidden);
    m.b2 = Eigen::VectorXd::Zero(embedding);
    return m;
  }

  struct Cache {
    MatrixXd x, h, z, e;
    Eigen::VectorXd norms;
  };

  /// Rows of x in, unit-norm embedding rows out.
  Cache forward(const MatrixXd& x) const {
    Cache c;
    c.x = x;
    c.h = ((x * w1.transpose()).rowwise() + b1.transpose()).array().tanh().matrix();
    c.z = (c.h * w2.transpose()).rowwise() + b2.transpose();
    c.norms = c.z.rowwise().norm();
    require((c.norms.array() > 0).all(), "ToyModel: zero pre-normalization output");
    c.e = c.norms.asDiagonal().inverse() * c.z;
    return c;
  }
  MatrixXd embed(const MatrixXd& x) const { return forward(x).e; }

  /// Gradients of a loss with dL/de = de; same layout as the model.
  ToyModel backward(const Cache& c, const MatrixXd& de) const {
    // d(z/|z|)/dz = (I - e e^T) / |z|
    const Eigen::VectorXd proj = (c.e.array() * de.array()).rowwise().sum();
    const MatrixXd dz = c.norms.asDiagonal().inverse() * (de - proj.asDiagonal() * c.e);
    ToyModel g;
    g.w2 = dz.transpose() * c.h;
    g.b2 = dz.colwise().sum().transpose();
    const MatrixXd dh = dz * w2;
    const MatrixXd da = (dh.array() * (1.0 - c.h.array().square())).matrix();
    g.w1 = da.transpose() * c.x;
    g.b1 = da.colwise().sum().transpose();
    return g;
  }

  bool all_finite() const {
    return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
  }

  std::size_t parameter_count() const {
    return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size());
  }
  /// Parameters in a fixed order (w1, b1, w2, b2), column-major within each.
  std::vector<double*> parameters() {
    std::vector<double*> out;
    auto add = [&](double* p, Eigen::Index n) {
      for (Eigen::Index i = 0; i < n; ++i) out.push_back(p + i);
    };
    add(w1.data(), w1.size());
    add(b1.data(), b1.size());
    add(w2.data(), w2.size());
    add(b2.data(), b2.size());
    return out;
  }

  bool operator==(const ToyModel& o) const { return w1 == o.w1 && b1 == o.b1 && w2 == o.w2 && b2 == o.b2; }
};

// -----------------------------------------------------------------------------
// Objective on a minibatch
// -----------------------------------------------------------------------------

struct BatchObjective {
  double value = 0;
  double id = 0;
  double aux = 0;
  ToyModel grad_model;
  MatrixXd grad_classifier;
};

/// Loss of one P x K batch given raw inputs (rows p*K + k for each modality),
/// back-propagated through normalization and both layers.
inline BatchObjective batch_objective(const ToyModel& model, const ClassifierWeights& classifier, const MatrixXd& x_nir,
                                      const MatrixXd& x_vis, const std::vector<int>& identity_ids, int k, LossMode mode,
                                      double lambda, const MarginConfig& margin, const KernelSpec& kernel,
                                      const std::optional<std::vector<double>>& fixed_bw = std::nullopt) {
  const auto cache = model.forward(stack_rows(x_nir, x_vis));
  const Eigen::Index n = x_nir.rows();
  FeatureBatch batch;
  batch.p = static_cast<int>(identity_ids.size());
  batch.k = k;
  batch.identity_ids = identity_ids;
  batch.nir = cache.e.topRows(n);
  batch.vis = cache.e.bottomRows(n);

  const auto [features, labels] = batch_as_classification(batch);
  const IdLossOutput id = id_loss(features, labels, classifier, margin, InputCheck::none);
  MatrixXd de = id.grad_features;
  BatchObjective out;
  out.id = id.value;
  if (mode != LossMode::id && lambda > 0) {
    LossOutput aux;
    if (mode == LossMode::id_pmse) {
      aux = pmse_loss(batch);
    } else if (mode == LossMode::id_mmd) {
      aux = fixed_bw ? mmd_loss(batch.nir, batch.vis, *fixed_bw) : mmd_loss(batch.nir, batch.vis, kernel);
    } else {
      aux = fixed_bw ? idmmd_loss(batch, *fixed_bw) : idmmd_loss(batch, kernel);
    }
    out.aux = aux.value;
    de.topRows(n) += lambda * aux.grad_nir;
    de.bottomRows(n) += lambda * aux.grad_vis;
  }
  out.value = out.id + (mode == LossMode::id ? 0.0 : lambda * out.aux);
  out.grad_model = model.backward(cache, de);
  out.grad_classifier = id.grad_weights;
  return out;
}

// -----------------------------------------------------------------------------
// Evaluation on the full dataset
// -----------------------------------------------------------------------------

struct EpochRecord {
  int epoch = 0;  ///< 0 = before training
  std::string stage;
  double lr = 0;
  double id_loss = 0;
  double mmd = 0;
  double pmse = 0;
  double idmmd = 0;
  double objective = 0;   ///< objective of the stage, on the full data
  double batch_mean = 0;  ///< mean minibatch objective during the epoch
  double centroid_cosine = 0;

  double aux_for(LossMode m) const {
    switch (m) {
      case LossMode::id: return 0.0;
      case LossMode::id_mmd: return mmd;
      case LossMode::id_pmse: return pmse;
      case LossMode::id_idmmd: return idmmd;
    }
    return 0.0;
  }
  double objective_for(LossMode m, double lambda) const { return id_loss + lambda * aux_for(m); }
};

/// Mean over identities of cos(NIR centroid, VIS centroid) of the embeddings.
inline double cross_modal_centroid_cosine(const LabeledFeatures& embedded) {
  const auto groups = embedded.groups();
  double total = 0;
  int counted = 0;
  for (const auto& g : groups) {
    if (g[0].empty() || g[1].empty()) continue;
    RowVectorXd cn = RowVectorXd::Zero(embedded.dim()), cv = RowVectorXd::Zero(embedded.dim());
    for (int r : g[0]) cn += embedded.features.row(r);
    for (int r : g[1]) cv += embedded.features.row(r);
    total += cosine(cn, cv);
    ++counted;
  }
  require(counted > 0, "cross_modal_centroid_cosine: no identity has both modalities");
  return total / counted;
}

inline LabeledFeatures embed_dataset(const ToyModel& model, const LabeledFeatures& data) {
  LabeledFeatures out = data;
  out.features = model.embed(data.features);
  return out;
}

/// Identity loss and all three alignment terms on the whole dataset.
inline EpochRecord evaluate_full(const ToyModel& model, const ClassifierWeights& classifier, const LabeledFeatures& data,
                                 const TrainConfig& cfg) {
  const LabeledFeatures emb = embed_dataset(model, data);
  EpochRecord r;
  r.id_loss = id_loss(emb.features, emb.identity, classifier, cfg.margin, InputCheck::none).value;

  const auto groups = emb.groups();
  std::vector<int> nir_rows, vis_rows;
  std::vector<RowVectorXd> cn, cv;
  double pmse = 0;
  int pairs = 0;
  for (const auto& g : groups) {
    nir_rows.insert(nir_rows.end(), g[0].begin(), g[0].end());
    vis_rows.insert(vis_rows.end(), g[1].begin(), g[1].end());
    if (g[0].empty() || g[1].empty()) continue;
    const std::size_t n = std::min(g[0].size(), g[1].size());
    for (std::size_t i = 0; i < n; ++i) {
      pmse += (emb.features.row(g[0][i]) - emb.features.row(g[1][i])).squaredNorm();
      ++pairs;
    }
    RowVectorXd a = RowVectorXd::Zero(emb.dim()), b = RowVectorXd::Zero(emb.dim());
    for (int i : g[0]) a += emb.features.row(i);
    for (int i : g[1]) b += emb.features.row(i);
    cn.push_back(a / static_cast<double>(g[0].size()));
    cv.push_back(b / static_cast<double>(g[1].size()));
  }
  r.pmse = pairs ? pmse / pairs : 0.0;

  MatrixXd xn(static_cast<Eigen::Index>(nir_rows.size()), emb.dim()), xv(static_cast<Eigen::Index>(vis_rows.size()), emb.dim());
  for (std::size_t i = 0; i < nir_rows.size(); ++i) xn.row(static_cast<Eigen::Index>(i)) = emb.features.row(nir_rows[i]);
  for (std::size_t i = 0; i < vis_rows.size(); ++i) xv.row(static_cast<Eigen::Index>(i)) = emb.features.row(vis_rows[i]);
  if (xn.rows() > 0 && xv.rows() > 0) r.mmd = mmd_loss(xn, xv, cfg.kernel).value;

  if (!cn.empty()) {
    FeatureBatch centroids;
    centroids.p = static_cast<int>(cn.size());
    centroids.k = 1;
    centroids.nir.resize(centroids.p, emb.dim());
    centroids.vis.resize(centroids.p, emb.dim());
    for (int i = 0; i < centroids.p; ++i) {
      centroids.nir.row(i) = cn[i];
      centroids.vis.row(i) = cv[i];
      centroids.identity_ids.push_back(i);
    }
    r.idmmd = idmmd_loss(centroids, cfg.kernel).value;
  }
  r.centroid_cosine = cross_modal_centroid_cosine(emb);
  return r;
}

// -----------------------------------------------------------------------------
// Training
// -----------------------------------------------------------------------------

struct TrainResult {
  ToyModel model;
  ClassifierWeights classifier;
  std::vector<EpochRecord> history;
  bool diverged = false;
  std::string diagnostic;
  int effective_p = 0;
};

namespace detail {

struct Momentum {
  ToyModel model;
  MatrixXd classifier;
};

inline void sgd_update(MatrixXd& w, MatrixXd& v, const MatrixXd& g, double lr, const TrainConfig& cfg) {
  v = cfg.momentum * v + (g + cfg.weight_decay * w);
  w -= lr * v;
}
inline void sgd_update(Eigen::VectorXd& w, Eigen::VectorXd& v, const Eigen::VectorXd& g, double lr,
                       const TrainConfig& cfg) {
  v = cfg.momentum * v + (g + cfg.weight_decay * w);
  w -= lr * v;
}

}  // namespace detail

/// Pretrain with the identity loss, then fine-tune with identity loss plus
/// lambda times the alignment term selected by `mode` (identity loss only for
/// LossMode::id). One EpochRecord per epoch, plus the initial state.
inline TrainResult train(const TrainConfig& cfg, const LabeledFeatures& data, LossMode mode) {
  cfg.validate();
  require(data.size() > 0, "train: empty dataset");
  int eligible = 0;
  for (const auto& g : data.groups()) eligible += !g[0].empty() && !g[1].empty();
  require(eligible >= 1, "train: no identity has both modalities");

  TrainResult res;
  res.effective_p = std::min(cfg.p, eligible);
  Rng init_rng(hash_combine(cfg.seed, 0x494e4954ull));
  res.model = ToyModel::init(data.dim(), cfg.hidden, cfg.embedding, init_rng);
  res.classifier.rows.resize(data.identity_count(), cfg.embedding);
  for (Eigen::Index i = 0; i < res.classifier.rows.size(); ++i) res.classifier.rows.data()[i] = init_rng.normal();
  res.classifier.renormalize();

  detail::Momentum vel;
  vel.model.w1 = MatrixXd::Zero(res.model.w1.rows(), res.model.w1.cols());
  vel.model.b1 = Eigen::VectorXd::Zero(res.model.b1.size());
  vel.model.w2 = MatrixXd::Zero(res.model.w2.rows(), res.model.w2.cols());
  vel.model.b2 = Eigen::VectorXd::Zero(res.model.b2.size());
  vel.classifier = MatrixXd::Zero(res.classifier.rows.rows(), res.classifier.rows.cols());

  const int batch_rows = 2 * res.effective_p * cfg.k;
  const int steps = cfg.steps_per_epoch > 0 ? cfg.steps_per_epoch : std::max(1, (data.size() + batch_rows - 1) / batch_rows);

  EpochRecord initial = evaluate_full(res.model, res.classifier, data, cfg);
  initial.epoch = 0;
  initial.stage = "init";
  initial.objective = initial.id_loss;
  res.history.push_back(initial);

  const int total_epochs = cfg.epochs_pretrain + cfg.epochs_finetune;
  for (int epoch = 0; epoch < total_epochs; ++epoch) {
    const bool finetune = epoch >= cfg.epochs_pretrain;
    const LossMode stage_mode = finetune ? mode : LossMode::id;
    const double lr = cfg.lr_at(epoch);
    double batch_sum = 0;
    for (int step = 0; step < steps; ++step) {
      const auto idx = sample_batch_indices(data, res.effective_p, cfg.k,
                                            hash_combine(hash_combine(cfg.seed, static_cast<std::uint64_t>(epoch)),
                                                         static_cast<std::uint64_t>(step)));
      MatrixXd xn(static_cast<Eigen::Index>(idx.nir_rows.size()), data.dim());
      MatrixXd xv(static_cast<Eigen::Index>(idx.vis_rows.size()), data.dim());
      for (std::size_t i = 0; i < idx.nir_rows.size(); ++i) {
        xn.row(static_cast<Eigen::Index>(i)) = data.features.row(idx.nir_rows[i]);
        xv.row(static_cast<Eigen::Index>(i)) = data.features.row(idx.vis_rows[i]);
      }
      const BatchObjective obj = batch_objective(res.model, res.classifier, xn, xv, idx.identity_ids, cfg.k,
                                                 stage_mode, cfg.lambda, cfg.margin, cfg.kernel);
      if (!std::isfinite(obj.value)) {
        res.diverged = true;
        res.diagnostic = "non-finite loss at epoch " + std::to_string(epoch + 1) + ", step " + std::to_string(step);
        return res;
      }
      batch_sum += obj.value;
      if (lr == 0.0) continue;
      detail::sgd_update(res.model.w1, vel.model.w1, obj.grad_model.w1, lr, cfg);
      detail::sgd_update(res.model.b1, vel.model.b1, obj.grad_model.b1, lr, cfg);
      detail::sgd_update(res.model.w2, vel.model.w2, obj.grad_model.w2, lr, cfg);
      detail::sgd_update(res.model.b2, vel.model.b2, obj.grad_model.b2, lr, cfg);
      detail::sgd_update(res.classifier.rows, vel.classifier, obj.grad_classifier, lr, cfg);
      res.classifier.renormalize();
      if (!res.model.all_finite()) {
        res.diverged = true;
        res.diagnostic = "non-finite parameters at epoch " + std::to_string(epoch + 1) + ", step " + std::to_string(step);
        return res;
      }
    }
    EpochRecord rec = evaluate_full(res.model, res.classifier, data, cfg);
    rec.epoch = epoch + 1;
    rec.stage = finetune ? "finetune" : "pretrain";
    rec.lr = lr;
    rec.objective = rec.objective_for(stage_mode, cfg.lambda);
    rec.batch_mean = batch_sum / steps;
    if (!std::isfinite(rec.objective)) {
      res.history.push_back(rec);
      res.diverged = true;
      res.diagnostic = "non-finite evaluation loss after epoch " + std::to_string(epoch + 1);
      return res;
    }
    res.history.push_back(rec);
  }
  return res;
}

}  // namespace nirvis
