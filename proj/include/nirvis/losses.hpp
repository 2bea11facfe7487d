// Training objectives for cross-modal embeddings, all with analytic
// gradients with respect to the (already normalized) feature vectors.
//
//   id_loss      margin softmax over s*cos(theta) with margins (m1, m2, m3)
//   mmd_loss     squared RKHS distance between NIR and VIS mean embeddings
//   pmse_loss    mean squared distance of index-paired NIR/VIS features
//   idmmd_loss   per-identity RKHS distance between NIR and VIS centroids
//   total_loss   id_loss + lambda * idmmd_loss
//
// Kernels are RBF; with the median heuristic the bandwidth is computed from
// the kernel inputs and held constant for differentiation.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "nirvis/features.hpp"

namespace nirvis {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;

// -----------------------------------------------------------------------------
// Kernels
// -----------------------------------------------------------------------------

inline double rbf_kernel(const Eigen::Ref<const RowVectorXd>& x, const Eigen::Ref<const RowVectorXd>& y,
                         double bandwidth) {
  require(bandwidth > 0, "rbf_kernel: bandwidth must be positive");
  // Elementwise squared difference summed in index order; symmetric in x, y.
  double d2 = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    d2 += d * d;
  }
  return std::exp(-d2 / (2.0 * bandwidth * bandwidth));
}

/// Mean of RBF values over several bandwidths.
inline double rbf_kernel(const Eigen::Ref<const RowVectorXd>& x, const Eigen::Ref<const RowVectorXd>& y,
                         const std::vector<double>& bandwidths) {
  double s = 0;
  for (double bw : bandwidths) s += rbf_kernel(x, y, bw);
  return s / static_cast<double>(bandwidths.size());
}

/// Gradient of the multi-bandwidth kernel with respect to x.
inline RowVectorXd rbf_grad_x(const Eigen::Ref<const RowVectorXd>& x, const Eigen::Ref<const RowVectorXd>& y,
                              const std::vector<double>& bandwidths) {
  RowVectorXd g = RowVectorXd::Zero(x.size());
  const RowVectorXd diff = x - y;
  for (double bw : bandwidths) g -= rbf_kernel(x, y, bw) / (bw * bw) * diff;
  return g / static_cast<double>(bandwidths.size());
}

struct MedianBandwidth {
  double bandwidth = 0;
  bool degenerate = false;  ///< all points coincide; callers substitute 1.0
};

/// Median of pairwise Euclidean distances over distinct pairs (rows).
inline MedianBandwidth median_heuristic(const MatrixXd& pts) {
  require(pts.rows() >= 2, "median_heuristic: need at least two vectors");
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(pts.rows() * (pts.rows() - 1) / 2));
  for (Eigen::Index i = 0; i < pts.rows(); ++i)
    for (Eigen::Index j = i + 1; j < pts.rows(); ++j) d.push_back((pts.row(i) - pts.row(j)).norm());
  std::sort(d.begin(), d.end());
  const std::size_t n = d.size();
  const double med = n % 2 ? d[n / 2] : 0.5 * (d[n / 2 - 1] + d[n / 2]);
  return {med, med == 0.0};
}

struct KernelSpec {
  std::vector<double> bandwidths;  ///< used when use_median is false
  bool use_median = true;
  std::vector<double> median_multipliers{1.0};

  static KernelSpec fixed(double bw) { return {{bw}, false, {}}; }
  static KernelSpec fixed(std::vector<double> bws) { return {std::move(bws), false, {}}; }
  static KernelSpec median() { return {}; }
  static KernelSpec multi_median() { return {{}, true, {0.5, 1.0, 2.0, 4.0}}; }

  void validate() const {
    if (use_median) {
      require(!median_multipliers.empty(), "KernelSpec: empty multiplier list");
      for (double m : median_multipliers) require(m > 0, "KernelSpec: multipliers must be positive");
    } else {
      require(!bandwidths.empty(), "KernelSpec: no bandwidths");
      for (double b : bandwidths) require(b > 0, "KernelSpec: bandwidths must be positive");
    }
  }

  /// Concrete bandwidths for the given kernel inputs.
  std::vector<double> resolve(const MatrixXd& inputs) const {
    validate();
    if (!use_median) return bandwidths;
    double base = 1.0;
    if (inputs.rows() >= 2) {
      const auto m = nirvis::median_heuristic(inputs);
      base = m.degenerate ? 1.0 : m.bandwidth;
    }
    std::vector<double> out;
    for (double mult : median_multipliers) out.push_back(mult * base);
    return out;
  }
};

inline MatrixXd stack_rows(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd out(a.rows() + b.rows(), a.cols());
  out << a, b;
  return out;
}

inline double floor_negative(double v) { return (v < 0 && v >= -1e-12) ? 0.0 : v; }

// -----------------------------------------------------------------------------
// Batches
// -----------------------------------------------------------------------------

/// P identities x K images per modality. Row p*K + k of `nir`/`vis` holds
/// image k of identity p.
struct FeatureBatch {
  int p = 0;
  int k = 0;
  MatrixXd nir;
  MatrixXd vis;
  std::vector<int> identity_ids;

  int dim() const { return static_cast<int>(nir.cols()); }
  Eigen::Index row(int pi, int ki) const { return static_cast<Eigen::Index>(pi) * k + ki; }

  void validate(double tol = 1e-5) const {
    require(p >= 1 && k >= 1, "FeatureBatch: p and k must be >= 1");
    require(nir.rows() == p * k && vis.rows() == p * k && nir.cols() == vis.cols(),
            "FeatureBatch: matrix shape does not match p x k");
    require(static_cast<int>(identity_ids.size()) == p, "FeatureBatch: identity_ids size != p");
    require(std::set<int>(identity_ids.begin(), identity_ids.end()).size() == identity_ids.size(),
            "FeatureBatch: identity ids must be distinct");
    for (Eigen::Index i = 0; i < nir.rows(); ++i) {
      require(std::abs(nir.row(i).norm() - 1.0) <= tol, "FeatureBatch: NIR feature not unit-norm");
      require(std::abs(vis.row(i).norm() - 1.0) <= tol, "FeatureBatch: VIS feature not unit-norm");
    }
  }

  MatrixXd nir_centroids() const { return centroids(nir); }
  MatrixXd vis_centroids() const { return centroids(vis); }

 private:
  MatrixXd centroids(const MatrixXd& m) const {
    MatrixXd c = MatrixXd::Zero(p, m.cols());
    for (int pi = 0; pi < p; ++pi) {
      for (int ki = 0; ki < k; ++ki) c.row(pi) += m.row(row(pi, ki));
      c.row(pi) /= static_cast<double>(k);
    }
    return c;
  }
};

/// Value plus gradients with respect to the NIR and VIS inputs.
struct LossOutput {
  double value = 0;
  MatrixXd grad_nir;
  MatrixXd grad_vis;
};

// -----------------------------------------------------------------------------
// MMD / PMSE / ID-MMD
// -----------------------------------------------------------------------------

inline LossOutput mmd_loss(const MatrixXd& x_nir, const MatrixXd& x_vis, const std::vector<double>& bw) {
  require(x_nir.rows() >= 1 && x_vis.rows() >= 1, "mmd_loss: both sets must be non-empty");
  require(x_nir.cols() == x_vis.cols(), "mmd_loss: dimension mismatch");
  const double m = static_cast<double>(x_nir.rows()), n = static_cast<double>(x_vis.rows());
  LossOutput out;
  out.grad_nir = MatrixXd::Zero(x_nir.rows(), x_nir.cols());
  out.grad_vis = MatrixXd::Zero(x_vis.rows(), x_vis.cols());

  double knn = 0, kvv = 0, knv = 0;
  for (Eigen::Index i = 0; i < x_nir.rows(); ++i)
    for (Eigen::Index j = 0; j < x_nir.rows(); ++j) {
      knn += rbf_kernel(x_nir.row(i), x_nir.row(j), bw);
      if (i != j) out.grad_nir.row(i) += (2.0 / (m * m)) * rbf_grad_x(x_nir.row(i), x_nir.row(j), bw);
    }
  for (Eigen::Index i = 0; i < x_vis.rows(); ++i)
    for (Eigen::Index j = 0; j < x_vis.rows(); ++j) {
      kvv += rbf_kernel(x_vis.row(i), x_vis.row(j), bw);
      if (i != j) out.grad_vis.row(i) += (2.0 / (n * n)) * rbf_grad_x(x_vis.row(i), x_vis.row(j), bw);
    }
  for (Eigen::Index i = 0; i < x_nir.rows(); ++i)
    for (Eigen::Index j = 0; j < x_vis.rows(); ++j) {
      knv += rbf_kernel(x_nir.row(i), x_vis.row(j), bw);
      out.grad_nir.row(i) -= (2.0 / (m * n)) * rbf_grad_x(x_nir.row(i), x_vis.row(j), bw);
      out.grad_vis.row(j) -= (2.0 / (m * n)) * rbf_grad_x(x_vis.row(j), x_nir.row(i), bw);
    }
  out.value = floor_negative(knn / (m * m) + kvv / (n * n) - 2.0 * knv / (m * n));
  return out;
}

inline LossOutput mmd_loss(const MatrixXd& x_nir, const MatrixXd& x_vis, const KernelSpec& kern) {
  require(x_nir.rows() >= 1 && x_vis.rows() >= 1, "mmd_loss: both sets must be non-empty");
  return mmd_loss(x_nir, x_vis, kern.resolve(stack_rows(x_nir, x_vis)));
}

inline LossOutput pmse_loss(const FeatureBatch& batch) {
  const double pk = static_cast<double>(batch.p) * batch.k;
  LossOutput out;
  const MatrixXd diff = batch.nir - batch.vis;
  out.value = diff.rowwise().squaredNorm().sum() / pk;
  out.grad_nir = (2.0 / pk) * diff;
  out.grad_vis = -out.grad_nir;
  return out;
}

inline LossOutput idmmd_loss(const FeatureBatch& batch, const std::vector<double>& bw) {
  const MatrixXd cn = batch.nir_centroids();
  const MatrixXd cv = batch.vis_centroids();
  const double P = batch.p, K = batch.k;
  LossOutput out;
  out.grad_nir = MatrixXd::Zero(batch.nir.rows(), batch.nir.cols());
  out.grad_vis = MatrixXd::Zero(batch.vis.rows(), batch.vis.cols());
  double total = 0;
  for (int pi = 0; pi < batch.p; ++pi) {
    total += rbf_kernel(cn.row(pi), cn.row(pi), bw) + rbf_kernel(cv.row(pi), cv.row(pi), bw) -
             2.0 * rbf_kernel(cn.row(pi), cv.row(pi), bw);
    // k(c, c) is constant for stationary kernels; only the cross term moves.
    const RowVectorXd g_cn = -2.0 * rbf_grad_x(cn.row(pi), cv.row(pi), bw);
    const RowVectorXd g_cv = -2.0 * rbf_grad_x(cv.row(pi), cn.row(pi), bw);
    for (int ki = 0; ki < batch.k; ++ki) {
      out.grad_nir.row(batch.row(pi, ki)) = g_cn / (P * K);
      out.grad_vis.row(batch.row(pi, ki)) = g_cv / (P * K);
    }
  }
  out.value = floor_negative(total / P);
  return out;
}

inline LossOutput idmmd_loss(const FeatureBatch& batch, const KernelSpec& kern) {
  return idmmd_loss(batch, kern.resolve(stack_rows(batch.nir_centroids(), batch.vis_centroids())));
}

// -----------------------------------------------------------------------------
// Margin softmax
// -----------------------------------------------------------------------------

struct MarginConfig {
  double m1 = 1.0;  // multiplicative angular
  double m2 = 0.5;  // additive angular (radians)
  double m3 = 0.0;  // additive cosine
  double s = 64.0;

  void validate() const {
    require(s > 0, "MarginConfig: s must be positive");
    require(m1 >= 1, "MarginConfig: m1 must be >= 1");
    require(m2 >= 0 && m3 >= 0, "MarginConfig: m2 and m3 must be >= 0");
  }
};

inline constexpr double kThetaEps = 1e-6;

/// Rows are per-class weight vectors.
struct ClassifierWeights {
  MatrixXd rows;

  int classes() const { return static_cast<int>(rows.rows()); }
  void validate(double tol = 1e-5) const {
    require(rows.rows() >= 1, "ClassifierWeights: no classes");
    for (Eigen::Index i = 0; i < rows.rows(); ++i)
      require(std::abs(rows.row(i).norm() - 1.0) <= tol, "ClassifierWeights: row " + std::to_string(i) + " not unit-norm");
  }
  void renormalize() {
    for (Eigen::Index i = 0; i < rows.rows(); ++i) rows.row(i).normalize();
  }
};

struct IdLossOutput {
  double value = 0;
  MatrixXd grad_features;
  MatrixXd grad_weights;
};

enum class InputCheck { strict, none };

/// Margin-adjusted target logit s (cos(m1 theta + m2) - m3) and its derivative
/// with respect to cos(theta).
inline std::pair<double, double> margin_logit(double cos_t, const MarginConfig& cfg) {
  const double c = std::clamp(cos_t, -1.0, 1.0);
  const double hi = std::min(kPi - kThetaEps, (kPi - cfg.m2) / cfg.m1);
  const double raw = std::acos(c);
  const double theta = std::clamp(raw, kThetaEps, hi);
  const double ang = cfg.m1 * theta + cfg.m2;
  const double logit = cfg.s * (std::cos(ang) - cfg.m3);
  const bool clamped = theta != raw || cos_t != c;
  const double dlogit = clamped ? 0.0 : cfg.s * cfg.m1 * std::sin(ang) / std::sin(theta);
  return {logit, dlogit};
}

inline IdLossOutput id_loss(const MatrixXd& features, const std::vector<int>& labels, const ClassifierWeights& weights,
                            const MarginConfig& cfg, InputCheck check = InputCheck::strict) {
  cfg.validate();
  const Eigen::Index B = features.rows();
  require(B >= 1, "id_loss: empty feature set");
  require(static_cast<Eigen::Index>(labels.size()) == B, "id_loss: label count mismatch");
  require(features.cols() == weights.rows.cols(), "id_loss: dimension mismatch");
  const int C = weights.classes();
  for (int y : labels) require(y >= 0 && y < C, "id_loss: label out of range");
  if (check == InputCheck::strict) {
    weights.validate();
    for (Eigen::Index i = 0; i < B; ++i)
      require(std::abs(features.row(i).norm() - 1.0) <= 1e-5, "id_loss: feature " + std::to_string(i) + " not unit-norm");
  }

  const MatrixXd cosines = features * weights.rows.transpose();  // B x C
  IdLossOutput out;
  out.grad_features = MatrixXd::Zero(B, features.cols());
  out.grad_weights = MatrixXd::Zero(C, features.cols());
  double total = 0;
  std::vector<double> logits(C), dlogit_dcos(C);
  for (Eigen::Index i = 0; i < B; ++i) {
    const int y = labels[i];
    for (int j = 0; j < C; ++j) {
      if (j == y) {
        std::tie(logits[j], dlogit_dcos[j]) = margin_logit(cosines(i, j), cfg);
      } else {
        logits[j] = cfg.s * cosines(i, j);
        dlogit_dcos[j] = cfg.s;
      }
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double rest = 0;
    for (int j = 0; j < C; ++j)
      if (j != y) rest += std::exp(logits[j] - mx);
    const double target = std::exp(logits[y] - mx);
    const double lse = mx + std::log(target + rest);
    // log1p keeps the loss resolvable when the target logit dominates.
    total += mx == logits[y] ? std::log1p(rest) : lse - logits[y];
    for (int j = 0; j < C; ++j) {
      const double prob = std::exp(logits[j] - lse);
      const double dz = (prob - (j == y ? 1.0 : 0.0)) / static_cast<double>(B);
      const double dcos = dz * dlogit_dcos[j];
      out.grad_features.row(i) += dcos * weights.rows.row(j);
      out.grad_weights.row(j) += dcos * features.row(i);
    }
  }
  out.value = total / static_cast<double>(B);
  return out;
}

/// Plain softmax cross-entropy over s*cos(theta); the margin-free reference.
inline double softmax_cross_entropy(const MatrixXd& features, const std::vector<int>& labels,
                                    const ClassifierWeights& weights, double s) {
  const MatrixXd z = s * features * weights.rows.transpose();
  double total = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double mx = z.row(i).maxCoeff();
    total += mx + std::log((z.row(i).array() - mx).exp().sum()) - z(i, labels[i]);
  }
  return total / static_cast<double>(z.rows());
}

// -----------------------------------------------------------------------------
// Total objective
// -----------------------------------------------------------------------------

inline constexpr double kDefaultLambda = 100.0;

struct TotalLossOutput {
  double value = 0;
  double id_value = 0;
  double idmmd_value = 0;
  MatrixXd grad_nir;
  MatrixXd grad_vis;
  MatrixXd grad_weights;
};

/// Features of the batch as one matrix (all NIR rows, then all VIS rows) with
/// per-row class labels taken from identity_ids.
inline std::pair<MatrixXd, std::vector<int>> batch_as_classification(const FeatureBatch& batch) {
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(2 * batch.p * batch.k));
  for (int rep = 0; rep < 2; ++rep)
    for (int pi = 0; pi < batch.p; ++pi)
      for (int ki = 0; ki < batch.k; ++ki) labels.push_back(batch.identity_ids[pi]);
  return {stack_rows(batch.nir, batch.vis), std::move(labels)};
}

inline TotalLossOutput total_loss(const FeatureBatch& batch, const ClassifierWeights& weights, const MarginConfig& cfg,
                                  const std::vector<double>& bw, double lambda,
                                  InputCheck check = InputCheck::strict) {
  require(lambda >= 0, "total_loss: lambda must be >= 0");
  const auto [features, labels] = batch_as_classification(batch);
  const IdLossOutput id = id_loss(features, labels, weights, cfg, check);
  const LossOutput aux = idmmd_loss(batch, bw);
  const Eigen::Index n = batch.nir.rows();
  TotalLossOutput out;
  out.id_value = id.value;
  out.idmmd_value = aux.value;
  out.value = id.value + lambda * aux.value;
  out.grad_nir = id.grad_features.topRows(n) + lambda * aux.grad_nir;
  out.grad_vis = id.grad_features.bottomRows(n) + lambda * aux.grad_vis;
  out.grad_weights = id.grad_weights;
  return out;
}

inline TotalLossOutput total_loss(const FeatureBatch& batch, const ClassifierWeights& weights, const MarginConfig& cfg,
                                  const KernelSpec& kern, double lambda = kDefaultLambda) {
  return total_loss(batch, weights, cfg, kern.resolve(stack_rows(batch.nir_centroids(), batch.vis_centroids())),
                    lambda);
}

// -----------------------------------------------------------------------------
// Batch sampling
// -----------------------------------------------------------------------------

inline constexpr int kDefaultBatchIdentities = 32;
inline constexpr int kDefaultImagesPerModality = 8;

/// Dataset rows selected for a P x K batch.
struct BatchIndices {
  int p = 0, k = 0;
  std::vector<int> identity_ids;  // dataset identity indices, distinct
  std::vector<int> nir_rows;      // p*k, row pi*k + ki
  std::vector<int> vis_rows;
  bool with_replacement = false;  ///< some identity had fewer than k images
};

/// Picks p distinct identities (each with both modalities present) and k
/// images per modality for each. Deterministic per seed.
inline BatchIndices sample_batch_indices(const LabeledFeatures& data, int p, int k, std::uint64_t seed) {
  require(data.size() > 0, "sample_batch: empty dataset");
  require(p >= 1 && k >= 1, "sample_batch: p and k must be >= 1");
  const auto groups = data.groups();
  std::vector<int> eligible;
  for (int id = 0; id < data.identity_count(); ++id)
    if (!groups[id][0].empty() && !groups[id][1].empty()) eligible.push_back(id);
  require(static_cast<int>(eligible.size()) >= p,
          "sample_batch: need " + std::to_string(p) + " identities with both modalities, dataset has " +
              std::to_string(eligible.size()));

  Rng rng(seed);
  for (int i = 0; i < p; ++i) {
    const auto j = i + static_cast<int>(rng.index(eligible.size() - i));
    std::swap(eligible[i], eligible[j]);
  }
  BatchIndices b;
  b.p = p;
  b.k = k;
  b.identity_ids.assign(eligible.begin(), eligible.begin() + p);
  auto pick = [&](std::vector<int> pool, std::vector<int>& dst) {
    const int n = static_cast<int>(pool.size());
    if (n >= k) {
      for (int i = 0; i < k; ++i) {
        const auto j = i + static_cast<int>(rng.index(n - i));
        std::swap(pool[i], pool[j]);
        dst.push_back(pool[i]);
      }
    } else {
      b.with_replacement = true;
      for (int i = 0; i < k; ++i) dst.push_back(pool[rng.index(n)]);
    }
  };
  for (int id : b.identity_ids) {
    pick(groups[id][0], b.nir_rows);
    pick(groups[id][1], b.vis_rows);
  }
  return b;
}

struct SampledBatch {
  FeatureBatch batch;
  bool with_replacement = false;
};

/// Builds a validated FeatureBatch from dataset features (which must be
/// unit-norm embeddings).
inline SampledBatch sample_batch(const LabeledFeatures& data, int p = kDefaultBatchIdentities,
                                 int k = kDefaultImagesPerModality, std::uint64_t seed = 0) {
  const BatchIndices idx = sample_batch_indices(data, p, k, seed);
  SampledBatch s;
  s.with_replacement = idx.with_replacement;
  s.batch.p = p;
  s.batch.k = k;
  s.batch.identity_ids = idx.identity_ids;
  s.batch.nir.resize(static_cast<Eigen::Index>(p) * k, data.dim());
  s.batch.vis.resize(static_cast<Eigen::Index>(p) * k, data.dim());
  for (int r = 0; r < p * k; ++r) {
    s.batch.nir.row(r) = data.features.row(idx.nir_rows[r]);
    s.batch.vis.row(r) = data.features.row(idx.vis_rows[r]);
  }
  s.batch.validate();
  return s;
}

}  // namespace nirvis
