// Evaluation metrics over labeled two-modality features. Similarity is cosine
// throughout; a verification score t accepts when score >= t.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "nirvis/features.hpp"

namespace nirvis {

// -----------------------------------------------------------------------------
// Mean similarity (MS) and mean instance similarity (MIS)
// -----------------------------------------------------------------------------

enum class SimilarityMode { one_to_one, one_to_n };

/// 1v1: mean cosine over index-paired (NIR_k, VIS_k) of each identity.
/// 1vN: mean cosine over all same-identity cross-modal pairs (NIR_i, VIS_j)
/// with i != j. Pairs are pooled across identities.
inline double mean_similarity(const LabeledFeatures& f, SimilarityMode mode) {
  const auto groups = f.groups();
  double total = 0;
  long long count = 0;
  for (std::size_t id = 0; id < groups.size(); ++id) {
    const auto& nir = groups[id][0];
    const auto& vis = groups[id][1];
    if (mode == SimilarityMode::one_to_one) {
      require(nir.size() == vis.size() && !nir.empty(),
              "mean_similarity(1v1): identity '" + f.names[id] + "' lacks index-paired NIR/VIS images");
      for (std::size_t k = 0; k < nir.size(); ++k) {
        total += cosine(f.features.row(nir[k]), f.features.row(vis[k]));
        ++count;
      }
    } else {
      require(nir.size() >= 2 && vis.size() >= 2 && nir.size() == vis.size(),
              "mean_similarity(1vN): identity '" + f.names[id] + "' needs >= 2 paired images per modality");
      for (std::size_t i = 0; i < nir.size(); ++i)
        for (std::size_t j = 0; j < vis.size(); ++j) {
          if (i == j) continue;
          total += cosine(f.features.row(nir[i]), f.features.row(vis[j]));
          ++count;
        }
    }
  }
  require(count > 0, "mean_similarity: no pairs");
  return total / static_cast<double>(count);
}

enum class InstancePairing { vis_vis, nir_vis };

struct InstanceSimilarity {
  double value = 0;
  bool degenerate = false;  ///< identities indistinguishable (value ~ 1)
};

/// Mean cosine over all cross-identity pairs: unordered VIS-VIS pairs, or
/// ordered (NIR of a, VIS of b) pairs with a != b.
inline InstanceSimilarity mean_instance_similarity(const LabeledFeatures& f, InstancePairing pairing) {
  require(f.identity_count() >= 2, "mean_instance_similarity: need at least two identities");
  double total = 0;
  long long count = 0;
  for (int i = 0; i < f.size(); ++i) {
    if (pairing == InstancePairing::vis_vis) {
      if (f.modality[i] != Modality::vis) continue;
      for (int j = i + 1; j < f.size(); ++j) {
        if (f.modality[j] != Modality::vis || f.identity[j] == f.identity[i]) continue;
        total += cosine(f.features.row(i), f.features.row(j));
        ++count;
      }
    } else {
      if (f.modality[i] != Modality::nir) continue;
      for (int j = 0; j < f.size(); ++j) {
        if (f.modality[j] != Modality::vis || f.identity[j] == f.identity[i]) continue;
        total += cosine(f.features.row(i), f.features.row(j));
        ++count;
      }
    }
  }
  require(count > 0, "mean_instance_similarity: no cross-identity pairs for this pairing");
  InstanceSimilarity out{total / static_cast<double>(count), false};
  out.degenerate = out.value > 1.0 - 1e-9;
  return out;
}

// -----------------------------------------------------------------------------
// FID
// -----------------------------------------------------------------------------

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  void validate() const {
    require(cov.rows() == mean.size() && cov.cols() == mean.size(), "GaussianStats: shape mismatch");
    require((cov - cov.transpose()).cwiseAbs().maxCoeff() <= 1e-10, "GaussianStats: covariance not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
    require(es.eigenvalues().minCoeff() >= -1e-8, "GaussianStats: covariance is not positive semi-definite");
  }
};

/// Sample mean and unbiased (n - 1) covariance of the rows.
inline GaussianStats gaussian_stats(const Eigen::MatrixXd& rows) {
  require(rows.rows() >= 2, "gaussian_stats: need at least two vectors");
  GaussianStats s;
  s.mean = rows.colwise().mean().transpose();
  const Eigen::MatrixXd centered = rows.rowwise() - s.mean.transpose();
  s.cov = centered.transpose() * centered / static_cast<double>(rows.rows() - 1);
  s.cov = 0.5 * (s.cov + s.cov.transpose());
  return s;
}

inline constexpr double kPsdFloor = -1e-8;

/// Symmetric PSD square root; eigenvalues in (kPsdFloor, 0) clamp to 0.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  require(es.info() == Eigen::Success, std::string(what) + ": eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  require(ev.minCoeff() >= kPsdFloor, std::string(what) + ": matrix is not positive semi-definite");
  ev = ev.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

/// ‖mu_a - mu_b‖² + Tr(C_a + C_b - 2 (C_a C_b)^½), with the trace of the
/// square root taken from the eigenvalues of C_a^½ C_b C_a^½.
inline double fid(const GaussianStats& a, const GaussianStats& b) {
  require(a.mean.size() == b.mean.size(), "fid: dimension mismatch");
  a.validate();
  b.validate();
  const Eigen::MatrixXd sa = psd_sqrt(a.cov, "fid");
  const Eigen::MatrixXd inner = sa * b.cov * sa;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  const Eigen::VectorXd ev = es.eigenvalues();
  require(ev.minCoeff() >= kPsdFloor, "fid: C_a^1/2 C_b C_a^1/2 is not positive semi-definite");
  const double tr_sqrt = ev.cwiseMax(0.0).cwiseSqrt().sum();
  const double value = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * tr_sqrt;
  return std::max(0.0, value);
}

// -----------------------------------------------------------------------------
// Verification and identification
// -----------------------------------------------------------------------------

struct VrPoint {
  double far = 0;        ///< requested false accept rate
  double vr = 0;         ///< verification rate at the threshold
  double threshold = 0;  ///< accept iff score >= threshold
  double achieved_far = 0;
  bool imprecise = false;  ///< far below 1 / |impostors|
};

/// For each target FAR, the smallest threshold whose impostor acceptance
/// fraction does not exceed it; VR is the genuine acceptance at that
/// threshold. Ties among impostor scores resolve to the stricter threshold.
inline std::map<double, VrPoint> roc_vr_at_far(const std::vector<double>& genuine, const std::vector<double>& impostor,
                                               const std::vector<double>& far_targets) {
  require(!genuine.empty() && !impostor.empty(), "roc_vr_at_far: score lists must be non-empty");
  std::vector<double> imp = impostor;
  std::sort(imp.begin(), imp.end(), std::greater<>());
  std::vector<double> gen = genuine;
  std::sort(gen.begin(), gen.end());
  const double n_imp = static_cast<double>(imp.size());
  auto accepted = [](const std::vector<double>& ascending, double t) {
    return static_cast<double>(ascending.end() - std::lower_bound(ascending.begin(), ascending.end(), t));
  };
  std::vector<double> imp_asc(imp.rbegin(), imp.rend());

  std::map<double, VrPoint> out;
  for (double far : far_targets) {
    require(far >= 0 && far <= 1, "roc_vr_at_far: FAR target outside [0, 1]");
    VrPoint pt;
    pt.far = far;
    const auto allowed = static_cast<std::size_t>(std::floor(far * n_imp + 1e-9));
    pt.imprecise = allowed == 0;
    if (allowed >= imp.size()) {
      pt.threshold = -std::numeric_limits<double>::infinity();
    } else {
      // Just above the (allowed+1)-th highest impostor score.
      pt.threshold = std::nextafter(imp[allowed], std::numeric_limits<double>::infinity());
    }
    pt.vr = accepted(gen, pt.threshold) / static_cast<double>(gen.size());
    pt.achieved_far = accepted(imp_asc, pt.threshold) / n_imp;
    out[far] = pt;
  }
  return out;
}

/// Fraction of probes whose most similar gallery item shares their identity.
/// Ties go to the lowest gallery index. Identities are matched by name.
inline double rank1(const LabeledFeatures& gallery, const LabeledFeatures& probe) {
  require(gallery.size() > 0 && probe.size() > 0, "rank1: empty gallery or probe set");
  require(gallery.dim() == probe.dim(), "rank1: dimension mismatch");
  std::vector<std::string> gallery_names(gallery.size());
  for (int g = 0; g < gallery.size(); ++g) gallery_names[g] = gallery.names[gallery.identity[g]];
  for (int i = 0; i < probe.size(); ++i) {
    const std::string& name = probe.names[probe.identity[i]];
    require(std::find(gallery_names.begin(), gallery_names.end(), name) != gallery_names.end(),
            "rank1: probe identity '" + name + "' absent from gallery");
  }
  int hits = 0;
  for (int i = 0; i < probe.size(); ++i) {
    int best = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int g = 0; g < gallery.size(); ++g) {
      const double s = cosine(probe.features.row(i), gallery.features.row(g));
      if (s > best_score) {
        best_score = s;
        best = g;
      }
    }
    hits += gallery_names[best] == probe.names[probe.identity[i]];
  }
  return static_cast<double>(hits) / probe.size();
}

/// Rows of one modality as a standalone set (names shared).
inline LabeledFeatures modality_subset(const LabeledFeatures& f, Modality m) {
  LabeledFeatures out;
  out.names = f.names;
  std::vector<int> rows;
  for (int i = 0; i < f.size(); ++i)
    if (f.modality[i] == m) rows.push_back(i);
  out.features.resize(static_cast<Eigen::Index>(rows.size()), f.dim());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.identity.push_back(f.identity[rows[r]]);
    out.modality.push_back(m);
    out.features.row(static_cast<Eigen::Index>(r)) = f.features.row(rows[r]);
  }
  return out;
}

/// Genuine (same identity) and impostor NIR-VIS cosine scores.
inline std::pair<std::vector<double>, std::vector<double>> cross_modal_scores(const LabeledFeatures& f) {
  std::vector<double> genuine, impostor;
  for (int i = 0; i < f.size(); ++i) {
    if (f.modality[i] != Modality::nir) continue;
    for (int j = 0; j < f.size(); ++j) {
      if (f.modality[j] != Modality::vis) continue;
      const double s = cosine(f.features.row(i), f.features.row(j));
      (f.identity[i] == f.identity[j] ? genuine : impostor).push_back(s);
    }
  }
  return {genuine, impostor};
}

// -----------------------------------------------------------------------------
// Reports and the ten-fold protocol
// -----------------------------------------------------------------------------

inline const std::vector<double>& default_far_targets() {
  static const std::vector<double> t{1e-4, 1e-3, 1e-2};
  return t;
}

struct MetricReport {
  // NaN marks metrics not requested or not computable on this data.
  double ms_1v1 = std::numeric_limits<double>::quiet_NaN();
  double ms_1vN = std::numeric_limits<double>::quiet_NaN();
  double mis_visvis = std::numeric_limits<double>::quiet_NaN();
  double mis_nirvis = std::numeric_limits<double>::quiet_NaN();
  double fid = std::numeric_limits<double>::quiet_NaN();
  std::map<double, VrPoint> vr_at_far;
  double rank1 = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> notes;

  /// Flattened key -> value view (VR keys are "vr@far_<far>").
  std::map<std::string, double> scalars() const {
    std::map<std::string, double> m{{"ms_1v1", ms_1v1},         {"ms_1vN", ms_1vN}, {"mis_visvis", mis_visvis},
                                    {"mis_nirvis", mis_nirvis}, {"fid", fid},       {"rank1", rank1}};
    for (const auto& [far, pt] : vr_at_far) m["vr@far_" + format_far(far)] = pt.vr;
    return m;
  }

  static std::string format_far(double far) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", far);
    return buf;
  }
};

struct MetricSelection {
  bool ms = true, mis = true, fid = true, vr = true, rank1 = true;
  std::vector<double> far_targets = default_far_targets();
};

/// Every selected metric on one feature set: FID compares the NIR and VIS
/// feature distributions; Rank-1 uses VIS as gallery and NIR as probes.
inline MetricReport evaluate_metrics(const LabeledFeatures& f, const MetricSelection& sel = {}) {
  MetricReport r;
  auto attempt = [&](const char* name, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      r.notes.push_back(std::string(name) + ": " + e.what());
    }
  };
  if (sel.ms) {
    attempt("ms_1v1", [&] { r.ms_1v1 = mean_similarity(f, SimilarityMode::one_to_one); });
    attempt("ms_1vN", [&] { r.ms_1vN = mean_similarity(f, SimilarityMode::one_to_n); });
  }
  if (sel.mis) {
    attempt("mis_visvis", [&] { r.mis_visvis = mean_instance_similarity(f, InstancePairing::vis_vis).value; });
    attempt("mis_nirvis", [&] { r.mis_nirvis = mean_instance_similarity(f, InstancePairing::nir_vis).value; });
  }
  const LabeledFeatures nir = modality_subset(f, Modality::nir);
  const LabeledFeatures vis = modality_subset(f, Modality::vis);
  if (sel.fid)
    attempt("fid", [&] { r.fid = fid(gaussian_stats(nir.features), gaussian_stats(vis.features)); });
  if (sel.vr)
    attempt("vr", [&] {
      const auto [gen, imp] = cross_modal_scores(f);
      r.vr_at_far = roc_vr_at_far(gen, imp, sel.far_targets);
    });
  if (sel.rank1) attempt("rank1", [&] { r.rank1 = nirvis::rank1(vis, nir); });
  return r;
}

struct FoldSplit {
  std::vector<int> train_ids;
  std::vector<int> test_ids;
};

/// Identity-disjoint splits: each fold shuffles the identities and takes
/// round(train_fraction * n) of them (at least 1, at most n - 1) for training.
inline std::vector<FoldSplit> tenfold_splits(int identity_count, std::uint64_t seed, int folds = 10,
                                             double train_fraction = 0.5) {
  require(identity_count >= 2, "tenfold_protocol: need at least two identities");
  require(folds >= 1, "tenfold_protocol: folds must be >= 1");
  require(train_fraction > 0 && train_fraction < 1, "tenfold_protocol: train fraction must lie in (0, 1)");
  const int n_train = std::clamp(static_cast<int>(std::lround(train_fraction * identity_count)), 1, identity_count - 1);
  Rng rng(seed);
  std::vector<FoldSplit> out;
  for (int f = 0; f < folds; ++f) {
    std::vector<int> ids(identity_count);
    for (int i = 0; i < identity_count; ++i) ids[i] = i;
    for (int i = identity_count - 1; i > 0; --i) std::swap(ids[i], ids[rng.index(static_cast<std::uint64_t>(i) + 1)]);
    FoldSplit s;
    s.train_ids.assign(ids.begin(), ids.begin() + n_train);
    s.test_ids.assign(ids.begin() + n_train, ids.end());
    std::sort(s.train_ids.begin(), s.train_ids.end());
    std::sort(s.test_ids.begin(), s.test_ids.end());
    out.push_back(std::move(s));
  }
  return out;
}

struct Aggregate {
  double mean = 0;
  double std = 0;  ///< population standard deviation over folds
  int folds = 0;
};

struct TenfoldResult {
  std::vector<FoldSplit> splits;
  std::vector<MetricReport> folds;
  std::map<std::string, Aggregate> aggregate;  ///< over finite per-fold values
};

/// Runs the split protocol and evaluates every fold's test identities.
inline TenfoldResult tenfold_protocol(const LabeledFeatures& data, std::uint64_t seed, int folds = 10,
                                      double train_fraction = 0.5, const MetricSelection& sel = {}) {
  TenfoldResult res;
  res.splits = tenfold_splits(data.identity_count(), seed, folds, train_fraction);
  std::map<std::string, std::vector<double>> values;
  for (const auto& split : res.splits) {
    MetricReport r = evaluate_metrics(data.subset(split.test_ids), sel);
    for (const auto& [key, v] : r.scalars())
      if (std::isfinite(v)) values[key].push_back(v);
    res.folds.push_back(std::move(r));
  }
  for (const auto& [key, vs] : values) {
    Aggregate a;
    a.folds = static_cast<int>(vs.size());
    for (double v : vs) a.mean += v;
    a.mean /= a.folds;
    for (double v : vs) a.std += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(a.std / a.folds);
    res.aggregate[key] = a;
  }
  return res;
}

}  // namespace nirvis
