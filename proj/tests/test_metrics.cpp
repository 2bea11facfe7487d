#include <gtest/gtest.h>

#include <set>

#include "nirvis/metrics.hpp"
#include "oracles.hpp"

using namespace nirvis;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;

namespace {

/// ids x per_modality samples per modality, index-paired, unit rows.
LabeledFeatures random_set(std::mt19937& gen, int ids, int per, int dim) {
  LabeledFeatures f;
  for (int i = 0; i < ids; ++i)
    for (Modality m : {Modality::nir, Modality::vis})
      for (int k = 0; k < per; ++k) f.add("id" + std::to_string(i), m, oracle::unit_rows(gen, 1, dim).row(0));
  return f;
}

double cos_oracle(const RowVectorXd& a, const RowVectorXd& b) {
  double d = 0, na = 0, nb = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    d += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return d / std::sqrt(na * nb);
}

GaussianStats stats(Eigen::VectorXd mean, MatrixXd cov) { return {std::move(mean), std::move(cov)}; }

MatrixXd random_orthogonal(std::mt19937& gen, int dim) {
  std::normal_distribution<double> n;
  MatrixXd a(dim, dim);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = n(gen);
  return Eigen::HouseholderQR<MatrixXd>(a).householderQ();
}

}  // namespace

// ---------------------------------------------------------------------------
// MS / MIS
// ---------------------------------------------------------------------------

TEST(MeanSimilarity, Examples) {
  LabeledFeatures same;
  RowVectorXd v(3);
  v << 0.6, 0.8, 0.0;
  for (Modality m : {Modality::nir, Modality::vis})
    for (int k = 0; k < 3; ++k) same.add("a", m, v);
  EXPECT_NEAR(mean_similarity(same, SimilarityMode::one_to_one), 1.0, 1e-15);
  EXPECT_NEAR(mean_similarity(same, SimilarityMode::one_to_n), 1.0, 1e-15);

  std::mt19937 gen(1);
  LabeledFeatures anti;
  for (int k = 0; k < 3; ++k) {
    const RowVectorXd r = oracle::unit_rows(gen, 1, 4).row(0);
    anti.add("a", Modality::nir, r);
    anti.add("a", Modality::vis, -r);
  }
  EXPECT_NEAR(mean_similarity(anti, SimilarityMode::one_to_one), -1.0, 1e-15);

  LabeledFeatures unpaired;
  unpaired.add("a", Modality::nir, v);
  unpaired.add("a", Modality::nir, v);
  unpaired.add("a", Modality::vis, v);
  EXPECT_THROW(mean_similarity(unpaired, SimilarityMode::one_to_one), Error);
  EXPECT_THROW(mean_similarity(unpaired, SimilarityMode::one_to_n), Error);
}

TEST(MeanSimilarity, MatchesEnumerationAndIsPermutationInvariant) {
  std::mt19937 gen(2);
  for (int inst = 0; inst < 10; ++inst) {
    const int ids = 1 + gen() % 4, per = 2 + gen() % 3;
    const LabeledFeatures f = random_set(gen, ids, per, 5);
    double s1 = 0, sn = 0;
    int c1 = 0, cn = 0;
    for (int id = 0; id < ids; ++id) {
      const auto nir = f.rows_of(id, Modality::nir), vis = f.rows_of(id, Modality::vis);
      for (int i = 0; i < per; ++i)
        for (int j = 0; j < per; ++j) {
          const double c = cos_oracle(f.features.row(nir[i]), f.features.row(vis[j]));
          if (i == j) {
            s1 += c;
            ++c1;
          } else {
            sn += c;
            ++cn;
          }
        }
    }
    EXPECT_NEAR(mean_similarity(f, SimilarityMode::one_to_one), s1 / c1, 1e-12);
    EXPECT_NEAR(mean_similarity(f, SimilarityMode::one_to_n), sn / cn, 1e-12);

    // Reordering both modalities of an identity with the same permutation keeps index pairs.
    LabeledFeatures perm = f;
    const auto nir = f.rows_of(0, Modality::nir), vis = f.rows_of(0, Modality::vis);
    for (int k = 0; k < per; ++k) {
      perm.features.row(nir[k]) = f.features.row(nir[per - 1 - k]);
      perm.features.row(vis[k]) = f.features.row(vis[per - 1 - k]);
    }
    EXPECT_NEAR(mean_similarity(perm, SimilarityMode::one_to_one), s1 / c1, 1e-12);
    EXPECT_NEAR(mean_similarity(perm, SimilarityMode::one_to_n), sn / cn, 1e-12);
  }
}

TEST(MeanInstanceSimilarity, Examples) {
  LabeledFeatures ortho;
  ortho.add("a", Modality::vis, RowVectorXd::Unit(3, 0));
  ortho.add("a", Modality::nir, RowVectorXd::Unit(3, 0));
  ortho.add("b", Modality::vis, RowVectorXd::Unit(3, 1));
  ortho.add("b", Modality::nir, RowVectorXd::Unit(3, 1));
  EXPECT_NEAR(mean_instance_similarity(ortho, InstancePairing::vis_vis).value, 0.0, 1e-15);
  EXPECT_NEAR(mean_instance_similarity(ortho, InstancePairing::nir_vis).value, 0.0, 1e-15);

  LabeledFeatures same;
  for (const char* n : {"a", "b", "c"}) {
    same.add(n, Modality::vis, RowVectorXd::Unit(3, 2));
    same.add(n, Modality::nir, RowVectorXd::Unit(3, 2));
  }
  const auto mis = mean_instance_similarity(same, InstancePairing::vis_vis);
  EXPECT_NEAR(mis.value, 1.0, 1e-15);
  EXPECT_TRUE(mis.degenerate);
  EXPECT_FALSE(mean_instance_similarity(ortho, InstancePairing::vis_vis).degenerate);

  LabeledFeatures single;
  single.add("a", Modality::vis, RowVectorXd::Unit(3, 0));
  single.add("a", Modality::vis, RowVectorXd::Unit(3, 1));
  EXPECT_THROW(mean_instance_similarity(single, InstancePairing::vis_vis), Error);
}

TEST(MeanInstanceSimilarity, MatchesEnumeration) {
  std::mt19937 gen(3);
  for (int inst = 0; inst < 10; ++inst) {
    const LabeledFeatures f = random_set(gen, 3, 1 + gen() % 3, 6);
    double vv = 0, nv = 0;
    int cvv = 0, cnv = 0;
    for (int i = 0; i < f.size(); ++i)
      for (int j = 0; j < f.size(); ++j) {
        if (f.identity[i] == f.identity[j]) continue;
        const double c = cos_oracle(f.features.row(i), f.features.row(j));
        if (f.modality[i] == Modality::vis && f.modality[j] == Modality::vis && i < j) {
          vv += c;
          ++cvv;
        }
        if (f.modality[i] == Modality::nir && f.modality[j] == Modality::vis) {
          nv += c;
          ++cnv;
        }
      }
    EXPECT_NEAR(mean_instance_similarity(f, InstancePairing::vis_vis).value, vv / cvv, 1e-12);
    EXPECT_NEAR(mean_instance_similarity(f, InstancePairing::nir_vis).value, nv / cnv, 1e-12);
  }
}

// ---------------------------------------------------------------------------
// Gaussian statistics and FID
// ---------------------------------------------------------------------------

TEST(GaussianStats, TwoPointsAndDuplicates) {
  RowVectorXd v(3);
  v << 1, -2, 0.5;
  MatrixXd two(2, 3);
  two << v, -v;
  const GaussianStats s = gaussian_stats(two);
  EXPECT_LE(s.mean.norm(), 1e-15);
  EXPECT_LE((s.cov - 2 * v.transpose() * v).norm(), 1e-14);

  std::mt19937 gen(4);
  const MatrixXd a = oracle::unit_rows(gen, 20, 3);
  MatrixXd dup(40, 3);
  dup << a, a;
  EXPECT_LE((gaussian_stats(dup).mean - gaussian_stats(a).mean).norm(), 1e-15);
  EXPECT_THROW(gaussian_stats(a.topRows(1)), Error);
}

TEST(GaussianStats, MatchesTwoPassOracle) {
  std::mt19937 gen(5);
  std::normal_distribution<double> n(0.3, 2.0);
  MatrixXd x(50, 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(gen);
  double mu[4] = {0, 0, 0, 0};
  for (int r = 0; r < 50; ++r)
    for (int c = 0; c < 4; ++c) mu[c] += x(r, c) / 50;
  const GaussianStats s = gaussian_stats(x);
  for (int a = 0; a < 4; ++a) {
    EXPECT_NEAR(s.mean[a], mu[a], 1e-12);
    for (int b = 0; b < 4; ++b) {
      double c = 0;
      for (int r = 0; r < 50; ++r) c += (x(r, a) - mu[a]) * (x(r, b) - mu[b]);
      EXPECT_NEAR(s.cov(a, b), c / 49, 1e-12);
    }
  }
}

TEST(Fid, ClosedForms) {
  std::mt19937 gen(6);
  MatrixXd x(30, 4);
  std::normal_distribution<double> n;
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(gen);
  const GaussianStats a = gaussian_stats(x);
  EXPECT_NEAR(fid(a, a), 0.0, 1e-9);

  Eigen::VectorXd d(3);
  d << 0.5, -1.0, 2.0;
  EXPECT_NEAR(fid(stats(Eigen::VectorXd::Zero(3), MatrixXd::Identity(3, 3)), stats(d, MatrixXd::Identity(3, 3))),
              d.squaredNorm(), 1e-12);

  const MatrixXd c41 = Eigen::Vector2d(4, 1).asDiagonal(), c11 = MatrixXd::Identity(2, 2);
  EXPECT_NEAR(fid(stats(Eigen::VectorXd::Zero(2), c41), stats(Eigen::VectorXd::Zero(2), c11)), 1.0, 1e-9);
}

TEST(Fid, SymmetricNonNegativeAndCommutingDiagonalOracle) {
  std::mt19937 gen(7);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int inst = 0; inst < 20; ++inst) {
    const int dim = 1 + gen() % 6;
    std::normal_distribution<double> n;
    MatrixXd xa(10 + dim, dim), xb(12 + dim, dim);
    for (Eigen::Index i = 0; i < xa.size(); ++i) xa.data()[i] = n(gen);
    for (Eigen::Index i = 0; i < xb.size(); ++i) xb.data()[i] = 1.5 * n(gen) + 0.2;
    const GaussianStats a = gaussian_stats(xa), b = gaussian_stats(xb);
    EXPECT_NEAR(fid(a, b), fid(b, a), 1e-9);
    EXPECT_GE(fid(a, b), 0.0);

    // Diagonal covariances commute: FID = |dmu|^2 + sum (sqrt(a_i) - sqrt(b_i))^2.
    Eigen::VectorXd da(dim), db(dim), ma(dim), mb(dim);
    double expect = 0;
    for (int i = 0; i < dim; ++i) {
      da[i] = u(gen);
      db[i] = u(gen);
      ma[i] = u(gen);
      mb[i] = u(gen);
      expect += (ma[i] - mb[i]) * (ma[i] - mb[i]) + (std::sqrt(da[i]) - std::sqrt(db[i])) * (std::sqrt(da[i]) - std::sqrt(db[i]));
    }
    EXPECT_NEAR(fid(stats(ma, da.asDiagonal()), stats(mb, db.asDiagonal())), expect, 1e-9);
  }
}

TEST(Fid, RejectsNonPsdAndShapeMismatch) {
  const MatrixXd bad = Eigen::Vector2d(1, -0.1).asDiagonal();
  EXPECT_THROW(fid(stats(Eigen::VectorXd::Zero(2), bad), stats(Eigen::VectorXd::Zero(2), MatrixXd::Identity(2, 2))),
               Error);
  EXPECT_THROW(fid(stats(Eigen::VectorXd::Zero(2), MatrixXd::Identity(2, 2)),
                   stats(Eigen::VectorXd::Zero(3), MatrixXd::Identity(3, 3))),
               Error);
  // Rank-deficient covariance (within the PSD tolerance) is accepted.
  MatrixXd line(2, 2);
  line << 1, 1, 1, 1;
  EXPECT_GE(fid(stats(Eigen::VectorXd::Zero(2), line), stats(Eigen::VectorXd::Zero(2), line)), 0.0);
  EXPECT_NEAR(fid(stats(Eigen::VectorXd::Zero(2), line), stats(Eigen::VectorXd::Zero(2), line)), 0.0, 1e-7);
}

// ---------------------------------------------------------------------------
// VR@FAR
// ---------------------------------------------------------------------------

TEST(VrAtFar, HandEnumeratedNineImpostors) {
  const std::vector<double> imp{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  const auto r = roc_vr_at_far({0.55, 0.95}, imp, {1.0 / 9});
  const VrPoint& pt = r.at(1.0 / 9);
  EXPECT_EQ(pt.vr, 0.5);
  EXPECT_NEAR(pt.achieved_far, 1.0 / 9, 1e-15);
  EXPECT_FALSE(pt.imprecise);
  EXPECT_GT(pt.threshold, 0.8);
  EXPECT_LE(pt.threshold, 0.9);
}

TEST(VrAtFar, SeparatedTiesAndImprecise) {
  const auto sep = roc_vr_at_far({0.8, 0.9, 0.95}, {0.1, 0.2, 0.3, 0.4}, {0.25, 0.5, 1.0});
  for (const auto& [far, pt] : sep) EXPECT_EQ(pt.vr, 1.0) << far;

  // Tied impostors at the cut: the stricter threshold rejects all of them.
  const auto tie = roc_vr_at_far({0.5, 0.7}, {0.1, 0.5, 0.5, 0.2}, {0.25});
  EXPECT_EQ(tie.at(0.25).achieved_far, 0.0);
  EXPECT_EQ(tie.at(0.25).vr, 0.5);

  const auto tiny = roc_vr_at_far({0.5}, {0.1, 0.2}, {1e-4});
  EXPECT_TRUE(tiny.at(1e-4).imprecise);
  EXPECT_EQ(tiny.at(1e-4).achieved_far, 0.0);
  EXPECT_THROW(roc_vr_at_far({}, {0.1}, {0.1}), Error);
}

TEST(VrAtFar, MonotoneAndIdenticalListsGiveVrNearFar) {
  std::mt19937 gen(8);
  std::normal_distribution<double> n;
  std::vector<double> g(300), imp(1000);
  for (double& v : g) v = n(gen) + 1.0;
  for (double& v : imp) v = n(gen);
  std::vector<double> fars;
  for (int i = 0; i <= 1000; i += 7) fars.push_back(i / 1000.0);
  const auto r = roc_vr_at_far(g, imp, fars);
  double prev = -1;
  for (const auto& [far, pt] : r) {
    EXPECT_GE(pt.vr, prev) << far;
    EXPECT_LE(pt.achieved_far, far + 1e-12);
    prev = pt.vr;
  }
  const auto same = roc_vr_at_far(imp, imp, fars);
  for (const auto& [far, pt] : same) EXPECT_NEAR(pt.vr, far, 1.0 / 1000 + 1e-12) << far;
}

// ---------------------------------------------------------------------------
// Rank-1
// ---------------------------------------------------------------------------

TEST(Rank1, SeparatedAndTieRule) {
  std::mt19937 gen(9);
  LabeledFeatures gallery, probe;
  for (int i = 0; i < 4; ++i) {
    gallery.add("id" + std::to_string(i), Modality::vis, RowVectorXd::Unit(4, i));
    probe.add("id" + std::to_string(i), Modality::nir, (RowVectorXd::Unit(4, i) * 5 + 0.1 * oracle::unit_rows(gen, 1, 4).row(0)));
  }
  EXPECT_EQ(rank1(gallery, probe), 1.0);

  // Exactly between id0 and id1: the lower gallery index wins.
  LabeledFeatures mid_a, mid_b;
  mid_a.add("id0", Modality::nir, RowVectorXd::Unit(4, 0) + RowVectorXd::Unit(4, 1));
  mid_b.add("id1", Modality::nir, RowVectorXd::Unit(4, 0) + RowVectorXd::Unit(4, 1));
  EXPECT_EQ(rank1(gallery, mid_a), 1.0);
  EXPECT_EQ(rank1(gallery, mid_b), 0.0);

  LabeledFeatures stranger;
  stranger.add("nobody", Modality::nir, RowVectorXd::Unit(4, 0));
  EXPECT_THROW(rank1(gallery, stranger), Error);
}

TEST(Rank1, MatchesArgmaxOracleAndRotationInvariant) {
  std::mt19937 gen(10);
  for (int inst = 0; inst < 10; ++inst) {
    const LabeledFeatures f = random_set(gen, 4, 2, 5);
    const LabeledFeatures gallery = modality_subset(f, Modality::vis), probe = modality_subset(f, Modality::nir);
    int hits = 0;
    for (int i = 0; i < probe.size(); ++i) {
      int best = 0;
      for (int g = 1; g < gallery.size(); ++g)
        if (cos_oracle(probe.features.row(i), gallery.features.row(g)) >
            cos_oracle(probe.features.row(i), gallery.features.row(best)))
          best = g;
      hits += gallery.identity[best] == probe.identity[i];
    }
    const double r = rank1(gallery, probe);
    EXPECT_NEAR(r, hits / static_cast<double>(probe.size()), 1e-15);

    const MatrixXd q = random_orthogonal(gen, 5);
    LabeledFeatures rg = gallery, rp = probe;
    rg.features = gallery.features * q;
    rp.features = probe.features * q;
    EXPECT_EQ(rank1(rg, rp), r);
  }
}

// ---------------------------------------------------------------------------
// Ten-fold protocol
// ---------------------------------------------------------------------------

TEST(Tenfold, IdentityDisjointDeterministicDefaults) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const int n = 2 + static_cast<int>(seed % 30);
    const auto splits = tenfold_splits(n, seed);
    ASSERT_EQ(splits.size(), 10u);
    for (const auto& s : splits) {
      std::set<int> train(s.train_ids.begin(), s.train_ids.end()), all = train;
      for (int t : s.test_ids) {
        EXPECT_EQ(train.count(t), 0u);
        all.insert(t);
      }
      EXPECT_EQ(static_cast<int>(all.size()), n);
      EXPECT_FALSE(s.train_ids.empty());
      EXPECT_FALSE(s.test_ids.empty());
      EXPECT_LE(std::abs(static_cast<int>(s.train_ids.size()) - n / 2), 1);
    }
    const auto again = tenfold_splits(n, seed);
    for (std::size_t f = 0; f < splits.size(); ++f) {
      EXPECT_EQ(again[f].train_ids, splits[f].train_ids);
      EXPECT_EQ(again[f].test_ids, splits[f].test_ids);
    }
  }
  EXPECT_THROW(tenfold_splits(1, 0), Error);
}

TEST(Tenfold, AggregatesPerFoldReports) {
  std::mt19937 gen(11);
  const LabeledFeatures f = random_set(gen, 12, 2, 6);
  const TenfoldResult r = tenfold_protocol(f, 3);
  ASSERT_EQ(r.folds.size(), 10u);
  const Aggregate& a = r.aggregate.at("rank1");
  EXPECT_EQ(a.folds, 10);
  double mean = 0;
  for (const auto& fold : r.folds) mean += fold.rank1 / 10;
  EXPECT_NEAR(a.mean, mean, 1e-12);
  EXPECT_GE(a.std, 0.0);
  for (const auto& fold : r.folds) {
    EXPECT_GE(fold.ms_1v1, -1.0);
    EXPECT_LE(fold.ms_1v1, 1.0);
    EXPECT_GE(fold.fid, 0.0);
  }
}

TEST(EvaluateMetrics, WellSeparatedClustersAndNotes) {
  std::mt19937 gen(12);
  LabeledFeatures f;
  for (int i = 0; i < 5; ++i)
    for (Modality m : {Modality::nir, Modality::vis})
      for (int k = 0; k < 3; ++k)
        f.add("p" + std::to_string(i), m, RowVectorXd::Unit(8, i) + 0.05 * oracle::unit_rows(gen, 1, 8).row(0));
  const MetricReport r = evaluate_metrics(f);
  EXPECT_EQ(r.rank1, 1.0);
  for (const auto& [far, pt] : r.vr_at_far) EXPECT_EQ(pt.vr, 1.0) << far;
  EXPECT_GT(r.ms_1v1, 0.9);
  EXPECT_LT(std::abs(r.mis_visvis), 0.1);
  EXPECT_TRUE(r.notes.empty());

  LabeledFeatures one;
  one.add("a", Modality::nir, RowVectorXd::Unit(3, 0));
  one.add("a", Modality::vis, RowVectorXd::Unit(3, 0));
  const MetricReport partial = evaluate_metrics(one);
  EXPECT_TRUE(std::isnan(partial.mis_visvis));
  EXPECT_FALSE(partial.notes.empty());
}
