// Labeled two-modality feature sets and their delimited-text file format:
//   <identity label>,<NIR|VIS>,<v1>,...,<v_dim>
// one row per image. Blank lines and lines starting with '#' are ignored.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nirvis/core.hpp"

namespace nirvis {

enum class Modality { nir, vis };

inline const char* to_string(Modality m) { return m == Modality::nir ? "NIR" : "VIS"; }

/// Row-per-sample feature matrix with identity and modality labels.
/// Identities are dense indices into `names`.
struct LabeledFeatures {
  std::vector<std::string> names;
  std::vector<int> identity;
  std::vector<Modality> modality;
  Eigen::MatrixXd features;  // rows = samples

  int size() const { return static_cast<int>(identity.size()); }
  int dim() const { return static_cast<int>(features.cols()); }
  int identity_count() const { return static_cast<int>(names.size()); }

  /// Row indices of (identity, modality) in file order.
  std::vector<int> rows_of(int id, Modality m) const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i)
      if (identity[i] == id && modality[i] == m) out.push_back(i);
    return out;
  }

  /// Rows grouped [identity][modality] in one pass.
  std::vector<std::array<std::vector<int>, 2>> groups() const {
    std::vector<std::array<std::vector<int>, 2>> g(names.size());
    for (int i = 0; i < size(); ++i) g[identity[i]][modality[i] == Modality::nir ? 0 : 1].push_back(i);
    return g;
  }

  /// Subset restricted to the given identities (re-indexed in the given order).
  LabeledFeatures subset(const std::vector<int>& ids) const {
    std::vector<int> remap(names.size(), -1);
    LabeledFeatures out;
    for (int id : ids) {
      remap[id] = static_cast<int>(out.names.size());
      out.names.push_back(names[id]);
    }
    std::vector<int> rows;
    for (int i = 0; i < size(); ++i)
      if (remap[identity[i]] >= 0) rows.push_back(i);
    out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      out.identity.push_back(remap[identity[rows[r]]]);
      out.modality.push_back(modality[rows[r]]);
      out.features.row(static_cast<Eigen::Index>(r)) = features.row(rows[r]);
    }
    return out;
  }

  /// Appends one sample; `name` is interned.
  void add(const std::string& name, Modality m, const Eigen::RowVectorXd& f) {
    auto it = std::find(names.begin(), names.end(), name);
    int id = static_cast<int>(it - names.begin());
    if (it == names.end()) names.push_back(name);
    if (features.rows() == 0) features.resize(0, f.size());
    require(f.size() == features.cols(), "LabeledFeatures::add: dimension mismatch");
    identity.push_back(id);
    modality.push_back(m);
    features.conservativeResize(features.rows() + 1, Eigen::NoChange);
    features.row(features.rows() - 1) = f;
  }
};

/// Parses a feature file; every malformed line is listed in the error.
inline LabeledFeatures load_features(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "load_features: cannot open " + path.string());
  std::map<std::string, int> ids;
  LabeledFeatures out;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> problems;
  std::string line;
  int line_no = 0;
  int dim = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
    auto bad = [&](const std::string& why) { problems.push_back("line " + std::to_string(line_no) + ": " + why); };
    if (cols.size() < 3) {
      bad("expected <identity>,<NIR|VIS>,<features...>");
      continue;
    }
    Modality m;
    if (cols[1] == "NIR") {
      m = Modality::nir;
    } else if (cols[1] == "VIS") {
      m = Modality::vis;
    } else {
      bad("missing or invalid modality column '" + cols[1] + "'");
      continue;
    }
    std::vector<double> vals;
    bool ok = true;
    for (std::size_t c = 2; c < cols.size(); ++c) {
      double v = 0;
      const char* b = cols[c].data();
      const char* e = b + cols[c].size();
      while (b < e && *b == ' ') ++b;
      auto [ptr, ec] = std::from_chars(b, e, v);
      if (ec != std::errc() || ptr != e || !std::isfinite(v)) {
        bad("invalid feature value '" + cols[c] + "'");
        ok = false;
        break;
      }
      vals.push_back(v);
    }
    if (!ok) continue;
    if (dim < 0) dim = static_cast<int>(vals.size());
    if (static_cast<int>(vals.size()) != dim) {
      bad("expected " + std::to_string(dim) + " feature values, found " + std::to_string(vals.size()));
      continue;
    }
    auto [it, inserted] = ids.emplace(cols[0], static_cast<int>(out.names.size()));
    if (inserted) out.names.push_back(cols[0]);
    out.identity.push_back(it->second);
    out.modality.push_back(m);
    rows.push_back(std::move(vals));
  }
  if (!problems.empty()) {
    std::string msg = "load_features: " + path.string() + ": malformed rows:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw Error(msg);
  }
  require(!rows.empty(), "load_features: " + path.string() + ": no feature rows");
  out.features.resize(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (int c = 0; c < dim; ++c) out.features(static_cast<Eigen::Index>(r), c) = rows[r][c];
  return out;
}

inline void save_features(const LabeledFeatures& f, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), "save_features: cannot open " + path.string());
  out.precision(17);
  for (int i = 0; i < f.size(); ++i) {
    out << f.names[f.identity[i]] << ',' << to_string(f.modality[i]);
    for (int c = 0; c < f.dim(); ++c) out << ',' << f.features(i, c);
    out << '\n';
  }
  require(out.good(), "save_features: write failure on " + path.string());
}

/// Cosine similarity of two rows (not assumed unit-norm).
inline double cosine(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b) {
  const double na = a.norm(), nb = b.norm();
  require(na > 0 && nb > 0, "cosine: zero vector");
  return a.dot(b) / (na * nb);
}

}  // namespace nirvis
