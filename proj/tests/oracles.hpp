// Independent reference implementations used by the unit and acceptance
// tests. Written directly from the definitions with plain loops; nothing here
// calls the routine it checks.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "nirvis/losses.hpp"
#include "nirvis/texmaps.hpp"

namespace oracle {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;

inline nirvis::TextureMap random_map(std::uint32_t seed, int w, int h, int ch, float lo = 0.f, float hi = 1.f) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  nirvis::TextureMap m(w, h, ch);
  for (float& v : m.data()) v = u(gen);
  return m;
}

/// i.i.d. directions on the upper hemisphere (z > 0.2), unit length.
inline nirvis::NormalMap random_unit_normals(std::uint32_t seed, int w, int h) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  nirvis::TextureMap m(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v[3];
      double len = 0;
      do {
        for (double& c : v) c = n(gen);
        v[2] = std::abs(v[2]);
        len = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
      } while (len < 1e-6 || v[2] / len < 0.2);
      for (int c = 0; c < 3; ++c) m.at(x, y, c) = static_cast<float>(v[c] / len);
    }
  return nirvis::NormalMap(m);
}

/// Direct 2-D Gaussian convolution, radius ceil(3 sigma), clamp-to-edge.
inline std::vector<double> dense_gaussian(const nirvis::TextureMap& m, double sigma) {
  const int r = static_cast<int>(std::ceil(3 * sigma));
  const int w = m.width(), h = m.height(), ch = m.channels();
  double norm = 0;
  for (int j = -r; j <= r; ++j)
    for (int i = -r; i <= r; ++i) norm += std::exp(-(i * i + j * j) / (2 * sigma * sigma));
  std::vector<double> out(m.data().size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0;
        for (int j = -r; j <= r; ++j)
          for (int i = -r; i <= r; ++i) {
            const int xx = std::clamp(x + i, 0, w - 1), yy = std::clamp(y + j, 0, h - 1);
            acc += std::exp(-(i * i + j * j) / (2 * sigma * sigma)) * m.at(xx, yy, c);
          }
        out[(static_cast<std::size_t>(y) * w + x) * ch + c] = acc / norm;
      }
  return out;
}

/// Textbook bilateral filter over the (2r+1)^2 window, clamp-to-edge.
inline std::vector<double> dense_bilateral(const nirvis::TextureMap& m, double ss, double sr) {
  const int r = static_cast<int>(std::ceil(3 * ss));
  const int w = m.width(), h = m.height(), ch = m.channels();
  std::vector<double> out(m.data().size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        const double centre = m.at(x, y, c);
        double num = 0, den = 0;
        for (int j = -r; j <= r; ++j)
          for (int i = -r; i <= r; ++i) {
            const double v = m.at(std::clamp(x + i, 0, w - 1), std::clamp(y + j, 0, h - 1), c);
            const double wgt =
                std::exp(-(i * i + j * j) / (2 * ss * ss)) * std::exp(-(v - centre) * (v - centre) / (2 * sr * sr));
            num += wgt * v;
            den += wgt;
          }
        out[(static_cast<std::size_t>(y) * w + x) * ch + c] = num / den;
      }
  return out;
}

/// Two 1-D passes of the same truncated kernel (fast enough for grid scans).
inline std::vector<double> separable_gaussian(const nirvis::TextureMap& m, double sigma) {
  const int r = static_cast<int>(std::ceil(3 * sigma));
  const int w = m.width(), h = m.height(), ch = m.channels();
  std::vector<double> k(2 * r + 1);
  double norm = 0;
  for (int i = -r; i <= r; ++i) norm += k[i + r] = std::exp(-(i * i) / (2 * sigma * sigma));
  for (double& v : k) v /= norm;
  std::vector<double> tmp(m.data().size()), out(m.data().size());
  auto at = [&](int x, int y, int c) { return (static_cast<std::size_t>(y) * w + x) * ch + c; };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * m.data()[at(std::clamp(x + i, 0, w - 1), y, c)];
        tmp[at(x, y, c)] = acc;
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp[at(x, std::clamp(y + i, 0, h - 1), c)];
        out[at(x, y, c)] = acc;
      }
  return out;
}

/// ‖red − unit(blur(green, s))‖ computed in double throughout.
inline double normals_residual(const nirvis::NormalMap& g, const nirvis::NormalMap& r, double s) {
  std::vector<double> b(g.base.data().begin(), g.base.data().end());
  if (s > 0) b = separable_gaussian(g.base, s);
  double acc = 0;
  for (std::size_t t = 0; t < b.size(); t += 3) {
    const double len = std::sqrt(b[t] * b[t] + b[t + 1] * b[t + 1] + b[t + 2] * b[t + 2]);
    for (int c = 0; c < 3; ++c) {
      const double d = r.base.data()[t + c] - b[t + c] / len;
      acc += d * d;
    }
  }
  return std::sqrt(acc);
}

/// Exhaustive argmin of normals_residual over {0, step, 2 step, ..., hi}.
inline double grid_sigma(const nirvis::NormalMap& g, const nirvis::NormalMap& r, double hi, double step) {
  double best = 0, best_val = normals_residual(g, r, 0);
  for (int i = 1; i * step <= hi + 1e-12; ++i) {
    const double v = normals_residual(g, r, i * step);
    if (v < best_val) {
      best_val = v;
      best = i * step;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Losses by enumeration
// ---------------------------------------------------------------------------

inline double k_rbf(const RowVectorXd& a, const RowVectorXd& b, const std::vector<double>& bws) {
  double s = 0;
  for (double bw : bws) {
    double d2 = 0;
    for (Eigen::Index i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
    s += std::exp(-d2 / (2 * bw * bw));
  }
  return s / bws.size();
}

inline double mmd(const MatrixXd& xn, const MatrixXd& xv, const std::vector<double>& bws) {
  double a = 0, b = 0, c = 0;
  for (Eigen::Index i = 0; i < xn.rows(); ++i)
    for (Eigen::Index j = 0; j < xn.rows(); ++j) a += k_rbf(xn.row(i), xn.row(j), bws);
  for (Eigen::Index i = 0; i < xv.rows(); ++i)
    for (Eigen::Index j = 0; j < xv.rows(); ++j) b += k_rbf(xv.row(i), xv.row(j), bws);
  for (Eigen::Index i = 0; i < xn.rows(); ++i)
    for (Eigen::Index j = 0; j < xv.rows(); ++j) c += k_rbf(xn.row(i), xv.row(j), bws);
  const double m = xn.rows(), n = xv.rows();
  return a / (m * m) + b / (n * n) - 2 * c / (m * n);
}

inline double pmse(const nirvis::FeatureBatch& fb) {
  double s = 0;
  for (int p = 0; p < fb.p; ++p)
    for (int k = 0; k < fb.k; ++k)
      for (int d = 0; d < fb.dim(); ++d) {
        const double diff = fb.nir(p * fb.k + k, d) - fb.vis(p * fb.k + k, d);
        s += diff * diff;
      }
  return s / (fb.p * fb.k);
}

inline double idmmd(const nirvis::FeatureBatch& fb, const std::vector<double>& bws) {
  double s = 0;
  for (int p = 0; p < fb.p; ++p) {
    RowVectorXd cn = RowVectorXd::Zero(fb.dim()), cv = RowVectorXd::Zero(fb.dim());
    for (int k = 0; k < fb.k; ++k) {
      cn += fb.nir.row(p * fb.k + k) / fb.k;
      cv += fb.vis.row(p * fb.k + k) / fb.k;
    }
    s += k_rbf(cn, cn, bws) + k_rbf(cv, cv, bws) - 2 * k_rbf(cn, cv, bws);
  }
  return s / fb.p;
}

/// Mean over rows of −log softmax with the angular margin on the target.
inline double margin_softmax(const MatrixXd& f, const std::vector<int>& y, const MatrixXd& w, double m1, double m2,
                             double m3, double s) {
  double total = 0;
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    std::vector<double> z(w.rows());
    for (Eigen::Index j = 0; j < w.rows(); ++j) {
      const double c = f.row(i).dot(w.row(j));
      // m1*theta + m2 stays within [0, pi]: theta is held in [1e-6, min(pi - 1e-6, (pi - m2) / m1)].
      const double theta = std::min(std::max(std::acos(std::min(1.0, std::max(-1.0, c))), 1e-6),
                                    std::min(M_PI - 1e-6, (M_PI - m2) / m1));
      z[j] = j == y[i] ? s * (std::cos(m1 * theta + m2) - m3) : s * c;
    }
    double mx = *std::max_element(z.begin(), z.end()), sum = 0;
    for (double v : z) sum += std::exp(v - mx);
    total += mx + std::log(sum) - z[y[i]];
  }
  return total / f.rows();
}

// ---------------------------------------------------------------------------
// Random instances and finite differences
// ---------------------------------------------------------------------------

inline MatrixXd unit_rows(std::mt19937& gen, int rows, int dim) {
  std::normal_distribution<double> n(0, 1);
  MatrixXd m(rows, dim);
  for (int i = 0; i < rows; ++i) {
    for (int d = 0; d < dim; ++d) m(i, d) = n(gen);
    m.row(i).normalize();
  }
  return m;
}

inline nirvis::FeatureBatch random_batch(std::mt19937& gen, int p, int k, int dim) {
  nirvis::FeatureBatch fb;
  fb.p = p;
  fb.k = k;
  fb.nir = unit_rows(gen, p * k, dim);
  fb.vis = unit_rows(gen, p * k, dim);
  for (int i = 0; i < p; ++i) fb.identity_ids.push_back(i);
  return fb;
}

/// Central differences of f at x, step h, entry by entry.
inline MatrixXd numeric_grad(const std::function<double(const MatrixXd&)>& f, const MatrixXd& x, double h = 1e-5) {
  MatrixXd g(x.rows(), x.cols());
  MatrixXd xp = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double orig = xp(i, j);
      xp(i, j) = orig + h;
      const double fp = f(xp);
      xp(i, j) = orig - h;
      const double fm = f(xp);
      xp(i, j) = orig;
      g(i, j) = (fp - fm) / (2 * h);
    }
  return g;
}

/// ‖a − b‖ / max(‖a‖, ‖b‖, floor): relative error with an absolute floor so
/// that exactly-zero gradients compare against difference round-off (~1e-11).
inline double rel_err(const MatrixXd& a, const MatrixXd& b, double floor = 1e-6) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), floor});
}

}  // namespace oracle
