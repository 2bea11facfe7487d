// Texture-map container and the filters every reflectance transformation is
// built from. Filter widths are always expressed in texels.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nirvis/core.hpp"

namespace nirvis {

/// What a map holds; controls validation and integer encode/decode.
enum class MapRole { generic, albedo, normal, environment };

/// Row-major, channel-interleaved grid of linear radiometric values.
class TextureMap {
 public:
  TextureMap() = default;

  TextureMap(int width, int height, int channels, float fill = 0.0f)
      : width_(width), height_(height), channels_(channels) {
    check_shape();
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }

  TextureMap(int width, int height, int channels, std::vector<float> data)
      : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    check_shape();
    require(data_.size() == static_cast<std::size_t>(width) * height * channels,
            "TextureMap: data size does not match " + std::to_string(width) + "x" +
                std::to_string(height) + "x" + std::to_string(channels));
    require(all_finite(), "TextureMap: non-finite value");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t texel_count() const { return static_cast<std::size_t>(width_) * height_; }
  bool empty() const { return data_.empty(); }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }
  float at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }
  float& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }

  /// Clamp-to-edge access.
  float clamped(int x, int y, int c = 0) const {
    return at(std::clamp(x, 0, width_ - 1), std::clamp(y, 0, height_ - 1), c);
  }

  bool same_shape(const TextureMap& o) const {
    return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
  }
  bool same_size(const TextureMap& o) const {
    return width_ == o.width_ && height_ == o.height_;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
  }
  bool in_unit_range() const {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return v >= 0.0f && v <= 1.0f; });
  }
  float min_value() const { return *std::min_element(data_.begin(), data_.end()); }
  float max_value() const { return *std::max_element(data_.begin(), data_.end()); }

  /// Single channel `c` as a 1-channel map.
  TextureMap channel(int c) const {
    require(c >= 0 && c < channels_, "TextureMap::channel: index out of range");
    TextureMap out(width_, height_, 1);
    for (std::size_t i = 0; i < texel_count(); ++i) out.data_[i] = data_[i * channels_ + c];
    return out;
  }

  bool operator==(const TextureMap& o) const {
    return same_shape(o) &&
           std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(float)) == 0;
  }

  void hash_into(Fnv1a& h) const {
    h.update_value(width_);
    h.update_value(height_);
    h.update_value(channels_);
    h.update_span(std::span<const float>(data_));
  }

 private:
  void check_shape() const {
    require(width_ >= 1 && height_ >= 1, "TextureMap: width and height must be >= 1");
    require(channels_ == 1 || channels_ == 3, "TextureMap: channels must be 1 or 3");
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

/// Albedo maps additionally require every value in [0, 1].
inline void validate_albedo(const TextureMap& m, const std::string& name) {
  require(!m.empty(), name + ": empty map");
  require(m.in_unit_range(), name + ": albedo values must lie in [0, 1]");
}

enum class NormalSpace { tangent, object };

/// Decoded normal vectors in [-1, 1]^3. Unit length is restored by
/// renormalize_normals after any filtering.
struct NormalMap {
  TextureMap base;
  NormalSpace space = NormalSpace::tangent;

  NormalMap() = default;
  explicit NormalMap(TextureMap m, NormalSpace s = NormalSpace::tangent)
      : base(std::move(m)), space(s) {
    require(base.channels() == 3, "NormalMap: requires 3 channels");
  }

  int width() const { return base.width(); }
  int height() const { return base.height(); }

  Vec3 vec(int x, int y) const {
    return {base.at(x, y, 0), base.at(x, y, 1), base.at(x, y, 2)};
  }

  /// Largest |‖n‖ - 1| over all texels.
  double max_norm_deviation() const {
    double worst = 0;
    for (int y = 0; y < height(); ++y)
      for (int x = 0; x < width(); ++x) worst = std::max(worst, std::abs(length(vec(x, y)) - 1.0));
    return worst;
  }

  bool operator==(const NormalMap& o) const { return space == o.space && base == o.base; }
};

// -----------------------------------------------------------------------------
// Filters
// -----------------------------------------------------------------------------

/// Kernel half-width for a Gaussian of width sigma.
inline int kernel_radius(double sigma) { return static_cast<int>(std::ceil(3.0 * sigma)); }

/// Normalized 1-D Gaussian taps for offsets -r..r.
inline std::vector<double> gaussian_taps(double sigma) {
  const int r = kernel_radius(sigma);
  std::vector<double> w(2 * r + 1);
  double sum = 0;
  for (int i = -r; i <= r; ++i) {
    w[i + r] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += w[i + r];
  }
  for (double& v : w) v /= sum;
  return w;
}

/// Separable Gaussian blur, radius ceil(3 sigma), clamp-to-edge, per channel.
/// sigma == 0 returns an exact copy.
inline TextureMap gaussian_blur(const TextureMap& map, double sigma) {
  require(sigma >= 0 && std::isfinite(sigma), "gaussian_blur: sigma must be >= 0");
  if (sigma == 0.0) return map;

  const auto taps = gaussian_taps(sigma);
  const int r = kernel_radius(sigma);
  const int w = map.width(), h = map.height(), ch = map.channels();

  std::vector<double> tmp(map.data().size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) acc += taps[i + r] * map.clamped(x + i, y, c);
        tmp[map.index(x, y, c)] = acc;
      }

  TextureMap out(w, h, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) {
          const int yy = std::clamp(y + i, 0, h - 1);
          acc += taps[i + r] * tmp[map.index(x, yy, c)];
        }
        out.at(x, y, c) = static_cast<float>(acc);
      }
  return out;
}

/// Bilateral filter: spatial Gaussian times range Gaussian, normalized per
/// texel. Each channel uses its own range differences.
inline TextureMap bilateral_filter(const TextureMap& map, double sigma_space, double sigma_range) {
  require(sigma_space > 0 && sigma_range > 0, "bilateral_filter: sigmas must be positive");
  const int r = kernel_radius(sigma_space);
  const int w = map.width(), h = map.height(), ch = map.channels();
  const double inv_s = 0.5 / (sigma_space * sigma_space);
  const double inv_r = 0.5 / (sigma_range * sigma_range);

  std::vector<double> spatial((2 * r + 1) * (2 * r + 1));
  for (int j = -r; j <= r; ++j)
    for (int i = -r; i <= r; ++i) spatial[(j + r) * (2 * r + 1) + (i + r)] = std::exp(-(i * i + j * j) * inv_s);

  TextureMap out(w, h, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        const double center = map.at(x, y, c);
        double acc = 0, norm = 0;
        for (int j = -r; j <= r; ++j)
          for (int i = -r; i <= r; ++i) {
            const double v = map.clamped(x + i, y + j, c);
            const double d = v - center;
            const double wgt = spatial[(j + r) * (2 * r + 1) + (i + r)] * std::exp(-d * d * inv_r);
            acc += wgt * v;
            norm += wgt;
          }
        out.at(x, y, c) = static_cast<float>(acc / norm);
      }
  return out;
}

/// Rescales every texel to unit length. Rejects zero vectors.
inline NormalMap renormalize_normals(const NormalMap& nm) {
  TextureMap out = nm.base;
  for (int y = 0; y < nm.height(); ++y)
    for (int x = 0; x < nm.width(); ++x) {
      const Vec3 v = nm.vec(x, y);
      const double n = length(v);
      require(n > 1e-12, "renormalize_normals: zero-length normal at texel (" + std::to_string(x) +
                             ", " + std::to_string(y) + ")");
      out.at(x, y, 0) = static_cast<float>(v.x / n);
      out.at(x, y, 1) = static_cast<float>(v.y / n);
      out.at(x, y, 2) = static_cast<float>(v.z / n);
    }
  return NormalMap(std::move(out), nm.space);
}

/// Blur followed by renormalization.
inline NormalMap blur_normals(const NormalMap& nm, double sigma) {
  if (sigma == 0.0) return nm;
  return renormalize_normals(NormalMap(gaussian_blur(nm.base, sigma), nm.space));
}

/// Bilinear sample with clamp-to-edge; (u, v) in [0,1], v = 0 at the top row.
inline float sample_bilinear(const TextureMap& m, double u, double v, int c) {
  const double fx = u * m.width() - 0.5;
  const double fy = v * m.height() - 0.5;
  const int x0 = static_cast<int>(std::floor(fx));
  const int y0 = static_cast<int>(std::floor(fy));
  const double tx = fx - x0, ty = fy - y0;
  const double a = m.clamped(x0, y0, c) * (1 - tx) + m.clamped(x0 + 1, y0, c) * tx;
  const double b = m.clamped(x0, y0 + 1, c) * (1 - tx) + m.clamped(x0 + 1, y0 + 1, c) * tx;
  return static_cast<float>(a * (1 - ty) + b * ty);
}

}  // namespace nirvis
