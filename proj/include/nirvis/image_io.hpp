// Map I/O. The file extension selects the container:
//   .png  8/16-bit integer grayscale or RGB, de-quantized to [0, 1]
//   .pfm  portable float map, 1 or 3 channels, lossless
// Normal-role maps stored in integer formats are encoded as (n + 1) / 2 per
// channel; PFM normals hold the raw vector components.
#pragma once

#include <png.h>

#include <algorithm>
#include <bit>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "nirvis/texmaps.hpp"

namespace nirvis {

enum class Encoding { u8, u16, f32 };

struct SaveReport {
  std::size_t clamped = 0;  ///< values clipped into the encodable range
};

namespace detail {

inline std::string lower_extension(const std::filesystem::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::filesystem::path& p, const char* mode) {
  return FilePtr(std::fopen(p.string().c_str(), mode));
}

struct PngImage {
  int width = 0, height = 0, channels = 0, bit_depth = 0;
  std::vector<std::uint8_t> bytes;  // raw rows, 16-bit samples big-endian
};

// Kept free of non-trivial locals between setjmp and any libpng call.
inline bool png_read_raw(std::FILE* fp, PngImage& img, std::string& err) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) {
    err = "png: cannot create read struct";
    return false;
  }
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    err = "png: cannot create info struct";
    return false;
  }
  std::vector<png_bytep>* rows = nullptr;
  if (setjmp(png_jmpbuf(png))) {
    delete rows;
    png_destroy_read_struct(&png, &info, nullptr);
    err = "png: corrupt or unreadable file";
    return false;
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);

  const int ch = png_get_channels(png, info);
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = ch;
  img.bit_depth = png_get_bit_depth(png, info);
  if (ch != 1 && ch != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    err = "png: unsupported channel count " + std::to_string(ch) + " (expected 1 or 3)";
    return false;
  }
  const std::size_t stride = png_get_rowbytes(png, info);
  img.bytes.resize(stride * img.height);
  rows = new std::vector<png_bytep>(img.height);
  for (int y = 0; y < img.height; ++y) (*rows)[y] = img.bytes.data() + y * stride;
  png_read_image(png, rows->data());
  png_read_end(png, nullptr);
  delete rows;
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

inline bool png_write_raw(std::FILE* fp, const PngImage& img, std::string& err) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) {
    err = "png: cannot create write struct";
    return false;
  }
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    err = "png: cannot create info struct";
    return false;
  }
  std::vector<png_bytep>* rows = nullptr;
  if (setjmp(png_jmpbuf(png))) {
    delete rows;
    png_destroy_write_struct(&png, &info);
    err = "png: write failure";
    return false;
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, img.width, img.height, img.bit_depth,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride =
      static_cast<std::size_t>(img.width) * img.channels * (img.bit_depth / 8);
  rows = new std::vector<png_bytep>(img.height);
  for (int y = 0; y < img.height; ++y)
    (*rows)[y] = const_cast<png_bytep>(img.bytes.data() + y * stride);
  png_write_image(png, rows->data());
  png_write_end(png, nullptr);
  delete rows;
  png_destroy_write_struct(&png, &info);
  return true;
}

inline TextureMap read_png(const std::filesystem::path& path) {
  auto fp = open_file(path, "rb");
  require(fp != nullptr, "load_map: cannot open " + path.string());
  PngImage img;
  std::string err;
  require(png_read_raw(fp.get(), img, err), "load_map: " + path.string() + ": " + err);

  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * img.channels;
  std::vector<float> data(n);
  if (img.bit_depth == 16) {
    for (std::size_t i = 0; i < n; ++i) {
      const unsigned v = (img.bytes[2 * i] << 8) | img.bytes[2 * i + 1];
      data[i] = static_cast<float>(v / 65535.0);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<float>(img.bytes[i] / 255.0);
  }
  return TextureMap(img.width, img.height, img.channels, std::move(data));
}

inline void write_png(const TextureMap& map, const std::filesystem::path& path, int bit_depth,
                      std::span<const float> values, SaveReport& report) {
  PngImage img;
  img.width = map.width();
  img.height = map.height();
  img.channels = map.channels();
  img.bit_depth = bit_depth;
  const double scale = bit_depth == 16 ? 65535.0 : 255.0;
  img.bytes.resize(values.size() * (bit_depth / 8));
  for (std::size_t i = 0; i < values.size(); ++i) {
    double v = values[i];
    if (v < 0.0 || v > 1.0) {
      ++report.clamped;
      v = std::clamp(v, 0.0, 1.0);
    }
    const auto q = static_cast<unsigned>(std::lround(v * scale));
    if (bit_depth == 16) {
      img.bytes[2 * i] = static_cast<std::uint8_t>(q >> 8);
      img.bytes[2 * i + 1] = static_cast<std::uint8_t>(q & 0xFF);
    } else {
      img.bytes[i] = static_cast<std::uint8_t>(q);
    }
  }
  auto fp = open_file(path, "wb");
  require(fp != nullptr, "save_map: cannot open " + path.string() + " for writing");
  std::string err;
  require(png_write_raw(fp.get(), img, err), "save_map: " + path.string() + ": " + err);
}

inline TextureMap read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "load_map: cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0;
  double scale = 0;
  in >> magic >> w >> h >> scale;
  require(in.good() && (magic == "PF" || magic == "Pf"), "load_map: " + path.string() + ": bad PFM header");
  require(w >= 1 && h >= 1 && scale != 0.0, "load_map: " + path.string() + ": bad PFM dimensions");
  in.get();  // single whitespace before raster
  const int ch = magic == "PF" ? 3 : 1;
  const std::size_t n = static_cast<std::size_t>(w) * h * ch;
  std::vector<std::uint32_t> raw(n);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * 4));
  require(static_cast<std::size_t>(in.gcount()) == n * 4, "load_map: " + path.string() + ": truncated PFM");

  const bool file_little = scale < 0;
  const bool host_little = std::endian::native == std::endian::little;
  std::vector<float> data(n);
  const std::size_t row = static_cast<std::size_t>(w) * ch;
  for (int y = 0; y < h; ++y) {
    // PFM rows run bottom to top.
    const std::size_t src = static_cast<std::size_t>(h - 1 - y) * row;
    for (std::size_t i = 0; i < row; ++i) {
      std::uint32_t bits = raw[src + i];
      if (file_little != host_little) bits = __builtin_bswap32(bits);
      float f;
      std::memcpy(&f, &bits, 4);
      require(std::isfinite(f), "load_map: " + path.string() + ": non-finite value");
      data[static_cast<std::size_t>(y) * row + i] = f;
    }
  }
  return TextureMap(w, h, ch, std::move(data));
}

inline void write_pfm(const TextureMap& map, const std::filesystem::path& path,
                      std::span<const float> values) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "save_map: cannot open " + path.string() + " for writing");
  const bool little = std::endian::native == std::endian::little;
  out << (map.channels() == 3 ? "PF" : "Pf") << '\n'
      << map.width() << ' ' << map.height() << '\n'
      << (little ? "-1.0" : "1.0") << '\n';
  const std::size_t row = static_cast<std::size_t>(map.width()) * map.channels();
  for (int y = map.height() - 1; y >= 0; --y)
    out.write(reinterpret_cast<const char*>(values.data() + y * row),
              static_cast<std::streamsize>(row * sizeof(float)));
  require(out.good(), "save_map: write failure on " + path.string());
}

}  // namespace detail

/// Loads a map in linear space. Normal-role integer maps are decoded to
/// [-1, 1]^3 and renormalized; albedo-role maps are range-checked.
inline TextureMap load_map(const std::filesystem::path& path, MapRole role = MapRole::generic) {
  require(!path.empty(), "load_map: empty path");
  require(std::filesystem::exists(path), "load_map: no such file " + path.string());
  const std::string ext = detail::lower_extension(path);
  TextureMap map;
  bool integer = false;
  if (ext == ".png") {
    map = detail::read_png(path);
    integer = true;
  } else if (ext == ".pfm") {
    map = detail::read_pfm(path);
  } else {
    throw Error("load_map: unsupported format '" + ext + "' for " + path.string());
  }

  if (role == MapRole::normal) {
    require(map.channels() == 3, "load_map: normal map " + path.string() + " must have 3 channels");
    if (integer)
      for (float& v : map.data()) v = 2.0f * v - 1.0f;
    // Float files round-trip bitwise; only visibly off-unit data is touched.
    NormalMap nm(std::move(map));
    if (integer || nm.max_norm_deviation() > 1e-5) nm = renormalize_normals(nm);
    map = std::move(nm.base);
  } else if (role == MapRole::albedo) {
    validate_albedo(map, path.string());
  } else if (role == MapRole::environment) {
    require(map.min_value() >= 0.0f, "load_map: negative radiance in " + path.string());
  }
  return map;
}

inline NormalMap load_normals(const std::filesystem::path& path) {
  return NormalMap(load_map(path, MapRole::normal));
}

/// Writes `map`; float encodings are lossless, integer encodings clamp to
/// [0, 1] and quantize, counting clipped values in the report.
inline SaveReport save_map(const TextureMap& map, const std::filesystem::path& path,
                           Encoding encoding, MapRole role = MapRole::generic) {
  require(!path.empty(), "save_map: empty path");
  require(!map.empty(), "save_map: empty map");
  const auto parent = path.parent_path();
  require(parent.empty() || std::filesystem::is_directory(parent),
          "save_map: parent directory does not exist: " + parent.string());

  const std::string ext = detail::lower_extension(path);
  SaveReport report;
  std::vector<float> values(map.data().begin(), map.data().end());
  if (role == MapRole::normal && encoding != Encoding::f32)
    for (float& v : values) v = 0.5f * (v + 1.0f);

  if (ext == ".png") {
    require(encoding != Encoding::f32, "save_map: .png cannot hold float data; use .pfm");
    detail::write_png(map, path, encoding == Encoding::u16 ? 16 : 8, values, report);
  } else if (ext == ".pfm") {
    require(encoding == Encoding::f32, "save_map: .pfm requires float encoding");
    detail::write_pfm(map, path, values);
  } else {
    throw Error("save_map: unsupported format '" + ext + "' for " + path.string());
  }
  return report;
}

inline SaveReport save_normals(const NormalMap& nm, const std::filesystem::path& path, Encoding encoding) {
  return save_map(nm.base, path, encoding, MapRole::normal);
}

/// Encoding implied by an extension: .pfm is float, .png defaults to 16 bit.
inline Encoding default_encoding(const std::filesystem::path& path) {
  return detail::lower_extension(path) == ".pfm" ? Encoding::f32 : Encoding::u16;
}

}  // namespace nirvis
