// Copyright 2026 The shps Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// File formats: PFM float maps, 8/16-bit PNG images and masks, JSON
// intrinsics and lighting, OBJ meshes.

#pragma once

#include "shps/harmonics_geometry.hpp"
#include "shps/scene_data.hpp"

#include <json.hpp>
#include <png.h>

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace shps {

/// Row-major, channel-interleaved raster. Row 0 is the top row.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, 0.0) {}

  double& at(int u, int v, int c) {
    return data[(static_cast<std::size_t>(v) * width + u) * channels + c];
  }
  double at(int u, int v, int c) const {
    return data[(static_cast<std::size_t>(v) * width + u) * channels + c];
  }
};

namespace detail {

inline std::string read_token(std::istream& in) {
  std::string tok;
  char ch = 0;
  while (in.get(ch)) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) return tok;
    } else {
      tok.push_back(ch);
    }
  }
  return tok;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) throw Error("cannot open " + path.string());
  return f;
}

}  // namespace detail

/// PFM: "PF" (3 channels) or "Pf" (1 channel); a negative scale marks
/// little-endian data; rows are stored bottom to top.
inline Image read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const std::string magic = detail::read_token(in);
  int channels = 0;
  if (magic == "PF") {
    channels = 3;
  } else if (magic == "Pf") {
    channels = 1;
  } else {
    throw Error("not a PFM file: " + path.string());
  }
  int w = 0;
  int h = 0;
  double scale = 0.0;
  try {
    w = std::stoi(detail::read_token(in));
    h = std::stoi(detail::read_token(in));
    scale = std::stod(detail::read_token(in));
  } catch (const std::exception&) {
    throw Error("malformed PFM header: " + path.string());
  }
  if (w <= 0 || h <= 0 || scale == 0.0) throw Error("malformed PFM header: " + path.string());
  const bool little = scale < 0.0;
  Image img(w, h, channels);
  std::vector<std::uint32_t> row(static_cast<std::size_t>(w) * channels);
  for (int r = 0; r < h; ++r) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(std::uint32_t)));
    if (!in) throw Error("truncated PFM data: " + path.string());
    const int v = h - 1 - r;
    for (std::size_t k = 0; k < row.size(); ++k) {
      std::uint32_t bits = row[k];
      if (little != (std::endian::native == std::endian::little)) bits = __builtin_bswap32(bits);
      img.data[static_cast<std::size_t>(v) * w * channels + k] =
          static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  return img;
}

inline void write_pfm(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw Error("PFM supports 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << (img.channels == 3 ? "PF" : "Pf") << '\n'
      << img.width << ' ' << img.height << '\n'
      << (std::endian::native == std::endian::little ? "-1.0" : "1.0") << '\n';
  std::vector<float> row(static_cast<std::size_t>(img.width) * img.channels);
  for (int v = img.height - 1; v >= 0; --v) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      row[k] = static_cast<float>(img.data[static_cast<std::size_t>(v) * row.size() + k]);
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw Error("failed writing " + path.string());
}

/// Reads an 8- or 16-bit PNG; values are divided by the white level
/// (255 or 65535). Palette images are expanded and alpha is dropped.
inline Image read_png(const std::filesystem::path& path) {
  detail::FilePtr f = detail::open_file(path, "rb");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw Error("not a PNG file: " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error("libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error("libpng initialisation failed");
  }
  Image img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("corrupt PNG file: " + path.string());
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_png(png, info,
               PNG_TRANSFORM_EXPAND | PNG_TRANSFORM_STRIP_ALPHA | PNG_TRANSFORM_PACKING, nullptr);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int depth = png_get_bit_depth(png, info);
  const int channels = png_get_channels(png, info);
  png_bytepp rows = png_get_rows(png, info);
  img = Image(w, h, channels);
  const double white = depth == 16 ? 65535.0 : 255.0;
  for (int v = 0; v < h; ++v) {
    const png_bytep row = rows[v];
    for (int k = 0; k < w * channels; ++k) {
      const unsigned value =
          depth == 16 ? (static_cast<unsigned>(row[2 * k]) << 8) | row[2 * k + 1] : row[k];
      img.data[static_cast<std::size_t>(v) * w * channels + k] = value / white;
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

/// Encodes values clamped to [0, 1] as an 8- or 16-bit gray or RGB PNG.
inline std::vector<unsigned char> encode_png(const Image& img, int bit_depth = 16) {
  if (img.channels != 1 && img.channels != 3) throw Error("PNG output supports 1 or 3 channels");
  if (bit_depth != 8 && bit_depth != 16) throw Error("PNG bit depth must be 8 or 16");
  const int bytes = bit_depth / 8;
  const double white = bit_depth == 16 ? 65535.0 : 255.0;
  std::vector<png_byte> buffer(static_cast<std::size_t>(img.width) * img.height * img.channels *
                               bytes);
  for (std::size_t k = 0; k < img.data.size(); ++k) {
    const double x = std::clamp(img.data[k], 0.0, 1.0);
    const auto q = static_cast<unsigned>(std::lround(x * white));
    if (bytes == 2) {
      buffer[2 * k] = static_cast<png_byte>(q >> 8);
      buffer[2 * k + 1] = static_cast<png_byte>(q & 0xff);
    } else {
      buffer[k] = static_cast<png_byte>(q);
    }
  }
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error("libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("libpng initialisation failed");
  }
  std::vector<unsigned char> encoded;
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("PNG encoding failed");
  }
  png_set_write_fn(
      png, &encoded,
      [](png_structp p, png_bytep data, png_size_t length) {
        auto* out = static_cast<std::vector<unsigned char>*>(png_get_io_ptr(p));
        out->insert(out->end(), data, data + length);
      },
      [](png_structp) {});
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
               bit_depth, img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels * bytes;
  for (int v = 0; v < img.height; ++v) rows[static_cast<std::size_t>(v)] = buffer.data() + v * stride;
  png_set_rows(png, info, rows.data());
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
  return encoded;
}

inline void write_png(const std::filesystem::path& path, const Image& img, int bit_depth = 16) {
  const std::vector<unsigned char> bytes = encode_png(img, bit_depth);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

inline Image read_image(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".pfm") return read_pfm(path);
  return read_png(path);
}

/// Mask from any image: a pixel is inside when its first channel is nonzero.
inline PixelDomain read_mask(const std::filesystem::path& path) {
  const Image img = read_image(path);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(img.width) * img.height);
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      mask[static_cast<std::size_t>(v) * img.width + u] = img.at(u, v, 0) > 0.0 ? 1 : 0;
    }
  }
  return PixelDomain(img.width, img.height, std::move(mask));
}

inline void write_mask(const std::filesystem::path& path, const PixelDomain& domain) {
  Image img(domain.width(), domain.height(), 1);
  for (const Pixel& p : domain.pixels()) img.at(p.u, p.v, 0) = 1.0;
  write_png(path, img, 8);
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed JSON in " + path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

inline nlohmann::json intrinsics_json(const CameraIntrinsics& k) {
  return {{"f_u", k.f_u}, {"f_v", k.f_v}, {"u_0", k.u_0}, {"v_0", k.v_0}};
}

inline CameraIntrinsics intrinsics_from_json(const nlohmann::json& j) {
  CameraIntrinsics k;
  try {
    k.f_u = j.at("f_u").get<double>();
    k.f_v = j.at("f_v").get<double>();
    k.u_0 = j.at("u_0").get<double>();
    k.v_0 = j.at("v_0").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("intrinsics: ") + e.what());
  }
  k.validate();
  return k;
}

inline CameraIntrinsics read_intrinsics(const std::filesystem::path& path) {
  return intrinsics_from_json(read_json(path));
}

/// {"images": M, "channels": C, "coefficients": M x C x 9}.
inline nlohmann::json lighting_json(const LightingSet& l) {
  nlohmann::json coeffs = nlohmann::json::array();
  for (int i = 0; i < l.images(); ++i) {
    nlohmann::json per_image = nlohmann::json::array();
    for (int c = 0; c < l.channels(); ++c) {
      const Vec9& v = l.at(i, c);
      per_image.push_back(std::vector<double>(v.data(), v.data() + 9));
    }
    coeffs.push_back(std::move(per_image));
  }
  return {{"images", l.images()}, {"channels", l.channels()}, {"coefficients", std::move(coeffs)}};
}

inline LightingSet lighting_from_json(const nlohmann::json& j) {
  try {
    const int m = j.at("images").get<int>();
    const int c = j.at("channels").get<int>();
    const auto& coeffs = j.at("coefficients");
    if (m < 0 || c < 0 || coeffs.size() != static_cast<std::size_t>(m)) {
      throw Error("lighting: coefficient count does not match image count");
    }
    LightingSet l(m, c);
    for (int i = 0; i < m; ++i) {
      if (coeffs[i].size() != static_cast<std::size_t>(c)) throw Error("lighting: channel mismatch");
      for (int ch = 0; ch < c; ++ch) {
        const auto v = coeffs[i][ch].get<std::vector<double>>();
        if (v.size() != 9) throw Error("lighting: expected 9 coefficients");
        for (int k = 0; k < 9; ++k) l.at(i, ch)[k] = v[static_cast<std::size_t>(k)];
      }
    }
    return l;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("lighting: ") + e.what());
  }
}

/// Scatters per-pixel values into a full raster; outside the mask is `fill`.
template <class Derived>
Image scatter(const Eigen::MatrixBase<Derived>& values, const PixelDomain& domain,
              double fill = 0.0) {
  const int channels = static_cast<int>(values.cols());
  if (values.rows() != domain.size()) throw Error("scatter: value count does not match mask");
  Image img(domain.width(), domain.height(), channels);
  std::fill(img.data.begin(), img.data.end(), fill);
  for (int j = 0; j < domain.size(); ++j) {
    const Pixel p = domain.pixel(j);
    for (int c = 0; c < channels; ++c) img.at(p.u, p.v, c) = values(j, c);
  }
  return img;
}

inline Eigen::MatrixXd gather(const Image& img, const PixelDomain& domain) {
  if (img.width != domain.width() || img.height != domain.height()) {
    throw Error("image dimensions do not match the mask");
  }
  Eigen::MatrixXd out(domain.size(), img.channels);
  for (int j = 0; j < domain.size(); ++j) {
    const Pixel p = domain.pixel(j);
    for (int c = 0; c < img.channels; ++c) out(j, c) = img.at(p.u, p.v, c);
  }
  return out;
}

inline void write_depth(const std::filesystem::path& path, const DepthMap& z,
                        const PixelDomain& domain) {
  write_pfm(path, scatter(z.values, domain));
}

inline DepthMap read_depth(const std::filesystem::path& path, const PixelDomain& domain,
                           Projection projection = Projection::perspective) {
  const Image img = read_pfm(path);
  if (img.channels != 1) throw Error("depth file must have one channel: " + path.string());
  DepthMap z{projection, gather(img, domain).col(0)};
  z.validate();
  return z;
}

struct Scene {
  ImageStack images;
  PixelDomain domain;
  CameraIntrinsics intrinsics;
};

/// Loads images (PNG or PFM) restricted to the mask. Every image must have
/// the mask's dimensions and the channel count of the first image.
inline Scene load_scene(const std::vector<std::filesystem::path>& image_paths,
                        const std::filesystem::path& mask_path,
                        const std::filesystem::path& intrinsics_path) {
  if (image_paths.empty()) throw Error("load_scene: no images given");
  Scene s;
  s.domain = read_mask(mask_path);
  s.intrinsics = read_intrinsics(intrinsics_path);
  int channels = 0;
  for (const auto& path : image_paths) {
    const Image img = read_image(path);
    if (img.width != s.domain.width() || img.height != s.domain.height()) {
      throw Error("dimension mismatch between " + path.string() + " and the mask");
    }
    if (channels == 0) channels = img.channels;
    if (img.channels != channels) throw Error("channel count mismatch in " + path.string());
    const Eigen::MatrixXd values = gather(img, s.domain);
    ImageStack one(1, channels, s.domain.size());
    for (int c = 0; c < channels; ++c) one.channel(0, c) = values.col(c);
    s.images.append(one);
  }
  return s;
}

/// OBJ with one vertex per masked pixel at z K^-1 [u, v, 1] and per-vertex
/// colour. Two triangles per 2x2 block, wound to face the camera.
inline void write_obj(std::ostream& out, const DepthMap& z, const AlbedoMaps& albedo,
                      const PixelDomain& domain, const CameraIntrinsics& k) {
  out.precision(9);
  for (int j = 0; j < domain.size(); ++j) {
    const Pixel p = domain.pixel(j);
    const double d = z.values[j];
    out << "v " << d * (p.u - k.u_0) / k.f_u << ' ' << d * (p.v - k.v_0) / k.f_v << ' ' << d;
    if (albedo.rows() == domain.size() && albedo.cols() > 0) {
      for (int c = 0; c < 3; ++c) out << ' ' << albedo(j, std::min<int>(c, static_cast<int>(albedo.cols()) - 1));
    }
    out << '\n';
  }
  for (int j = 0; j < domain.size(); ++j) {
    const Pixel p = domain.pixel(j);
    const int right = domain.index(p.u + 1, p.v);
    const int down = domain.index(p.u, p.v + 1);
    const int diag = domain.index(p.u + 1, p.v + 1);
    if (right >= 0 && down >= 0) out << "f " << j + 1 << ' ' << down + 1 << ' ' << right + 1 << '\n';
    if (right >= 0 && down >= 0 && diag >= 0) {
      out << "f " << right + 1 << ' ' << down + 1 << ' ' << diag + 1 << '\n';
    }
  }
}

/// Writes depth.pfm, normals.pfm, albedo_<c>.pfm, albedo.png (when C is 1 or
/// 3), lighting.json and mesh.obj into out_dir. The depth is validated before
/// anything is written.
inline void save_outputs(const DepthMap& z, const AlbedoMaps& albedo, const LightingSet& lighting,
                         const PixelDomain& domain, const CameraIntrinsics& k,
                         const std::filesystem::path& out_dir) {
  z.validate();
  if (z.values.size() != domain.size() || albedo.rows() != domain.size()) {
    throw Error("save_outputs: inputs do not share the mask");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error("cannot create " + out_dir.string() + ": " + ec.message());
  write_depth(out_dir / "depth.pfm", z, domain);
  if (z.projection == Projection::perspective) {
    write_pfm(out_dir / "normals.pfm", scatter(perspective_normals(z, k, domain).n, domain));
  }
  for (Eigen::Index c = 0; c < albedo.cols(); ++c) {
    write_pfm(out_dir / ("albedo_" + std::to_string(c) + ".pfm"), scatter(albedo.col(c), domain));
  }
  if (albedo.cols() == 1 || albedo.cols() == 3) {
    write_png(out_dir / "albedo.png", scatter(albedo, domain), 16);
  }
  write_json(out_dir / "lighting.json", lighting_json(lighting));
  std::ofstream obj(out_dir / "mesh.obj");
  if (!obj) throw Error("cannot write " + (out_dir / "mesh.obj").string());
  write_obj(obj, z, albedo, domain, k);
}

}  // namespace shps
