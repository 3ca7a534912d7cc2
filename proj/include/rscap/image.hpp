#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "rscap/util.hpp"

namespace rscap {

class ImageError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// 8-bit single-channel raster. Color inputs are reduced to BT.601 luma on
/// load; nothing in the pipeline needs more than grayscale.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;  // row-major

  uint8_t at(int x, int y) const { return pixels[size_t(y) * width + x]; }
  uint8_t& at(int x, int y) { return pixels[size_t(y) * width + x]; }
  bool empty() const { return pixels.empty(); }
};

namespace detail {

inline int next_pnm_int(std::istream& in) {
  // netpbm tokens may be separated by whitespace and '#' comments
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int v = -1;
  in >> v;
  return in ? v : -1;
}

}  // namespace detail

struct PnmHeader {
  std::string magic;
  int width = 0, height = 0, maxval = 0;
  std::streampos data_start;
};

inline PnmHeader read_pnm_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("unreadable image: " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P2" && magic != "P3" && magic != "P5" && magic != "P6")
    throw ImageError("unreadable image: " + path.string() +
                     " (unsupported format '" + magic + "')");
  PnmHeader h;
  h.magic = magic;
  h.width = detail::next_pnm_int(in);
  h.height = detail::next_pnm_int(in);
  h.maxval = detail::next_pnm_int(in);
  if (h.width <= 0 || h.height <= 0 || h.maxval <= 0 || h.maxval > 255)
    throw ImageError("unreadable image: " + path.string() + " (bad header)");
  in.get();  // single whitespace byte before binary payload
  h.data_start = in.tellg();
  return h;
}

/// Loads PGM (P2/P5) and PPM (P3/P6) files, maxval up to 255.
inline GrayImage load_image(const fs::path& path) {
  PnmHeader h = read_pnm_header(path);
  std::ifstream in(path, std::ios::binary);
  in.seekg(h.data_start);
  bool color = h.magic == "P3" || h.magic == "P6";
  bool binary = h.magic == "P5" || h.magic == "P6";
  size_t n = size_t(h.width) * h.height;
  size_t samples = color ? n * 3 : n;

  std::vector<uint8_t> raw(samples);
  if (binary) {
    in.read(reinterpret_cast<char*>(raw.data()),
            static_cast<std::streamsize>(samples));
    if (static_cast<size_t>(in.gcount()) != samples)
      throw ImageError("unreadable image: " + path.string() + " (truncated)");
  } else {
    for (size_t i = 0; i < samples; ++i) {
      int v = detail::next_pnm_int(in);
      if (v < 0 || v > h.maxval)
        throw ImageError("unreadable image: " + path.string() +
                         " (bad sample)");
      raw[i] = static_cast<uint8_t>(v);
    }
  }

  GrayImage img;
  img.width = h.width;
  img.height = h.height;
  img.pixels.resize(n);
  if (color) {
    for (size_t i = 0; i < n; ++i) {
      double y = 0.299 * raw[3 * i] + 0.587 * raw[3 * i + 1] +
                 0.114 * raw[3 * i + 2];
      img.pixels[i] = static_cast<uint8_t>(std::lround(y));
    }
  } else {
    img.pixels = std::move(raw);
  }
  return img;
}

inline void save_pgm(const GrayImage& img, const fs::path& path,
                     bool binary = true) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageError("cannot write image: " + path.string());
  if (binary) {
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
  } else {
    out << "P2\n" << img.width << " " << img.height << "\n255\n";
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        if (x) out << ' ';
        out << int(img.at(x, y));
      }
      out << '\n';
    }
  }
}

inline GrayImage crop(const GrayImage& img, int x0, int y0, int w, int h) {
  if (x0 < 0 || y0 < 0 || x0 + w > img.width || y0 + h > img.height)
    throw std::invalid_argument("crop rectangle outside image");
  GrayImage out;
  out.width = w;
  out.height = h;
  out.pixels.resize(size_t(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(x, y) = img.at(x0 + x, y0 + y);
  return out;
}

/// Bilinear resample with pixel-center alignment; returns doubles so the
/// hashing stage works on unquantized values.
inline std::vector<double> resize_bilinear(const GrayImage& img, int out_w,
                                           int out_h) {
  std::vector<double> out(size_t(out_w) * out_h);
  double sx = double(img.width) / out_w;
  double sy = double(img.height) / out_h;
  for (int oy = 0; oy < out_h; ++oy) {
    double fy = (oy + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, double(img.height - 1));
    int y0 = int(fy);
    int y1 = std::min(y0 + 1, img.height - 1);
    double wy = fy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      double fx = (ox + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, double(img.width - 1));
      int x0 = int(fx);
      int x1 = std::min(x0 + 1, img.width - 1);
      double wx = fx - x0;
      double top = img.at(x0, y0) * (1 - wx) + img.at(x1, y0) * wx;
      double bot = img.at(x0, y1) * (1 - wx) + img.at(x1, y1) * wx;
      out[size_t(oy) * out_w + ox] = top * (1 - wy) + bot * wy;
    }
  }
  return out;
}

// --------------------------------------------------------------- 2-D DCT

namespace detail {

inline const std::vector<double>& dct_cos_table(int n) {
  // cos(pi * (2i + 1) * k / (2n)) cached per size
  static thread_local std::vector<std::pair<int, std::vector<double>>> cache;
  for (auto& [sz, tab] : cache)
    if (sz == n) return tab;
  std::vector<double> tab(size_t(n) * n);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      tab[size_t(k) * n + i] = std::cos(M_PI * (2.0 * i + 1.0) * k / (2.0 * n));
  cache.emplace_back(n, std::move(tab));
  return cache.back().second;
}

}  // namespace detail

/// Orthonormal 2-D DCT-II of a w x h row-major block.
inline std::vector<double> dct2d(const std::vector<double>& data, int w,
                                 int h) {
  const auto& cw = detail::dct_cos_table(w);
  const auto& ch = detail::dct_cos_table(h);
  std::vector<double> rows(data.size()), out(data.size());
  for (int y = 0; y < h; ++y) {
    for (int u = 0; u < w; ++u) {
      double acc = 0;
      for (int x = 0; x < w; ++x)
        acc += data[size_t(y) * w + x] * cw[size_t(u) * w + x];
      double scale = (u == 0 ? std::sqrt(1.0 / w) : std::sqrt(2.0 / w));
      rows[size_t(y) * w + u] = acc * scale;
    }
  }
  for (int u = 0; u < w; ++u) {
    for (int v = 0; v < h; ++v) {
      double acc = 0;
      for (int y = 0; y < h; ++y)
        acc += rows[size_t(y) * w + u] * ch[size_t(v) * h + y];
      double scale = (v == 0 ? std::sqrt(1.0 / h) : std::sqrt(2.0 / h));
      out[size_t(v) * w + u] = acc * scale;
    }
  }
  return out;
}

/// Inverse of dct2d (orthonormal DCT-III along both axes).
inline std::vector<double> idct2d(const std::vector<double>& coef, int w,
                                  int h) {
  const auto& cw = detail::dct_cos_table(w);
  const auto& ch = detail::dct_cos_table(h);
  std::vector<double> cols(coef.size()), out(coef.size());
  for (int u = 0; u < w; ++u) {
    for (int y = 0; y < h; ++y) {
      double acc = 0;
      for (int v = 0; v < h; ++v) {
        double scale = (v == 0 ? std::sqrt(1.0 / h) : std::sqrt(2.0 / h));
        acc += coef[size_t(v) * w + u] * scale * ch[size_t(v) * h + y];
      }
      cols[size_t(y) * w + u] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int u = 0; u < w; ++u) {
        double scale = (u == 0 ? std::sqrt(1.0 / w) : std::sqrt(2.0 / w));
        acc += cols[size_t(y) * w + u] * scale * cw[size_t(u) * w + x];
      }
      out[size_t(y) * w + x] = acc;
    }
  }
  return out;
}

}  // namespace rscap
