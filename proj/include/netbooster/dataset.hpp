#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "netbooster/tensor.hpp"

namespace netbooster {

// IDX image/label files (big-endian magic + dims, then raw bytes) and a
// bundled synthetic source so the toolkit runs without any downloads.

template <class S>
struct Dataset {
  Tensor<S> images;  // [N,C,H,W], values in [0,1] unless normalized
  std::vector<std::int64_t> labels;
  std::int64_t size() const { return images.shape[0]; }
};

namespace detail {

inline std::uint32_t read_be32(std::ifstream& f, const std::string& path, std::size_t offset) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  if (f.gcount() != 4)
    throw Error("'" + path + "': truncated, wanted 4 bytes at offset " + std::to_string(offset));
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

inline void write_be32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace detail

/// [N,1,H,W] tensor scaled to [0,1] from an idx3-ubyte image file.
template <class S>
Tensor<S> load_idx_images(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "'");
  const std::uint32_t magic = detail::read_be32(f, path, 0);
  if (magic != 0x00000803u) {
    std::ostringstream os;
    os << "'" << path << "': expected image magic 0x00000803 at offset 0, got 0x" << std::hex
       << magic;
    throw Error(os.str());
  }
  const std::int64_t n = detail::read_be32(f, path, 4);
  const std::int64_t h = detail::read_be32(f, path, 8);
  const std::int64_t w = detail::read_be32(f, path, 12);
  std::vector<unsigned char> bytes(static_cast<std::size_t>(n * h * w));
  f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(f.gcount()) != bytes.size())
    throw Error("'" + path + "': truncated pixel data, wanted " + std::to_string(bytes.size()) +
                " bytes at offset 16, got " + std::to_string(f.gcount()));
  Tensor<S> out({n, 1, h, w});
  for (std::size_t i = 0; i < bytes.size(); ++i)
    out.data[i] = static_cast<S>(bytes[i]) / S(255);
  return out;
}

inline std::vector<std::int64_t> load_idx_labels(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "'");
  const std::uint32_t magic = detail::read_be32(f, path, 0);
  if (magic != 0x00000801u) {
    std::ostringstream os;
    os << "'" << path << "': expected label magic 0x00000801 at offset 0, got 0x" << std::hex
       << magic;
    throw Error(os.str());
  }
  const std::int64_t n = detail::read_be32(f, path, 4);
  std::vector<unsigned char> bytes(static_cast<std::size_t>(n));
  f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(f.gcount()) != bytes.size())
    throw Error("'" + path + "': truncated label data, wanted " + std::to_string(n) +
                " bytes at offset 8, got " + std::to_string(f.gcount()));
  return {bytes.begin(), bytes.end()};
}

inline void save_idx_images(const std::string& path, const std::vector<unsigned char>& pixels,
                            std::int64_t n, std::int64_t h, std::int64_t w) {
  if (static_cast<std::int64_t>(pixels.size()) != n * h * w)
    throw Error("save_idx_images: " + std::to_string(pixels.size()) + " bytes for shape " +
                std::to_string(n) + "x" + std::to_string(h) + "x" + std::to_string(w));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  detail::write_be32(f, 0x00000803u);
  detail::write_be32(f, static_cast<std::uint32_t>(n));
  detail::write_be32(f, static_cast<std::uint32_t>(h));
  detail::write_be32(f, static_cast<std::uint32_t>(w));
  f.write(reinterpret_cast<const char*>(pixels.data()),
          static_cast<std::streamsize>(pixels.size()));
  if (!f) throw Error("write to '" + path + "' failed");
}

inline void save_idx_labels(const std::string& path, const std::vector<std::int64_t>& labels) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  detail::write_be32(f, 0x00000801u);
  detail::write_be32(f, static_cast<std::uint32_t>(labels.size()));
  for (std::int64_t l : labels) {
    if (l < 0 || l > 255) throw Error("save_idx_labels: label " + std::to_string(l) + " not a byte");
    const unsigned char b = static_cast<unsigned char>(l);
    f.write(reinterpret_cast<const char*>(&b), 1);
  }
  if (!f) throw Error("write to '" + path + "' failed");
}

template <class S>
Dataset<S> load_idx(const std::string& images_path, const std::string& labels_path) {
  Dataset<S> ds;
  ds.images = load_idx_images<S>(images_path);
  ds.labels = load_idx_labels(labels_path);
  if (ds.images.shape[0] != static_cast<std::int64_t>(ds.labels.size()))
    throw Error("dataset: '" + images_path + "' has " + std::to_string(ds.images.shape[0]) +
                " images but '" + labels_path + "' has " + std::to_string(ds.labels.size()) +
                " labels");
  return ds;
}

/// Gaussian-blob classes: class k puts a bright blob at a fixed angle around
/// the image center, jittered per sample, over a noisy background. Returned
/// as bytes so writing IDX files and reloading them is lossless.
struct SyntheticBatch {
  std::vector<unsigned char> pixels;
  std::vector<std::int64_t> labels;
  std::int64_t n = 0, h = 0, w = 0;
};

inline SyntheticBatch make_synthetic(std::int64_t n, std::int64_t classes, std::int64_t h,
                                     std::int64_t w, std::mt19937_64& rng) {
  if (n < 1 || classes < 2 || classes > 256 || h < 4 || w < 4)
    throw Error("make_synthetic: need n >= 1, 2 <= classes <= 256, extent >= 4");
  SyntheticBatch out;
  out.n = n;
  out.h = h;
  out.w = w;
  out.pixels.resize(static_cast<std::size_t>(n * h * w));
  out.labels.resize(static_cast<std::size_t>(n));
  std::uniform_int_distribution<std::int64_t> label_dist(0, classes - 1);
  std::normal_distribution<double> jitter(0.0, 0.8);
  std::uniform_real_distribution<double> amp(0.75, 1.0);
  std::uniform_real_distribution<double> noise(0.0, 0.15);
  constexpr double pi = 3.14159265358979323846;
  const double r = 0.30 * static_cast<double>(std::min(h, w));
  const double sigma = 0.11 * static_cast<double>(std::min(h, w));
  for (std::int64_t s = 0; s < n; ++s) {
    const std::int64_t k = label_dist(rng);
    out.labels[static_cast<std::size_t>(s)] = k;
    const double angle = 2.0 * pi * static_cast<double>(k) / static_cast<double>(classes);
    const double cy = (static_cast<double>(h) - 1.0) / 2.0 + r * std::sin(angle) + jitter(rng);
    const double cx = (static_cast<double>(w) - 1.0) / 2.0 + r * std::cos(angle) + jitter(rng);
    const double a = amp(rng);
    for (std::int64_t i = 0; i < h; ++i)
      for (std::int64_t j = 0; j < w; ++j) {
        const double d2 = (static_cast<double>(i) - cy) * (static_cast<double>(i) - cy) +
                          (static_cast<double>(j) - cx) * (static_cast<double>(j) - cx);
        double v = a * std::exp(-d2 / (2.0 * sigma * sigma)) + noise(rng);
        v = std::min(1.0, std::max(0.0, v));
        out.pixels[static_cast<std::size_t>((s * h + i) * w + j)] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
  }
  return out;
}

/// Scalar mean/std of the training images, applied identically to all splits.
struct NormStats {
  double mean = 0.0;
  double stdev = 1.0;
};

template <class S>
NormStats compute_norm_stats(const Tensor<S>& images) {
  double sum = 0.0, sum2 = 0.0;
  for (S v : images.data) {
    sum += static_cast<double>(v);
    sum2 += static_cast<double>(v) * static_cast<double>(v);
  }
  const double n = static_cast<double>(images.data.size());
  NormStats st;
  st.mean = sum / n;
  const double var = std::max(0.0, sum2 / n - st.mean * st.mean);
  st.stdev = std::sqrt(var) > 1e-12 ? std::sqrt(var) : 1.0;
  return st;
}

template <class S>
void apply_norm(Tensor<S>& images, const NormStats& st) {
  for (S& v : images.data)
    v = static_cast<S>((static_cast<double>(v) - st.mean) / st.stdev);
}

/// Rows [start, start+count) of a dataset as one batch.
template <class S>
Tensor<S> slice_images(const Tensor<S>& images, std::int64_t start, std::int64_t count) {
  if (start < 0 || count < 1 || start + count > images.shape[0])
    throw Error("slice_images: range [" + std::to_string(start) + "," +
                std::to_string(start + count) + ") outside " + std::to_string(images.shape[0]));
  Shape s = images.shape;
  s[0] = count;
  Tensor<S> out(s);
  const std::int64_t row = shape_numel(s) / count;
  std::copy(images.data.begin() + start * row, images.data.begin() + (start + count) * row,
            out.data.begin());
  return out;
}

}  // namespace netbooster
