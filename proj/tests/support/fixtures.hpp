#pragma once

// Shared synthetic data for the test suites: random grids, the two-image
// black/white toy set, digit-like blobs standing in for MNIST-scale data,
// and byte-level encoders for the IDX / CIFAR-10 file formats (written
// independently of the loaders they exercise).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "mosaic/grid.hpp"

namespace fixtures {

using mosaic::ImageGrid;

/// Uniform values in [-1, 1], reproducible across runs.
inline ImageGrid random_image(int h, int w, int c, std::uint32_t seed,
                              std::optional<int> label = std::nullopt) {
  std::mt19937 eng(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  ImageGrid img(h, w, c);
  for (auto& v : img.data()) v = dist(eng);
  img.set_label(label);
  return img;
}

inline std::vector<ImageGrid> random_images(int n, int h, int w, int c, std::uint32_t seed,
                                            bool labeled = false) {
  std::vector<ImageGrid> out;
  for (int i = 0; i < n; ++i)
    out.push_back(random_image(h, w, c, seed + static_cast<std::uint32_t>(i),
                               labeled ? std::optional<int>(i % 3) : std::nullopt));
  return out;
}

inline ImageGrid constant_image(int h, int w, int c, float value) {
  return ImageGrid(h, w, c, value);
}

/// The two-image training set behind the toy creativity experiment:
/// one all-black (-1) and one all-white (+1) image.
inline std::vector<ImageGrid> black_white_set(int h, int w) {
  return {constant_image(h, w, 1, -1.0f), constant_image(h, w, 1, 1.0f)};
}

/// Digit-like grayscale blobs: dark background with a few bright strokes.
/// Used wherever the suite needs MNIST-shaped but self-generated data.
inline ImageGrid synthetic_digit(int h, int w, std::uint32_t seed,
                                 std::optional<int> label = std::nullopt) {
  std::mt19937 eng(seed);
  std::uniform_int_distribution<int> row(h / 4, 3 * h / 4);
  std::uniform_int_distribution<int> col(w / 4, 3 * w / 4);
  std::uniform_int_distribution<int> step(-1, 1);
  std::uniform_int_distribution<int> len(h, 3 * h);
  ImageGrid img(h, w, 1, -1.0f);
  int strokes = 2 + static_cast<int>(eng() % 3);
  for (int s = 0; s < strokes; ++s) {
    int r = row(eng), c = col(eng);
    int n = len(eng);
    for (int i = 0; i < n; ++i) {
      img.at(r, c, 0) = 1.0f;
      if (r + 1 < h) img.at(r + 1, c, 0) = std::max(img.at(r + 1, c, 0), 0.2f);
      if (c + 1 < w) img.at(r, c + 1, 0) = std::max(img.at(r, c + 1, 0), 0.2f);
      r = std::clamp(r + step(eng), 1, h - 2);
      c = std::clamp(c + step(eng), 1, w - 2);
    }
  }
  img.set_label(label);
  return img;
}

inline std::vector<ImageGrid> synthetic_digits(int n, int h, int w, std::uint32_t seed,
                                               bool labeled = false) {
  std::vector<ImageGrid> out;
  for (int i = 0; i < n; ++i)
    out.push_back(synthetic_digit(h, w, seed + static_cast<std::uint32_t>(i) * 977u,
                                  labeled ? std::optional<int>(i % 10) : std::nullopt));
  return out;
}

inline void put_u32_be(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

/// IDX3 image file (big-endian dims, unsigned bytes), plus optional IDX1 labels.
inline void write_idx_images(const std::filesystem::path& path, const std::vector<ImageGrid>& images) {
  std::ofstream f(path, std::ios::binary);
  put_u32_be(f, 0x00000803u);
  put_u32_be(f, static_cast<std::uint32_t>(images.size()));
  put_u32_be(f, static_cast<std::uint32_t>(images[0].height()));
  put_u32_be(f, static_cast<std::uint32_t>(images[0].width()));
  for (const auto& img : images)
    for (float v : img.data()) {
      unsigned char b = mosaic::unit_to_byte(v);
      f.write(reinterpret_cast<const char*>(&b), 1);
    }
}

inline void write_idx_labels(const std::filesystem::path& path, const std::vector<int>& labels) {
  std::ofstream f(path, std::ios::binary);
  put_u32_be(f, 0x00000801u);
  put_u32_be(f, static_cast<std::uint32_t>(labels.size()));
  for (int v : labels) {
    unsigned char b = static_cast<unsigned char>(v);
    f.write(reinterpret_cast<const char*>(&b), 1);
  }
}

/// CIFAR-10 binary batch: per record 1 label byte + 3072 planar RGB bytes.
inline void write_cifar_batch(const std::filesystem::path& path, const std::vector<ImageGrid>& images) {
  std::ofstream f(path, std::ios::binary);
  for (const auto& img : images) {
    unsigned char label = static_cast<unsigned char>(img.label().value_or(0));
    f.write(reinterpret_cast<const char*>(&label), 1);
    for (int ch = 0; ch < 3; ++ch)
      for (int r = 0; r < 32; ++r)
        for (int c = 0; c < 32; ++c) {
          unsigned char b = mosaic::unit_to_byte(img.at(r, c, ch));
          f.write(reinterpret_cast<const char*>(&b), 1);
        }
  }
}

/// Fresh scratch directory under the system temp root.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mosaic_tests_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixtures
