#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "mosaic/common.hpp"

namespace mosaic {

/// Row-major, channel-last image grid. Pixel values live in [-1, 1] for
/// image data; score/noise grids reuse the same container with T = double.
template <typename T>
class Grid {
 public:
  Grid() = default;

  Grid(int height, int width, int channels, T fill = T{})
      : height_(height), width_(width), channels_(channels),
        data_(static_cast<std::size_t>(height) * width * channels, fill) {
    require(height > 0 && width > 0 && channels > 0, "Grid: dimensions must be positive");
  }

  static Grid from_data(int height, int width, int channels, std::vector<T> data,
                        std::optional<int> label = std::nullopt) {
    Grid g;
    require(height > 0 && width > 0 && channels > 0, "Grid: dimensions must be positive");
    require(data.size() == static_cast<std::size_t>(height) * width * channels,
            "Grid: data length must equal height*width*channels");
    for (const T& v : data) require(std::isfinite(static_cast<double>(v)), "Grid: non-finite pixel value");
    g.height_ = height;
    g.width_ = width;
    g.channels_ = channels;
    g.data_ = std::move(data);
    g.label_ = label;
    return g;
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }

  const std::optional<int>& label() const { return label_; }
  void set_label(std::optional<int> label) { label_ = label; }

  T& at(int r, int c, int ch = 0) { return data_[index(r, c, ch)]; }
  const T& at(int r, int c, int ch = 0) const { return data_[index(r, c, ch)]; }

  std::size_t index(int r, int c, int ch) const {
    return (static_cast<std::size_t>(r) * width_ + c) * channels_ + ch;
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool same_shape(const Grid& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <typename U>
  Grid<U> cast() const {
    Grid<U> out(height_, width_, channels_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<U>(data_[i]);
    out.set_label(label_);
    return out;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
  std::optional<int> label_;
};

using ImageGrid = Grid<float>;
using ScoreGrid = Grid<double>;

enum class PaddingMode { Circular, Zero };

inline const char* to_string(PaddingMode pad) {
  return pad == PaddingMode::Circular ? "circular" : "zero";
}

inline PaddingMode padding_from_string(const std::string& s) {
  if (s == "circular") return PaddingMode::Circular;
  if (s == "zero") return PaddingMode::Zero;
  throw Error("unknown padding mode: " + s);
}

/// P x P window (P odd) centered at a pixel coordinate.
struct Window {
  int size = 0;
  int row = 0;
  int col = 0;
};

/// Per-side counts of window rows/columns that fall outside the image.
/// All zeros under circular padding; under zero padding this is the
/// border class key.
struct BorderSignature {
  std::uint8_t top = 0, bottom = 0, left = 0, right = 0;

  bool interior() const { return top == 0 && bottom == 0 && left == 0 && right == 0; }
  bool operator==(const BorderSignature& o) const {
    return top == o.top && bottom == o.bottom && left == o.left && right == o.right;
  }
  bool operator<(const BorderSignature& o) const {
    return std::array<std::uint8_t, 4>{top, bottom, left, right} <
           std::array<std::uint8_t, 4>{o.top, o.bottom, o.left, o.right};
  }
};

struct PatchSource {
  int image_index = -1;
  int row = 0;
  int col = 0;
  int label = -1;  // -1 = unlabeled
};

/// Flat P*P*C patch with provenance and border metadata.
struct Patch {
  int size = 0;
  int channels = 0;
  std::vector<float> data;
  std::optional<PatchSource> source;
  BorderSignature signature;

  float center(int ch = 0) const {
    int half = size / 2;
    return data[(static_cast<std::size_t>(half) * size + half) * channels + ch];
  }
};

inline BorderSignature window_signature(const Window& w, int height, int width) {
  int half = w.size / 2;
  auto clampu8 = [](int v) { return static_cast<std::uint8_t>(v < 0 ? 0 : v); };
  BorderSignature sig;
  sig.top = clampu8(half - w.row);
  sig.bottom = clampu8(w.row + half - (height - 1));
  sig.left = clampu8(half - w.col);
  sig.right = clampu8(w.col + half - (width - 1));
  return sig;
}

/// Reads the P x P x C block around w.row/w.col. Out-of-range reads wrap
/// (Circular) or yield exact zeros (Zero); the returned signature records
/// the per-side overlap (always all-zero under Circular).
inline Patch extract_window(const ImageGrid& img, const Window& w, PaddingMode pad) {
  require(w.size >= 1 && w.size % 2 == 1, "extract_window: window size must be odd and >= 1");
  require(w.row >= 0 && w.row < img.height() && w.col >= 0 && w.col < img.width(),
          "extract_window: center out of bounds");
  if (pad == PaddingMode::Circular)
    require(w.size <= std::min(img.height(), img.width()),
            "extract_window: window larger than image requires zero padding");

  const int half = w.size / 2;
  const int H = img.height();
  const int W = img.width();
  const int C = img.channels();

  Patch patch;
  patch.size = w.size;
  patch.channels = C;
  patch.data.resize(static_cast<std::size_t>(w.size) * w.size * C);
  if (pad == PaddingMode::Zero) patch.signature = window_signature(w, H, W);

  std::size_t k = 0;
  for (int dr = -half; dr <= half; ++dr) {
    for (int dc = -half; dc <= half; ++dc) {
      int r = w.row + dr;
      int c = w.col + dc;
      if (pad == PaddingMode::Circular) {
        r = ((r % H) + H) % H;
        c = ((c % W) + W) % W;
        for (int ch = 0; ch < C; ++ch) patch.data[k++] = img.at(r, c, ch);
      } else if (r >= 0 && r < H && c >= 0 && c < W) {
        for (int ch = 0; ch < C; ++ch) patch.data[k++] = img.at(r, c, ch);
      } else {
        for (int ch = 0; ch < C; ++ch) patch.data[k++] = 0.0f;
      }
    }
  }
  return patch;
}

/// Circular translation: output pixel (r,c) = input ((r-dr) mod H, (c-dc) mod W).
/// This is the group action used by the equivariant machines.
template <typename T>
Grid<T> translate(const Grid<T>& img, int dr, int dc) {
  const int H = img.height();
  const int W = img.width();
  const int C = img.channels();
  Grid<T> out(H, W, C);
  out.set_label(img.label());
  auto wrap = [](int v, int m) { return ((v % m) + m) % m; };
  for (int r = 0; r < H; ++r) {
    int sr = wrap(r - dr, H);
    for (int c = 0; c < W; ++c) {
      int sc = wrap(c - dc, W);
      for (int ch = 0; ch < C; ++ch) out.at(r, c, ch) = img.at(sr, sc, ch);
    }
  }
  return out;
}

/// Byte <-> normalized value maps: v -> v/127.5 - 1 and its clamped inverse.
inline float byte_to_unit(std::uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; }

inline std::uint8_t unit_to_byte(float v) {
  float b = std::round((v + 1.0f) * 127.5f);
  if (b < 0.0f) b = 0.0f;
  if (b > 255.0f) b = 255.0f;
  return static_cast<std::uint8_t>(b);
}

}  // namespace mosaic
