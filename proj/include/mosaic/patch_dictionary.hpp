#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "mosaic/grid.hpp"

namespace mosaic {

struct DictionaryBuildOptions {
  int max_images = 0;      // 0 = use all images
  int location_stride = 1; // stride over window centers (both axes)
};

/// Structure-of-arrays store of all P x P x C training patches, one per
/// (image, center) pair, duplicates retained. Precomputed squared norms
/// feed the ||a||^2 - 2<a,b> + ||b||^2 distance expansion; border classes
/// index the zero-padding dictionaries; the location table backs the
/// per-pixel (LS) view.
class PatchDictionary {
 public:
  PatchDictionary() = default;

  int patch_size() const { return patch_size_; }
  int channels() const { return channels_; }
  PaddingMode padding() const { return padding_; }
  int image_height() const { return image_height_; }
  int image_width() const { return image_width_; }
  int image_count() const { return image_count_; }
  const DictionaryBuildOptions& build_options() const { return options_; }

  std::size_t size() const { return norms_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(patch_size_) * patch_size_ * channels_; }

  const float* patch(std::size_t i) const { return patches_.data() + i * dim(); }
  const std::vector<float>& patch_data() const { return patches_; }
  double norm_sq(std::size_t i) const { return norms_[i]; }
  const std::vector<double>& norms() const { return norms_; }

  /// Center-pixel values, M x C.
  const float* center(std::size_t i) const { return centers_.data() + i * channels_; }

  int image_index(std::size_t i) const { return image_index_[i]; }
  int center_row(std::size_t i) const { return center_row_[i]; }
  int center_col(std::size_t i) const { return center_col_[i]; }
  int label(std::size_t i) const { return labels_[i]; }
  bool has_labels() const { return has_labels_; }

  BorderSignature signature(std::size_t i) const {
    Window w{patch_size_, center_row_[i], center_col_[i]};
    return padding_ == PaddingMode::Zero ? window_signature(w, image_height_, image_width_)
                                         : BorderSignature{};
  }

  const std::map<BorderSignature, std::vector<std::uint32_t>>& class_index() const { return class_index_; }
  const std::map<int, std::vector<std::uint32_t>>& label_index() const { return label_index_; }

  /// Patches centered at (r, c); empty when the build stride skipped the
  /// location.
  const std::vector<std::uint32_t>& location_members(int r, int c) const {
    static const std::vector<std::uint32_t> kEmpty;
    if (r < 0 || r >= image_height_ || c < 0 || c >= image_width_) return kEmpty;
    return location_index_[static_cast<std::size_t>(r) * image_width_ + c];
  }

  Patch patch_copy(std::size_t i) const {
    Patch p;
    p.size = patch_size_;
    p.channels = channels_;
    p.data.assign(patch(i), patch(i) + dim());
    p.source = PatchSource{image_index_[i], center_row_[i], center_col_[i], labels_[i]};
    p.signature = signature(i);
    return p;
  }

  /// New dictionary restricted to the given patch indices (order preserved).
  PatchDictionary subset(const std::vector<std::uint32_t>& indices) const {
    PatchDictionary out;
    out.patch_size_ = patch_size_;
    out.channels_ = channels_;
    out.padding_ = padding_;
    out.image_height_ = image_height_;
    out.image_width_ = image_width_;
    out.image_count_ = image_count_;
    out.options_ = options_;
    out.has_labels_ = has_labels_;
    for (std::uint32_t i : indices) {
      require(i < size(), "PatchDictionary::subset: index out of range");
      out.append(patch(i), image_index_[i], center_row_[i], center_col_[i], labels_[i]);
    }
    out.finalize();
    return out;
  }

  std::uint64_t digest() const {
    std::uint64_t h = fnv1a64(patches_.data(), patches_.size() * sizeof(float));
    h = fnv1a64(image_index_.data(), image_index_.size() * sizeof(int), h);
    h = fnv1a64(center_row_.data(), center_row_.size() * sizeof(int), h);
    h = fnv1a64(center_col_.data(), center_col_.size() * sizeof(int), h);
    h = fnv1a64(labels_.data(), labels_.size() * sizeof(int), h);
    int geom[4] = {patch_size_, channels_, image_height_, image_width_};
    h = fnv1a64(geom, sizeof(geom), h);
    int pad = padding_ == PaddingMode::Zero ? 1 : 0;
    return fnv1a64(&pad, sizeof(pad), h);
  }

  friend PatchDictionary build_dictionary(const std::vector<ImageGrid>& images, int patch_size,
                                          PaddingMode pad, const DictionaryBuildOptions& options);
  friend PatchDictionary assemble_dictionary(int patch_size, int channels, PaddingMode pad,
                                             int image_height, int image_width, int image_count,
                                             const DictionaryBuildOptions& options, bool has_labels,
                                             std::vector<float> patches, std::vector<int> image_index,
                                             std::vector<int> center_row, std::vector<int> center_col,
                                             std::vector<int> labels);

 private:
  void append(const float* data, int img, int row, int col, int label) {
    patches_.insert(patches_.end(), data, data + dim());
    double n = 0.0;
    for (std::size_t j = 0; j < dim(); ++j) {
      double v = data[j];
      n += v * v;
    }
    norms_.push_back(n);
    int half = patch_size_ / 2;
    const float* c = data + (static_cast<std::size_t>(half) * patch_size_ + half) * channels_;
    centers_.insert(centers_.end(), c, c + channels_);
    image_index_.push_back(img);
    center_row_.push_back(row);
    center_col_.push_back(col);
    labels_.push_back(label);
  }

  void finalize() {
    class_index_.clear();
    label_index_.clear();
    location_index_.assign(static_cast<std::size_t>(image_height_) * image_width_, {});
    for (std::size_t i = 0; i < size(); ++i) {
      class_index_[signature(i)].push_back(static_cast<std::uint32_t>(i));
      if (has_labels_) label_index_[labels_[i]].push_back(static_cast<std::uint32_t>(i));
      location_index_[static_cast<std::size_t>(center_row_[i]) * image_width_ + center_col_[i]]
          .push_back(static_cast<std::uint32_t>(i));
    }
  }

  int patch_size_ = 0;
  int channels_ = 0;
  PaddingMode padding_ = PaddingMode::Circular;
  int image_height_ = 0;
  int image_width_ = 0;
  int image_count_ = 0;
  DictionaryBuildOptions options_;
  bool has_labels_ = false;

  std::vector<float> patches_;
  std::vector<double> norms_;
  std::vector<float> centers_;
  std::vector<int> image_index_;
  std::vector<int> center_row_;
  std::vector<int> center_col_;
  std::vector<int> labels_;

  std::map<BorderSignature, std::vector<std::uint32_t>> class_index_;
  std::map<int, std::vector<std::uint32_t>> label_index_;
  std::vector<std::vector<std::uint32_t>> location_index_;
};

/// One patch per (image, center) pair, image-major then row-major order.
/// Duplicates are retained: every patch carries probability mass in the
/// posterior sums.
inline PatchDictionary build_dictionary(const std::vector<ImageGrid>& images, int patch_size,
                                        PaddingMode pad, const DictionaryBuildOptions& options = {}) {
  require(!images.empty(), "build_dictionary: empty image list");
  require(patch_size >= 1 && patch_size % 2 == 1, "build_dictionary: patch size must be odd");
  const int H = images.front().height();
  const int W = images.front().width();
  const int C = images.front().channels();
  for (const auto& img : images)
    require(img.height() == H && img.width() == W && img.channels() == C,
            "build_dictionary: heterogeneous image shapes");
  if (pad == PaddingMode::Circular)
    require(patch_size <= std::min(H, W),
            "build_dictionary: patch size exceeds image; larger windows require zero padding");
  require(options.location_stride >= 1, "build_dictionary: location stride must be >= 1");

  int n_images = static_cast<int>(images.size());
  if (options.max_images > 0 && options.max_images < n_images) n_images = options.max_images;

  PatchDictionary dict;
  dict.patch_size_ = patch_size;
  dict.channels_ = C;
  dict.padding_ = pad;
  dict.image_height_ = H;
  dict.image_width_ = W;
  dict.image_count_ = n_images;
  dict.options_ = options;
  dict.has_labels_ = true;
  for (int i = 0; i < n_images; ++i)
    if (!images[static_cast<std::size_t>(i)].label()) dict.has_labels_ = false;

  const int stride = options.location_stride;
  std::size_t per_image = 0;
  for (int r = 0; r < H; r += stride)
    for (int c = 0; c < W; c += stride) ++per_image;
  dict.patches_.reserve(per_image * n_images * dict.dim());
  dict.norms_.reserve(per_image * n_images);

  for (int i = 0; i < n_images; ++i) {
    const ImageGrid& img = images[static_cast<std::size_t>(i)];
    const int label = img.label().value_or(-1);
    for (int r = 0; r < H; r += stride) {
      for (int c = 0; c < W; c += stride) {
        Patch p = extract_window(img, Window{patch_size, r, c}, pad);
        dict.append(p.data.data(), i, r, c, label);
      }
    }
  }
  dict.finalize();
  return dict;
}

/// Rebuilds a dictionary from raw arrays (file loading path).
inline PatchDictionary assemble_dictionary(int patch_size, int channels, PaddingMode pad,
                                           int image_height, int image_width, int image_count,
                                           const DictionaryBuildOptions& options, bool has_labels,
                                           std::vector<float> patches, std::vector<int> image_index,
                                           std::vector<int> center_row, std::vector<int> center_col,
                                           std::vector<int> labels) {
  PatchDictionary dict;
  dict.patch_size_ = patch_size;
  dict.channels_ = channels;
  dict.padding_ = pad;
  dict.image_height_ = image_height;
  dict.image_width_ = image_width;
  dict.image_count_ = image_count;
  dict.options_ = options;
  dict.has_labels_ = has_labels;
  const std::size_t dim = dict.dim();
  const std::size_t m = image_index.size();
  require(patches.size() == m * dim, "assemble_dictionary: payload size mismatch");
  require(center_row.size() == m && center_col.size() == m && labels.size() == m,
          "assemble_dictionary: metadata size mismatch");
  for (std::size_t i = 0; i < m; ++i)
    dict.append(patches.data() + i * dim, image_index[i], center_row[i], center_col[i], labels[i]);
  dict.finalize();
  return dict;
}

/// Indices whose border class matches the query signature exactly (label
/// filtered when given). Under circular padding every patch is interior,
/// so an interior query returns the whole (label-filtered) dictionary.
inline std::vector<std::uint32_t> eligible_patches(const PatchDictionary& dict,
                                                   const BorderSignature& query,
                                                   std::optional<int> label = std::nullopt) {
  if (!query.interior())
    require(dict.padding() == PaddingMode::Zero,
            "eligible_patches: border-class query requires a zero-padding dictionary");
  auto it = dict.class_index().find(query);
  std::vector<std::uint32_t> out;
  if (it != dict.class_index().end()) {
    if (label) {
      for (std::uint32_t i : it->second)
        if (dict.label(i) == *label) out.push_back(i);
    } else {
      out = it->second;
    }
  }
  require(!out.empty(), "no consistent patches");
  return out;
}

/// The LS machine's per-pixel dictionary: patches drawn from the same
/// location x (one per training image).
inline std::vector<std::uint32_t> location_restricted_view(const PatchDictionary& dict, int row, int col,
                                                           std::optional<int> label = std::nullopt) {
  const auto& members = dict.location_members(row, col);
  if (!label) return members;
  std::vector<std::uint32_t> out;
  for (std::uint32_t i : members)
    if (dict.label(i) == *label) out.push_back(i);
  return out;
}

}  // namespace mosaic
