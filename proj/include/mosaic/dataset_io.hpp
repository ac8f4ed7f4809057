#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mosaic/patch_dictionary.hpp"
#include "mosaic/png_io.hpp"

namespace mosaic {

enum class DatasetFormat { MnistIdx, Cifar10Bin, PngDir };

inline DatasetFormat dataset_format_from_string(const std::string& s) {
  if (s == "mnist-idx") return DatasetFormat::MnistIdx;
  if (s == "cifar10-bin") return DatasetFormat::Cifar10Bin;
  if (s == "png-dir") return DatasetFormat::PngDir;
  throw Error("unknown dataset format: " + s);
}

inline const char* to_string(DatasetFormat f) {
  switch (f) {
    case DatasetFormat::MnistIdx: return "mnist-idx";
    case DatasetFormat::Cifar10Bin: return "cifar10-bin";
    default: return "png-dir";
  }
}

struct DatasetSpec {
  DatasetFormat format = DatasetFormat::PngDir;
  std::filesystem::path path;                      // IDX image file, CIFAR .bin, or PNG directory
  std::optional<std::filesystem::path> labels_path;  // IDX label file / labels.csv override
  int subset = 0;                                  // keep only the first N images (0 = all)
  std::optional<int> label_filter;
};

namespace detail {

inline std::uint32_t read_u32_be(std::istream& in, const std::string& what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  require(in.gcount() == 4, "dataset io: truncated " + what);
  return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

}  // namespace detail

/// IDX image file (big-endian dims, unsigned-byte pixels), normalized to
/// [-1, 1]. Labels attach from the companion IDX1 file when provided.
inline std::vector<ImageGrid> load_mnist_idx(const std::filesystem::path& images_path,
                                             const std::optional<std::filesystem::path>& labels_path) {
  std::ifstream f(images_path, std::ios::binary);
  require(f.is_open(), "dataset io: cannot open " + images_path.string());
  std::uint32_t magic = detail::read_u32_be(f, "IDX magic");
  require((magic >> 16) == 0, "dataset io: IDX magic mismatch in " + images_path.string());
  std::uint32_t dtype = (magic >> 8) & 0xff;
  require(dtype == 0x08, "dataset io: unsupported IDX data type (only unsigned byte)");
  require((magic & 0xff) == 3, "dataset io: IDX image file must have 3 dimensions");

  std::uint32_t count = detail::read_u32_be(f, "IDX count");
  std::uint32_t height = detail::read_u32_be(f, "IDX height");
  std::uint32_t width = detail::read_u32_be(f, "IDX width");

  std::vector<int> labels;
  if (labels_path) {
    std::ifstream lf(*labels_path, std::ios::binary);
    require(lf.is_open(), "dataset io: cannot open " + labels_path->string());
    std::uint32_t lmagic = detail::read_u32_be(lf, "IDX label magic");
    require(lmagic == 0x00000801u, "dataset io: IDX label magic mismatch");
    std::uint32_t lcount = detail::read_u32_be(lf, "IDX label count");
    require(lcount == count, "dataset io: label/image count mismatch");
    labels.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      char b;
      lf.read(&b, 1);
      require(lf.gcount() == 1, "dataset io: truncated IDX label file");
      labels[i] = static_cast<unsigned char>(b);
    }
  }

  std::vector<ImageGrid> out;
  std::vector<char> buf(static_cast<std::size_t>(height) * width);
  for (std::uint32_t i = 0; i < count; ++i) {
    f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    require(f.gcount() == static_cast<std::streamsize>(buf.size()),
            "dataset io: truncated IDX image file");
    ImageGrid img(static_cast<int>(height), static_cast<int>(width), 1);
    for (std::size_t j = 0; j < buf.size(); ++j)
      img.data()[j] = byte_to_unit(static_cast<std::uint8_t>(buf[j]));
    if (!labels.empty()) img.set_label(labels[i]);
    out.push_back(std::move(img));
  }
  return out;
}

/// CIFAR-10 binary batch: 3073-byte records, label byte + planar RGB.
inline std::vector<ImageGrid> load_cifar10_bin(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.is_open(), "dataset io: cannot open " + path.string());
  f.seekg(0, std::ios::end);
  std::streamoff size = f.tellg();
  f.seekg(0, std::ios::beg);
  constexpr std::streamoff kRecord = 3073;
  require(size > 0 && size % kRecord == 0,
          "dataset io: CIFAR-10 file size is not a multiple of 3073 (truncated?)");

  std::vector<ImageGrid> out;
  std::vector<char> rec(kRecord);
  const std::streamoff n = size / kRecord;
  for (std::streamoff i = 0; i < n; ++i) {
    f.read(rec.data(), kRecord);
    require(f.gcount() == kRecord, "dataset io: truncated CIFAR-10 record");
    int label = static_cast<unsigned char>(rec[0]);
    require(label <= 9, "dataset io: CIFAR-10 label out of range");
    ImageGrid img(32, 32, 3);
    for (int ch = 0; ch < 3; ++ch)
      for (int r = 0; r < 32; ++r)
        for (int c = 0; c < 32; ++c)
          img.at(r, c, ch) = byte_to_unit(
              static_cast<std::uint8_t>(rec[1 + ch * 1024 + r * 32 + c]));
    img.set_label(label);
    out.push_back(std::move(img));
  }
  return out;
}

/// Directory of PNGs in lexicographic filename order; labels optionally
/// come from a labels.csv of "filename,label" lines.
inline std::vector<ImageGrid> load_png_dir(const std::filesystem::path& dir,
                                           const std::optional<std::filesystem::path>& labels_csv) {
  require(std::filesystem::is_directory(dir), "dataset io: not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  require(!files.empty(), "dataset io: no .png files in " + dir.string());

  std::map<std::string, int> labels;
  std::filesystem::path csv = labels_csv.value_or(dir / "labels.csv");
  if (std::filesystem::exists(csv)) {
    std::ifstream f(csv);
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty() || line[0] == '#') continue;
      auto comma = line.find(',');
      require(comma != std::string::npos, "dataset io: malformed labels.csv line: " + line);
      labels[line.substr(0, comma)] = std::stoi(line.substr(comma + 1));
    }
  }

  std::vector<ImageGrid> out;
  for (const auto& file : files) {
    ImageGrid img = read_png(file);
    if (!out.empty())
      require(img.same_shape(out.front()),
              "dataset io: heterogeneous image shapes in " + dir.string());
    auto it = labels.find(file.filename().string());
    if (it != labels.end()) img.set_label(it->second);
    out.push_back(std::move(img));
  }
  return out;
}

inline std::vector<ImageGrid> load_dataset(const DatasetSpec& spec) {
  require(std::filesystem::exists(spec.path), "dataset io: path does not exist: " + spec.path.string());
  std::vector<ImageGrid> images;
  switch (spec.format) {
    case DatasetFormat::MnistIdx: images = load_mnist_idx(spec.path, spec.labels_path); break;
    case DatasetFormat::Cifar10Bin: images = load_cifar10_bin(spec.path); break;
    case DatasetFormat::PngDir: images = load_png_dir(spec.path, spec.labels_path); break;
  }
  if (spec.label_filter) {
    std::vector<ImageGrid> kept;
    for (auto& img : images)
      if (img.label() && *img.label() == *spec.label_filter) kept.push_back(std::move(img));
    require(!kept.empty(), "dataset io: no images with requested label");
    images = std::move(kept);
  }
  if (spec.subset > 0 && spec.subset < static_cast<int>(images.size()))
    images.resize(static_cast<std::size_t>(spec.subset));
  return images;
}

// ---------------------------------------------------------------------------
// PDX1 dictionary file:
//   bytes 0..3   magic "PDX1"
//   bytes 4..11  u64 little-endian header length L
//   bytes 12..   JSON header (patch geometry, padding, source manifest,
//                normalization note, build options)
//   payload      M * P*P*C little-endian f32
//   metadata     M i32 image_index | M i32 center_row | M i32 center_col |
//                M i32 label (little-endian)
// ---------------------------------------------------------------------------

inline void write_dictionary(const std::filesystem::path& path, const PatchDictionary& dict,
                             const nlohmann::json& source_manifest = nlohmann::json::object()) {
  std::ofstream f(path, std::ios::binary);
  require(f.is_open(), "dictionary io: cannot open " + path.string());

  nlohmann::json header = {
      {"patch_size", dict.patch_size()},
      {"channels", dict.channels()},
      {"count", dict.size()},
      {"padding", to_string(dict.padding())},
      {"image", {{"height", dict.image_height()},
                 {"width", dict.image_width()},
                 {"count", dict.image_count()}}},
      {"options", {{"max_images", dict.build_options().max_images},
                   {"location_stride", dict.build_options().location_stride}}},
      {"has_labels", dict.has_labels()},
      {"normalization", "[-1,1]"},
      {"source", source_manifest},
  };
  std::string header_bytes = header.dump();

  f.write("PDX1", 4);
  std::uint64_t len = header_bytes.size();
  f.write(reinterpret_cast<const char*>(&len), 8);
  f.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));
  f.write(reinterpret_cast<const char*>(dict.patch_data().data()),
          static_cast<std::streamsize>(dict.patch_data().size() * sizeof(float)));

  auto write_i32 = [&f](int v) { f.write(reinterpret_cast<const char*>(&v), 4); };
  for (std::size_t i = 0; i < dict.size(); ++i) write_i32(dict.image_index(i));
  for (std::size_t i = 0; i < dict.size(); ++i) write_i32(dict.center_row(i));
  for (std::size_t i = 0; i < dict.size(); ++i) write_i32(dict.center_col(i));
  for (std::size_t i = 0; i < dict.size(); ++i) write_i32(dict.label(i));
  require(f.good(), "dictionary io: write failed");
}

inline PatchDictionary read_dictionary(const std::filesystem::path& path,
                                       nlohmann::json* source_manifest = nullptr) {
  std::ifstream f(path, std::ios::binary);
  require(f.is_open(), "dictionary io: cannot open " + path.string());

  char magic[4];
  f.read(magic, 4);
  require(f.gcount() == 4 && std::string(magic, 4) == "PDX1",
          "dictionary io: bad magic in " + path.string());
  std::uint64_t len = 0;
  f.read(reinterpret_cast<char*>(&len), 8);
  require(f.gcount() == 8 && len > 0 && len < (1ull << 31), "dictionary io: bad header length");
  std::string header_bytes(len, '\0');
  f.read(header_bytes.data(), static_cast<std::streamsize>(len));
  require(f.gcount() == static_cast<std::streamsize>(len), "dictionary io: truncated header");

  nlohmann::json header = nlohmann::json::parse(header_bytes, nullptr, false);
  require(!header.is_discarded(), "dictionary io: malformed header JSON");
  const int patch_size = header.at("patch_size").get<int>();
  const int channels = header.at("channels").get<int>();
  const std::size_t count = header.at("count").get<std::size_t>();
  const PaddingMode pad = padding_from_string(header.at("padding").get<std::string>());
  const int image_height = header.at("image").at("height").get<int>();
  const int image_width = header.at("image").at("width").get<int>();
  const int image_count = header.at("image").at("count").get<int>();
  DictionaryBuildOptions options;
  options.max_images = header.at("options").at("max_images").get<int>();
  options.location_stride = header.at("options").at("location_stride").get<int>();
  const bool has_labels = header.at("has_labels").get<bool>();
  if (source_manifest && header.contains("source")) *source_manifest = header["source"];

  const std::size_t dim = static_cast<std::size_t>(patch_size) * patch_size * channels;
  std::vector<float> patches(count * dim);
  f.read(reinterpret_cast<char*>(patches.data()),
         static_cast<std::streamsize>(patches.size() * sizeof(float)));
  require(f.gcount() == static_cast<std::streamsize>(patches.size() * sizeof(float)),
          "dictionary io: truncated payload");

  auto read_i32s = [&f, count](const char* what) {
    std::vector<int> v(count);
    f.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * 4));
    require(f.gcount() == static_cast<std::streamsize>(count * 4),
            std::string("dictionary io: truncated ") + what);
    return v;
  };
  std::vector<int> image_index = read_i32s("image indices");
  std::vector<int> center_row = read_i32s("center rows");
  std::vector<int> center_col = read_i32s("center cols");
  std::vector<int> labels = read_i32s("labels");

  return assemble_dictionary(patch_size, channels, pad, image_height, image_width, image_count,
                             options, has_labels, std::move(patches), std::move(image_index),
                             std::move(center_row), std::move(center_col), std::move(labels));
}

}  // namespace mosaic
