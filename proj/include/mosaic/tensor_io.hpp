#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mosaic/grid.hpp"

namespace mosaic {

// TNS1 tensor container, one record:
//   bytes 0..7   u64 little-endian header length L
//   bytes 8..8+L JSON header {"magic":"TNS1","dtype":"f32","shape":[...],
//                             "layout":"row-major","endian":"little","meta":{...}}
//   then         product(shape) * 4 bytes of little-endian f32 payload
// Records may be concatenated back-to-back into a sequence file.

struct TensorRecord {
  std::vector<std::int64_t> shape;
  std::vector<float> data;
  nlohmann::json meta = nlohmann::json::object();
};

namespace detail {

inline void require_little_endian() {
  const std::uint16_t probe = 0x0102;
  require(*reinterpret_cast<const std::uint8_t*>(&probe) == 0x02,
          "tensor io: only little-endian hosts are supported");
}

inline std::int64_t element_count(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) {
    require(d > 0, "tensor io: shape entries must be positive");
    n *= d;
  }
  return n;
}

}  // namespace detail

inline void write_tensor_record(std::ostream& out, const TensorRecord& record) {
  detail::require_little_endian();
  require(static_cast<std::int64_t>(record.data.size()) == detail::element_count(record.shape),
          "tensor io: payload length must equal product(shape)");
  nlohmann::json header = {{"magic", "TNS1"},   {"dtype", "f32"},
                           {"shape", record.shape}, {"layout", "row-major"},
                           {"endian", "little"},    {"meta", record.meta}};
  std::string header_bytes = header.dump();
  std::uint64_t len = header_bytes.size();
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));
  out.write(reinterpret_cast<const char*>(record.data.data()),
            static_cast<std::streamsize>(record.data.size() * sizeof(float)));
  require(out.good(), "tensor io: write failed");
}

inline TensorRecord read_tensor_record(std::istream& in) {
  detail::require_little_endian();
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 8);
  require(in.gcount() == 8, "tensor io: truncated header length");
  require(len > 0 && len < (1ull << 31), "tensor io: implausible header length");
  std::string header_bytes(len, '\0');
  in.read(header_bytes.data(), static_cast<std::streamsize>(len));
  require(in.gcount() == static_cast<std::streamsize>(len), "tensor io: truncated header");

  nlohmann::json header = nlohmann::json::parse(header_bytes, nullptr, false);
  require(!header.is_discarded(), "tensor io: malformed header JSON");
  require(header.value("magic", "") == std::string("TNS1"), "tensor io: bad magic");
  require(header.value("dtype", "") == std::string("f32"), "tensor io: unsupported dtype");
  require(header.value("endian", "") == std::string("little"), "tensor io: unsupported endianness");

  TensorRecord record;
  record.shape = header.at("shape").get<std::vector<std::int64_t>>();
  if (header.contains("meta")) record.meta = header["meta"];
  std::int64_t n = detail::element_count(record.shape);
  record.data.resize(static_cast<std::size_t>(n));
  in.read(reinterpret_cast<char*>(record.data.data()),
          static_cast<std::streamsize>(record.data.size() * sizeof(float)));
  require(in.gcount() == static_cast<std::streamsize>(record.data.size() * sizeof(float)),
          "tensor io: truncated payload");
  return record;
}

inline void write_tensor_file(const std::filesystem::path& path, const TensorRecord& record) {
  std::ofstream f(path, std::ios::binary);
  require(f.is_open(), "tensor io: cannot open " + path.string());
  write_tensor_record(f, record);
}

inline void write_tensor_sequence(const std::filesystem::path& path,
                                  const std::vector<TensorRecord>& records) {
  std::ofstream f(path, std::ios::binary);
  require(f.is_open(), "tensor io: cannot open " + path.string());
  for (const auto& r : records) write_tensor_record(f, r);
}

inline TensorRecord read_tensor_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.is_open(), "tensor io: cannot open " + path.string());
  return read_tensor_record(f);
}

inline std::vector<TensorRecord> read_tensor_sequence(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.is_open(), "tensor io: cannot open " + path.string());
  std::vector<TensorRecord> out;
  while (f.peek() != std::char_traits<char>::eof()) out.push_back(read_tensor_record(f));
  return out;
}

inline TensorRecord grid_to_record(const ImageGrid& grid) {
  TensorRecord r;
  r.shape = {grid.height(), grid.width(), grid.channels()};
  r.data = grid.data();
  if (grid.label()) r.meta["label"] = *grid.label();
  return r;
}

inline ImageGrid grid_from_record(const TensorRecord& record) {
  require(record.shape.size() == 3, "tensor io: expected a [H, W, C] record");
  ImageGrid g = ImageGrid::from_data(static_cast<int>(record.shape[0]),
                                     static_cast<int>(record.shape[1]),
                                     static_cast<int>(record.shape[2]), record.data);
  if (record.meta.contains("label")) g.set_label(record.meta["label"].get<int>());
  return g;
}

/// Stacks same-shape grids into one [N, H, W, C] record.
inline TensorRecord stack_to_record(const std::vector<ImageGrid>& grids) {
  require(!grids.empty(), "tensor io: nothing to stack");
  TensorRecord r;
  r.shape = {static_cast<std::int64_t>(grids.size()), grids[0].height(), grids[0].width(),
             grids[0].channels()};
  for (const auto& g : grids) {
    require(g.same_shape(grids[0]), "tensor io: stack shape mismatch");
    r.data.insert(r.data.end(), g.data().begin(), g.data().end());
  }
  return r;
}

inline std::vector<ImageGrid> stack_from_record(const TensorRecord& record) {
  require(record.shape.size() == 4, "tensor io: expected a [N, H, W, C] record");
  const int n = static_cast<int>(record.shape[0]);
  const int h = static_cast<int>(record.shape[1]);
  const int w = static_cast<int>(record.shape[2]);
  const int c = static_cast<int>(record.shape[3]);
  const std::size_t stride = static_cast<std::size_t>(h) * w * c;
  std::vector<ImageGrid> out;
  for (int i = 0; i < n; ++i) {
    std::vector<float> chunk(record.data.begin() + static_cast<std::ptrdiff_t>(i * stride),
                             record.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * stride));
    out.push_back(ImageGrid::from_data(h, w, c, std::move(chunk)));
  }
  return out;
}

}  // namespace mosaic
