#include <zlib.h>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "agesel/data.hpp"
#include "agesel/error.hpp"

namespace agesel {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error reading " + path.string());
  return bytes;
}

std::vector<unsigned char> gunzip(const std::vector<unsigned char>& packed, const std::filesystem::path& path) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw IoError("zlib init failed");
  zs.next_in = const_cast<Bytef*>(packed.data());
  zs.avail_in = static_cast<uInt>(packed.size());
  std::vector<unsigned char> out;
  std::vector<unsigned char> chunk(1 << 16);
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk.data();
    zs.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw FormatError("corrupt or truncated gzip stream in " + path.string());
    }
    out.insert(out.end(), chunk.begin(), chunk.begin() + static_cast<std::ptrdiff_t>(chunk.size() - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw FormatError("truncated gzip stream in " + path.string());
    }
  }
  inflateEnd(&zs);
  return out;
}

std::vector<unsigned char> read_maybe_gzip(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) {
    return gunzip(bytes, path);
  }
  return bytes;
}

std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t offset) {
  return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) |
         (std::uint32_t{b[offset + 2]} << 8) | std::uint32_t{b[offset + 3]};
}

}  // namespace

GlobalDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                       std::optional<std::size_t> num_classes) {
  const auto images = read_maybe_gzip(images_path);
  const auto labels = read_maybe_gzip(labels_path);

  if (images.size() < 16) throw FormatError("truncated IDX image header in " + images_path.string());
  if (labels.size() < 8) throw FormatError("truncated IDX label header in " + labels_path.string());
  if (read_be32(images, 0) != kImageMagic) throw FormatError("bad IDX image magic in " + images_path.string());
  if (read_be32(labels, 0) != kLabelMagic) throw FormatError("bad IDX label magic in " + labels_path.string());

  const std::size_t n_images = read_be32(images, 4);
  const std::size_t rows = read_be32(images, 8);
  const std::size_t cols = read_be32(images, 12);
  const std::size_t n_labels = read_be32(labels, 4);
  if (n_images != n_labels) {
    throw FormatError("IDX count mismatch: " + std::to_string(n_images) + " images vs " + std::to_string(n_labels) +
                      " labels");
  }
  if (n_images == 0) throw FormatError("IDX files contain no samples");
  const std::size_t f = rows * cols;
  if (f == 0) throw FormatError("IDX images have zero pixels");
  if (images.size() < 16 + n_images * f) throw FormatError("truncated IDX image payload in " + images_path.string());
  if (labels.size() < 8 + n_labels) throw FormatError("truncated IDX label payload in " + labels_path.string());

  std::vector<double> features(n_images * f);
  for (std::size_t i = 0; i < features.size(); ++i) {
    features[i] = static_cast<double>(images[16 + i]) / 255.0;
  }
  std::vector<int> label_values(n_labels);
  int max_label = 0;
  for (std::size_t i = 0; i < n_labels; ++i) {
    label_values[i] = labels[8 + i];
    max_label = std::max(max_label, label_values[i]);
  }
  const std::size_t k = num_classes.value_or(static_cast<std::size_t>(max_label) + 1);
  return GlobalDataset(std::max<std::size_t>(k, 1), f, std::move(features), std::move(label_values));
}

}  // namespace agesel
