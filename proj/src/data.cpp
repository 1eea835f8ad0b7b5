#include "tvl/data.hpp"

#include <fmt/format.h>
#include <zlib.h>

#include <cmath>
#include <memory>

namespace tvl {
namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void check_magic(std::span<const std::uint8_t> bytes, std::uint32_t expected,
                 std::size_t header) {
  if (bytes.size() < header) {
    throw FormatError(fmt::format("IDX header needs {} bytes, file has {}", header, bytes.size()));
  }
  const std::uint32_t found = read_be32(bytes, 0);
  if (found != expected) {
    throw FormatError(
        fmt::format("bad IDX magic: expected 0x{:08x}, found 0x{:08x}", expected, found));
  }
}

std::filesystem::path find_idx(const std::filesystem::path& dir, const std::string& stem) {
  for (const char* suffix : {"", ".gz"}) {
    auto p = dir / (stem + suffix);
    if (std::filesystem::exists(p)) return p;
  }
  throw std::runtime_error(fmt::format("no {} (or {}.gz) under {}", stem, stem, dir.string()));
}

}  // namespace

IdxImages parse_idx_images(std::span<const std::uint8_t> bytes) {
  check_magic(bytes, kIdxImageMagic, 16);
  IdxImages img;
  img.count = read_be32(bytes, 4);
  img.rows = read_be32(bytes, 8);
  img.cols = read_be32(bytes, 12);
  const std::size_t expected = std::size_t{img.count} * img.rows * img.cols;
  if (bytes.size() - 16 < expected) {
    throw FormatError(fmt::format("IDX images truncated: header declares {} x {} x {} = {} bytes, "
                                  "payload has {}",
                                  img.count, img.rows, img.cols, expected, bytes.size() - 16));
  }
  img.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(expected));
  return img;
}

std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  check_magic(bytes, kIdxLabelMagic, 8);
  const std::uint32_t count = read_be32(bytes, 4);
  if (bytes.size() - 8 < count) {
    throw FormatError(fmt::format("IDX labels truncated: header declares {}, payload has {}",
                                  count, bytes.size() - 8));
  }
  std::vector<std::uint8_t> labels(bytes.begin() + 8, bytes.begin() + 8 + count);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= kNumClasses) {
      throw FormatError(fmt::format("label {} at index {} is not a class in 0..9", labels[i], i));
    }
  }
  return labels;
}

std::vector<std::uint8_t> encode_idx_images(const IdxImages& images) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + images.pixels.size());
  write_be32(out, kIdxImageMagic);
  write_be32(out, images.count);
  write_be32(out, images.rows);
  write_be32(out, images.cols);
  out.insert(out.end(), images.pixels.begin(), images.pixels.end());
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  write_be32(out, kIdxLabelMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  // gzread passes uncompressed files through unchanged.
  std::unique_ptr<gzFile_s, int (*)(gzFile)> file(gzopen(path.c_str(), "rb"), &gzclose);
  if (!file) throw std::runtime_error(fmt::format("cannot open {}", path.string()));
  std::vector<std::uint8_t> out;
  std::uint8_t chunk[1 << 16];
  for (;;) {
    const int n = gzread(file.get(), chunk, sizeof chunk);
    if (n < 0) {
      int err = 0;
      throw std::runtime_error(
          fmt::format("reading {}: {}", path.string(), gzerror(file.get(), &err)));
    }
    if (n == 0) break;
    out.insert(out.end(), chunk, chunk + n);
  }
  return out;
}

IdxImages load_idx_images(const std::filesystem::path& path) {
  return parse_idx_images(read_file_bytes(path));
}

std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path) {
  return parse_idx_labels(read_file_bytes(path));
}

Dataset preprocess(const IdxImages& images, std::span<const std::uint8_t> labels,
                   std::string name) {
  if (images.count != labels.size()) {
    throw FormatError(fmt::format("{}: {} images but {} labels", name, images.count,
                                  labels.size()));
  }
  const std::size_t width = std::size_t{images.rows} * images.cols;
  Dataset d;
  d.name = std::move(name);
  d.labels.assign(labels.begin(), labels.end());
  d.features = Matrix(images.count, width);
  auto& f = d.features.data();
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = images.pixels[i] / 255.0;
  return d;
}

Dataset load_dataset(const std::filesystem::path& dir, Split split, std::string name) {
  const std::string prefix = split == Split::Train ? "train" : "t10k";
  const auto images = load_idx_images(find_idx(dir, prefix + "-images-idx3-ubyte"));
  const auto labels = load_idx_labels(find_idx(dir, prefix + "-labels-idx1-ubyte"));
  return preprocess(images, labels, std::move(name));
}

Dataset head(const Dataset& data, std::size_t n) {
  if (n >= data.size()) return data;
  Dataset d;
  d.name = data.name;
  d.labels.assign(data.labels.begin(), data.labels.begin() + static_cast<std::ptrdiff_t>(n));
  const std::size_t w = data.feature_width();
  d.features = Matrix(n, w,
                      std::vector<double>(data.features.data().begin(),
                                          data.features.data().begin() +
                                              static_cast<std::ptrdiff_t>(n * w)));
  return d;
}

void standardize(Dataset& train, Dataset& test) {
  const auto& f = train.features.data();
  if (f.empty()) throw std::invalid_argument("standardize: empty training set");
  double sum = 0.0;
  for (double v : f) sum += v;
  const double mean = sum / static_cast<double>(f.size());
  double sq = 0.0;
  for (double v : f) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / static_cast<double>(f.size()));
  const double inv = sd > 0.0 ? 1.0 / sd : 1.0;
  for (Dataset* d : {&train, &test})
    for (double& v : d->features.data()) v = (v - mean) * inv;
}

Batch gather_batch(const Dataset& data, std::span<const std::size_t> indices) {
  Batch b;
  const std::size_t w = data.feature_width();
  b.features = Matrix(w, indices.size());
  b.labels.reserve(indices.size());
  for (std::size_t s = 0; s < indices.size(); ++s) {
    const std::size_t idx = indices[s];
    if (idx >= data.size()) {
      throw std::out_of_range(fmt::format("sample index {} >= dataset size {}", idx, data.size()));
    }
    const auto row = data.features.row(idx);
    for (std::size_t f = 0; f < w; ++f) b.features(f, s) = row[f];
    b.labels.push_back(data.labels[idx]);
  }
  return b;
}

}  // namespace tvl
