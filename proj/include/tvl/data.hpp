#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tvl/tensor.hpp"

namespace tvl {

/// Malformed IDX content: bad magic, short payload, invalid label.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;  // 2051
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;  // 2049
inline constexpr std::size_t kNumClasses = 10;

struct IdxImages {
  std::uint32_t count = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols, row-major per image
};

IdxImages parse_idx_images(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_idx_images(const IdxImages& images);
std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels);

/// Whole file contents; gzip input is inflated transparently.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

IdxImages load_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path);

/// Sample-major features: row i is image i flattened (pixel (r, c) at r*cols + c).
struct Dataset {
  Matrix features;
  std::vector<std::uint8_t> labels;
  std::string name;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t feature_width() const noexcept { return features.cols(); }
};

/// Flattens images and scales pixels by 1/255.
Dataset preprocess(const IdxImages& images, std::span<const std::uint8_t> labels,
                   std::string name);

enum class Split { Train, Test };

/// Loads `<dir>/{train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz]`.
Dataset load_dataset(const std::filesystem::path& dir, Split split, std::string name);

/// First n samples (n >= size() keeps everything).
Dataset head(const Dataset& data, std::size_t n);

/// Shift and scale every feature by the training set's global mean and
/// standard deviation. Features leave [0, 1] afterwards.
void standardize(Dataset& train, Dataset& test);

/// Mini-batch in feature-major layout (n_0 x B).
struct Batch {
  Matrix features;
  std::vector<std::uint8_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
};

Batch gather_batch(const Dataset& data, std::span<const std::size_t> indices);

}  // namespace tvl
