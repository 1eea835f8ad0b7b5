#include <gtest/gtest.h>
#include <zlib.h>

#include <filesystem>
#include <fstream>
#include <numeric>

#include "tvl/data.hpp"
#include "tvl/experiment.hpp"

namespace tvl {
namespace {

namespace fs = std::filesystem;

IdxImages tiny_images(std::uint32_t count, std::uint32_t rows, std::uint32_t cols) {
  IdxImages img{count, rows, cols, {}};
  img.pixels.resize(std::size_t{count} * rows * cols);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 7);
  return img;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("tvl_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                           static_cast<std::streamsize>(bytes.size()));
}

void write_gz(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  gzFile f = gzopen(p.c_str(), "wb");
  ASSERT_NE(f, nullptr);
  ASSERT_EQ(gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size())),
            static_cast<int>(bytes.size()));
  gzclose(f);
}

TEST(Idx, HeaderBytesAreBigEndian) {
  const auto bytes = encode_idx_images(tiny_images(2, 3, 4));
  ASSERT_EQ(bytes.size(), 16u + 24u);
  EXPECT_EQ(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 16),
            (std::vector<std::uint8_t>{0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0, 4}));
  const auto labels = encode_idx_labels(std::vector<std::uint8_t>{1, 9});
  EXPECT_EQ(labels, (std::vector<std::uint8_t>{0, 0, 8, 1, 0, 0, 0, 2, 1, 9}));
}

TEST(Idx, RoundTrip) {
  const IdxImages img = tiny_images(3, 2, 5);
  const IdxImages back = parse_idx_images(encode_idx_images(img));
  EXPECT_EQ(back.count, 3u);
  EXPECT_EQ(back.rows, 2u);
  EXPECT_EQ(back.cols, 5u);
  EXPECT_EQ(back.pixels, img.pixels);
  const std::vector<std::uint8_t> labels{0, 4, 9};
  EXPECT_EQ(parse_idx_labels(encode_idx_labels(labels)), labels);
}

TEST(Idx, RejectsBadMagic) {
  auto bytes = encode_idx_images(tiny_images(1, 2, 2));
  bytes[3] = 0x01;
  EXPECT_THROW(parse_idx_images(bytes), FormatError);
  EXPECT_THROW(parse_idx_labels(encode_idx_images(tiny_images(1, 1, 1))), FormatError);
}

TEST(Idx, RejectsTruncatedPayload) {
  auto bytes = encode_idx_images(tiny_images(2, 2, 2));
  bytes.pop_back();
  EXPECT_THROW(parse_idx_images(bytes), FormatError);
  EXPECT_THROW(parse_idx_images(std::vector<std::uint8_t>{0, 0, 8}), FormatError);
  auto labels = encode_idx_labels(std::vector<std::uint8_t>{1, 2, 3});
  labels.pop_back();
  EXPECT_THROW(parse_idx_labels(labels), FormatError);
}

TEST(Idx, RejectsLabelOutsideClasses) {
  try {
    parse_idx_labels(encode_idx_labels(std::vector<std::uint8_t>{3, 10}));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("index 1"), std::string::npos);
  }
}

TEST(Preprocess, ScalingAndPixelPlacement) {
  IdxImages img{1, 28, 28, std::vector<std::uint8_t>(784, 0)};
  img.pixels[28 * 5 + 17] = 255;
  const Dataset d = preprocess(img, std::vector<std::uint8_t>{2}, "one");
  ASSERT_EQ(d.feature_width(), 784u);
  for (std::size_t i = 0; i < 784; ++i) EXPECT_EQ(d.features(0, i), i == 28 * 5 + 17 ? 1.0 : 0.0);
  EXPECT_EQ(d.labels, (std::vector<std::uint8_t>{2}));
  img.pixels[0] = 51;
  EXPECT_EQ(preprocess(img, std::vector<std::uint8_t>{2}, "x").features(0, 0), 0.2);
}

TEST(Preprocess, CountMismatch) {
  EXPECT_THROW(preprocess(tiny_images(2, 2, 2), std::vector<std::uint8_t>{1}, "bad"), FormatError);
}

TEST(LoadDataset, PlainAndGzipFixturesAgree) {
  const IdxImages img = tiny_images(4, 3, 3);
  const std::vector<std::uint8_t> labels{1, 2, 3, 4};
  const fs::path plain = scratch_dir("plain"), gz = scratch_dir("gz");
  write_bytes(plain / "train-images-idx3-ubyte", encode_idx_images(img));
  write_bytes(plain / "train-labels-idx1-ubyte", encode_idx_labels(labels));
  write_gz(gz / "train-images-idx3-ubyte.gz", encode_idx_images(img));
  write_gz(gz / "train-labels-idx1-ubyte.gz", encode_idx_labels(labels));
  const Dataset a = load_dataset(plain, Split::Train, "a");
  const Dataset b = load_dataset(gz, Split::Train, "b");
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.labels, labels);
  EXPECT_THROW(load_dataset(plain, Split::Test, "t"), std::runtime_error);
}

TEST(Dataset, HeadGatherStandardize) {
  Dataset d = preprocess(tiny_images(5, 1, 2), std::vector<std::uint8_t>{0, 1, 2, 3, 4}, "d");
  const Dataset h = head(d, 2);
  EXPECT_EQ(h.size(), 2u);
  EXPECT_EQ(h.features.row(1)[0], d.features.row(1)[0]);
  EXPECT_EQ(head(d, 99).size(), 5u);

  const std::vector<std::size_t> idx{4, 0};
  const Batch b = gather_batch(d, idx);
  EXPECT_EQ(b.features.rows(), 2u);
  EXPECT_EQ(b.features(1, 0), d.features(4, 1));
  EXPECT_EQ(b.labels, (std::vector<std::uint8_t>{4, 0}));
  const std::vector<std::size_t> bad{5};
  EXPECT_THROW(gather_batch(d, bad), std::out_of_range);

  Dataset train = d, test = d;
  standardize(train, test);
  const auto& f = train.features.data();
  const double mean = std::accumulate(f.begin(), f.end(), 0.0) / f.size();
  double sq = 0.0;
  for (double v : f) sq += v * v;
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(sq / f.size(), 1.0, 1e-12);
  EXPECT_EQ(test.features, train.features);
}

TEST(RealData, FirstMnistTrainingImage) {
  const fs::path dir = default_data_dir() / "mnist";
  if (!fs::exists(dir)) GTEST_SKIP() << "no MNIST under " << dir;
  const Dataset train = load_dataset(dir, Split::Train, "mnist");
  ASSERT_EQ(train.size(), 60000u);
  ASSERT_EQ(train.feature_width(), 784u);
  EXPECT_EQ(train.labels[0], 5);
  double sum = 0.0;
  for (double v : train.features.row(0)) sum += v * 255.0;
  EXPECT_NEAR(sum, 27525.0, 1e-6);
  EXPECT_EQ(load_dataset(dir, Split::Test, "mnist").size(), 10000u);
}

}  // namespace
}  // namespace tvl
