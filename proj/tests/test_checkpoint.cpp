#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "oracles.hpp"
#include "tvl/checkpoint.hpp"
#include "tvl/data.hpp"
#include "tvl/trainer.hpp"

namespace tvl {
namespace {

bool bit_equal(const NetworkParams& a, const NetworkParams& b) {
  Vector fa, fb;
  for_each_scalar(a, [&](double v) { fa.push_back(v); });
  for_each_scalar(b, [&](double v) { fb.push_back(v); });
  return fa.size() == fb.size() &&
         std::memcmp(fa.data(), fb.data(), fa.size() * sizeof(double)) == 0 && a.arch == b.arch &&
         a.tau_ids == b.tau_ids && std::memcmp(&a.gamma, &b.gamma, sizeof(double)) == 0;
}

TEST(Checkpoint, RoundTripIsBitExact) {
  for (ArchKind kind : {ArchKind::ResNet, ArchKind::Fractional}) {
    SeededRng rng(1);
    NetworkParams p = testing::random_params(rng, kind, 6, 5, 4, 3, 0.37);
    p.weights[1](0, 0) = -0.0;
    p.weights[2](1, 1) = 1e-310;
    EXPECT_TRUE(bit_equal(decode_checkpoint(encode_checkpoint(p)), p));
  }
}

TEST(Checkpoint, PrunedNetworkKeepsOriginalIds) {
  SeededRng rng(2);
  NetworkParams p = testing::random_params(rng, ArchKind::ResNet, 6, 5, 4, 3);
  p.tau[2] = 1e-6;
  const PruneResult pr = prune_check(p, 0.01);
  ASSERT_EQ(pr.pruned, (std::vector<std::size_t>{2}));
  const auto path = std::filesystem::temp_directory_path() / "tvl_ckpt_test.bin";
  save_checkpoint(pr.params, path);
  const NetworkParams back = load_checkpoint(path);
  EXPECT_TRUE(bit_equal(back, pr.params));
  EXPECT_EQ(back.tau_ids, (std::vector<std::size_t>{0, 1, 3, 4}));
  EXPECT_EQ(back.arch.depth, 5u);
}

TEST(Checkpoint, RejectsCorruptInput) {
  SeededRng rng(3);
  const auto bytes = encode_checkpoint(testing::random_params(rng, ArchKind::ResNet, 3, 2, 2, 2));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), FormatError);
  auto bad_version = bytes;
  bad_version[8] = 99;
  EXPECT_THROW(decode_checkpoint(bad_version), FormatError);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode_checkpoint(truncated), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_checkpoint(trailing), FormatError);
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt.bin"), std::runtime_error);
}

TEST(Checkpoint, HeaderLayout) {
  SeededRng rng(4);
  const auto bytes = encode_checkpoint(testing::random_params(rng, ArchKind::Fractional, 3, 2, 2, 2));
  EXPECT_EQ(std::memcmp(bytes.data(), "TVLCKPT\0", 8), 0);
  EXPECT_EQ(bytes[8], kCheckpointVersion);
  EXPECT_EQ(bytes[12], 1);  // fractional
}

}  // namespace
}  // namespace tvl
