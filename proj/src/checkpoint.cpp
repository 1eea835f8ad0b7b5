#include "tvl/checkpoint.hpp"

#include <fmt/format.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "tvl/data.hpp"

namespace tvl {
namespace {

constexpr char kMagic[8] = {'T', 'V', 'L', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::span<const std::uint8_t> bytes(std::size_t n) {
    need(n);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return bytes(1)[0]; }
  std::uint32_t u32() {
    auto b = bytes(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{b[i]} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    auto b = bytes(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) {
      throw FormatError(fmt::format("checkpoint truncated at byte {}", pos_));
    }
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const NetworkParams& params) {
  params.validate();
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  const auto& a = params.arch;
  w.u8(a.kind == ArchKind::ResNet ? 0 : 1);
  w.u8(0);  // ReLU
  w.u64(a.depth);
  w.u64(a.input_width);
  w.u64(a.hidden_width);
  w.u64(a.output_width);
  w.f64(params.gamma);
  w.u64(params.tau.size());
  for (std::size_t k = 0; k < params.tau.size(); ++k) {
    w.u64(params.tau_ids[k]);
    w.f64(params.tau[k]);
  }
  for (std::size_t l = 0; l < a.depth; ++l) {
    for (double v : params.weights[l].data()) w.f64(v);
    if (l < params.biases.size())
      for (double v : params.biases[l]) w.f64(v);
  }
  return w.take();
}

NetworkParams decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (std::memcmp(r.bytes(sizeof kMagic).data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError("not a checkpoint file (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(
        fmt::format("checkpoint version {} unsupported (expected {})", version, kCheckpointVersion));
  }
  NetworkParams p;
  const std::uint8_t kind = r.u8();
  if (kind > 1) throw FormatError(fmt::format("unknown architecture tag {}", kind));
  p.arch.kind = kind == 0 ? ArchKind::ResNet : ArchKind::Fractional;
  if (r.u8() != 0) throw FormatError("unknown activation tag");
  p.arch.depth = r.u64();
  p.arch.input_width = r.u64();
  p.arch.hidden_width = r.u64();
  p.arch.output_width = r.u64();
  p.arch.validate();
  p.gamma = r.f64();
  const std::uint64_t steps = r.u64();
  if (steps != p.arch.steps()) {
    throw FormatError(fmt::format("checkpoint has {} step sizes for depth {}", steps, p.arch.depth));
  }
  for (std::uint64_t k = 0; k < steps; ++k) {
    p.tau_ids.push_back(r.u64());
    p.tau.push_back(r.f64());
  }
  for (std::size_t l = 0; l < p.arch.depth; ++l) {
    Matrix w(p.arch.width(l + 1), p.arch.width(l));
    for (double& v : w.data()) v = r.f64();
    p.weights.push_back(std::move(w));
    if (l + 1 < p.arch.depth) {
      Vector b(p.arch.width(l + 1));
      for (double& v : b) v = r.f64();
      p.biases.push_back(std::move(b));
    }
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint payload");
  p.validate();
  return p;
}

void save_checkpoint(const NetworkParams& params, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error(fmt::format("cannot write checkpoint {}", path.string()));
}

NetworkParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot open checkpoint {}", path.string()));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace tvl
