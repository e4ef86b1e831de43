#include "bpseg/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

namespace bpseg {

namespace {

constexpr char kMagic[8] = {'B', 'P', 'S', 'E', 'G', 'C', 'K', 'P'};

class Writer {
 public:
  Bytes out;

  template <typename U>
  void put(U v) {
    static_assert(std::is_trivially_copyable_v<U>);
    std::uint8_t raw[sizeof(U)];
    std::memcpy(raw, &v, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(U));
    out.insert(out.end(), raw, raw + sizeof(U));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
};

class Reader {
 public:
  explicit Reader(const Bytes& b) : data_(b) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    std::uint8_t raw[sizeof(U)];
    std::memcpy(raw, data_.data() + pos_, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(U));
    pos_ += sizeof(U);
    U v;
    std::memcpy(&v, raw, sizeof(U));
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) fail(ErrorCode::kParseError, "checkpoint truncated");
  }
  const Bytes& data_;
  std::size_t pos_ = 0;
};

}  // namespace

Bytes encode_checkpoint(const ModelParams<float>& params) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(kCheckpointVersion);
  const auto& c = params.config;
  w.put<std::int32_t>(c.base_channels);
  w.put<std::int32_t>(c.depth);
  w.put<std::int32_t>(c.in_channels);
  w.put<std::int32_t>(c.out_channels);
  w.put<std::int32_t>(c.attention_reduction);
  w.put<std::uint64_t>(c.seed);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.entries.size()));
  for (const auto& p : params.entries) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    w.put<std::uint8_t>(p.trainable ? 1 : 0);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.shape.size()));
    for (int d : p.shape) w.put<std::int32_t>(d);
    for (float v : p.value) w.put<float>(v);
  }
  return std::move(w.out);
}

ModelParams<float> decode_checkpoint(const Bytes& bytes) {
  Reader r(bytes);
  if (r.str(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    fail(ErrorCode::kParseError, "not a checkpoint file");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    fail(ErrorCode::kParseError, "unsupported checkpoint version " + std::to_string(version));
  }
  NetworkConfig cfg;
  cfg.base_channels = r.get<std::int32_t>();
  cfg.depth = r.get<std::int32_t>();
  cfg.in_channels = r.get<std::int32_t>();
  cfg.out_channels = r.get<std::int32_t>();
  cfg.attention_reduction = r.get<std::int32_t>();
  cfg.seed = r.get<std::uint64_t>();
  try {
    cfg.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kParseError, std::string("checkpoint configuration invalid: ") + e.what());
  }
  ModelParams<float> params = build_model<float>(cfg);
  const auto count = r.get<std::uint32_t>();
  if (count != params.entries.size()) fail(ErrorCode::kParseError, "checkpoint tensor count mismatch");
  for (auto& p : params.entries) {
    const auto len = r.get<std::uint32_t>();
    const std::string name = r.str(len);
    if (name != p.name) fail(ErrorCode::kParseError, "expected tensor " + p.name + ", found " + name);
    const bool trainable = r.get<std::uint8_t>() != 0;
    const auto rank = r.get<std::uint32_t>();
    std::vector<int> shape(rank);
    for (auto& d : shape) d = r.get<std::int32_t>();
    if (shape != p.shape || trainable != p.trainable) fail(ErrorCode::kParseError, "tensor " + name + " layout mismatch");
    for (auto& v : p.value) v = r.get<float>();
  }
  if (!r.done()) fail(ErrorCode::kParseError, "trailing bytes after checkpoint");
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams<float>& params) {
  write_file(path, encode_checkpoint(params));
}

ModelParams<float> load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace bpseg
