#include "vld/tensor/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace vld {

namespace {

constexpr char kMagic[4] = {'V', 'L', 'D', 'C'};

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(in_[pos_] | (in_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) {
      throw CorruptionError("checkpoint truncated at byte " + std::to_string(pos_) + " (need " + std::to_string(n) +
                            " more)");
    }
  }

  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u8(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > 0xFFFF) throw ConfigError("tensor name too long: " + t.name.substr(0, 32) + "...");
    if (t.value.rank() > 0xFF) throw ConfigError("tensor '" + t.name + "' has too many dimensions");
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.u8(static_cast<std::uint8_t>(t.value.rank()));
    for (auto d : t.value.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.value.data()) w.f32(v);
  }
  return w.take();
}

std::vector<NamedTensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  const auto magic = r.str(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw CorruptionError("bad checkpoint magic");
  const auto version = r.u8();
  if (version != kCheckpointVersion) {
    throw CorruptionError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = r.u32();
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.str(r.u16());
    const auto rank = r.u8();
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = r.u32();
      if (d == 0) throw CorruptionError("tensor '" + t.name + "' has a zero dimension");
      n *= d;
    }
    if (n > r.remaining() / 4) throw CorruptionError("tensor '" + t.name + "' exceeds checkpoint size");
    std::vector<float> data(n);
    for (auto& v : data) v = r.f32();
    t.value = Tensor<float>(std::move(shape), std::move(data));
    out.push_back(std::move(t));
  }
  if (!r.done()) throw CorruptionError("trailing bytes after last tensor");
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  const auto bytes = encode_checkpoint(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

std::vector<NamedTensor> to_named_tensors(const ParameterSet<float>& params) {
  std::vector<NamedTensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back({p.name, p.value});
  return out;
}

void assign_named_tensors(ParameterSet<float>& params, const std::vector<NamedTensor>& tensors) {
  if (tensors.size() != params.size()) {
    throw SchemaError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, model expects " +
                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& p = params[i];
    if (tensors[i].name != p.name || tensors[i].value.shape() != p.value.shape()) {
      throw SchemaError("checkpoint tensor '" + tensors[i].name + "' " + shape_string(tensors[i].value.shape()) +
                        " does not match model parameter '" + p.name + "' " + shape_string(p.value.shape()));
    }
    p.value = tensors[i].value;
  }
}

}  // namespace vld
