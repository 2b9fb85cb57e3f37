#include "exitrack/numerics/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

namespace exitrack::num {

namespace {

constexpr char kMagic[4] = {'D', 'Y', 'T', 'X'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void text(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw ParseError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string text() {
    const auto n = u32();
    need(n);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_), bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t position() const { return pos_; }
  std::uint8_t byte() {
    need(1);
    return bytes_[pos_++];
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void Checkpoint::add(std::string name, Shape shape, std::vector<float> values) {
  if (find(name)) throw ContractError("duplicate checkpoint entry '" + name + "'");
  if (numel(shape) != values.size()) throw DimensionError("checkpoint entry '" + name + "' size mismatch");
  entries_.push_back({std::move(name), std::move(shape), std::move(values)});
}

const Checkpoint::Entry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  Writer w;
  for (char c : kMagic) w.bytes.push_back(static_cast<std::uint8_t>(c));
  w.u32(kVersion);
  w.text(metadata);
  w.u32(static_cast<std::uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    w.text(e.name);
    w.u32(static_cast<std::uint32_t>(e.shape.size()));
    for (auto extent : e.shape) w.u64(extent);
    for (float v : e.values) w.f32(v);
  }
  return std::move(w.bytes);
}

Checkpoint Checkpoint::deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  for (char c : kMagic)
    if (r.byte() != static_cast<std::uint8_t>(c)) throw ParseError("not a checkpoint: bad magic bytes");
  const auto version = r.u32();
  if (version != kVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.metadata = r.text();
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.name = r.text();
    const auto rank = r.u32();
    for (std::uint32_t a = 0; a < rank; ++a) e.shape.push_back(static_cast<std::size_t>(r.u64()));
    const auto n = numel(e.shape);
    e.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) e.values[k] = r.f32();
    ckpt.entries_.push_back(std::move(e));
  }
  if (!r.done()) throw ParseError("trailing bytes after checkpoint entries at byte " + std::to_string(r.position()));
  return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace exitrack::num
