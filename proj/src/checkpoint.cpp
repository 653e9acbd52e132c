#include "foss/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <unordered_map>

#include "foss/errors.hpp"

namespace foss::ckpt {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  template <typename T>
  void put(T v) {
    bytes(&v, sizeof v);
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : buf_(b) {}
  void bytes(void* p, std::size_t n, const char* what) {
    if (buf_.size() - pos_ < n) {
      throw CheckpointTruncatedError("checkpoint truncated while reading " + std::string(what) + " at byte " +
                                     std::to_string(pos_));
    }
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T get(const char* what) {
    T v;
    bytes(&v, sizeof v, what);
    return v;
  }
  bool done() const { return pos_ == buf_.size(); }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode(const Checkpoint& c) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.put(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& t : c.tensors) {
    if (t.name.size() > 0xFFFF) throw CheckpointError("tensor name too long: " + t.name.substr(0, 32));
    if (t.shape.size() > 0xFF) throw CheckpointError("tensor rank too large: " + t.name);
    if (t.values.size() != numel(t.shape)) throw CheckpointError("value count does not match shape: " + t.name);
    w.put(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.put(static_cast<std::uint8_t>(t.dtype));
    w.put(static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) w.put(static_cast<std::uint32_t>(d));
    for (double v : t.values) {
      if (t.dtype == DType::f32) {
        w.put(static_cast<float>(v));
      } else {
        w.put(v);
      }
    }
  }
  const std::string meta = c.metadata.dump();
  w.put(static_cast<std::uint32_t>(meta.size()));
  w.bytes(meta.data(), meta.size());
  return std::move(w.out);
}

Checkpoint decode(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[sizeof kMagic];
  // A short file that is a prefix of the magic is truncated, not foreign.
  const std::size_t head = std::min(bytes.size(), sizeof kMagic);
  if (std::memcmp(bytes.data(), kMagic, head) != 0) {
    throw CheckpointMagicError("not a checkpoint: magic bytes do not read FOSS1");
  }
  r.bytes(magic, sizeof magic, "magic");
  Checkpoint c;
  const auto count = r.get<std::uint32_t>("tensor count");
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto len = r.get<std::uint16_t>("name length");
    t.name.resize(len);
    r.bytes(t.name.data(), len, "name");
    if (!seen.insert(t.name).second) throw CheckpointDuplicateError("duplicate tensor name '" + t.name + "'");
    const auto dtype = r.get<std::uint8_t>("dtype");
    if (dtype > 1) throw CheckpointError("unknown dtype code " + std::to_string(dtype) + " for '" + t.name + "'");
    t.dtype = static_cast<DType>(dtype);
    const auto rank = r.get<std::uint8_t>("rank");
    for (std::uint8_t d = 0; d < rank; ++d) t.shape.push_back(r.get<std::uint32_t>("dims"));
    const std::size_t n = numel(t.shape);
    const std::size_t width = t.dtype == DType::f32 ? sizeof(float) : sizeof(double);
    if (r.remaining() / width < n) throw CheckpointTruncatedError("checkpoint truncated in values of '" + t.name + "'");
    t.values.resize(n);
    for (auto& v : t.values) {
      v = t.dtype == DType::f32 ? static_cast<double>(r.get<float>("values")) : r.get<double>("values");
    }
    c.tensors.push_back(std::move(t));
  }
  const auto meta_len = r.get<std::uint32_t>("metadata length");
  std::string meta(meta_len, '\0');
  r.bytes(meta.data(), meta_len, "metadata");
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint metadata");
  try {
    c.metadata = nlohmann::ordered_json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  return c;
}

void save(const std::string& path, const Checkpoint& c) {
  const auto bytes = encode(c);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  f.flush();
  if (!f) throw IoError("write to '" + path + "' failed");
}

Checkpoint load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode(bytes);
}

Checkpoint capture(const ParameterList& params, nlohmann::ordered_json metadata) {
  Checkpoint c;
  std::set<std::string> seen;
  for (const Parameter* p : params) {
    if (!seen.insert(p->name()).second) throw CheckpointDuplicateError("duplicate parameter name '" + p->name() + "'");
    const auto v = p->value().data();
    c.tensors.push_back({p->name(), p->value().dtype(), p->shape(), {v.begin(), v.end()}});
  }
  c.metadata = std::move(metadata);
  return c;
}

void restore(const Checkpoint& c, const ParameterList& params) {
  std::unordered_map<std::string, const NamedTensor*> by_name;
  for (const auto& t : c.tensors) by_name[t.name] = &t;
  for (Parameter* p : params) {
    const auto it = by_name.find(p->name());
    if (it == by_name.end()) throw CheckpointMissingError("checkpoint has no tensor named '" + p->name() + "'");
    const NamedTensor& t = *it->second;
    if (t.shape != p->shape()) {
      throw CheckpointError("shape mismatch for '" + p->name() + "': checkpoint " + to_string(t.shape) +
                            ", model " + to_string(p->shape()));
    }
    if (t.dtype != p->value().dtype()) throw CheckpointError("dtype mismatch for '" + p->name() + "'");
    p->assign(t.values);
    by_name.erase(it);
  }
  if (!by_name.empty()) {
    throw CheckpointError("checkpoint tensor '" + by_name.begin()->first + "' does not match any model parameter");
  }
}

}  // namespace foss::ckpt
