#include "anogen/agck.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "anogen/errors.hpp"

namespace anogen {

std::optional<std::string> AgckFile::get(const std::string& key) const {
  for (const auto& [k, v] : config) {
    if (k == key) return v;
  }
  return std::nullopt;
}

const std::string& AgckFile::require(const std::string& key) const {
  for (const auto& [k, v] : config) {
    if (k == key) return v;
  }
  throw FormatError("config." + key, "missing key");
}

const nn::Tensor<float>* AgckFile::find_tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void bytes(const std::string& s) { out_.insert(out_.end(), s.begin(), s.end()); }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}

  std::uint8_t u8(const std::string& field) { return static_cast<std::uint8_t>(le(1, field)); }
  std::uint16_t u16(const std::string& field) { return static_cast<std::uint16_t>(le(2, field)); }
  std::uint32_t u32(const std::string& field) { return static_cast<std::uint32_t>(le(4, field)); }
  std::string bytes(std::size_t n, const std::string& field) {
    need(n, field);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n, const std::string& field) const {
    if (b_.size() - pos_ < n) {
      throw FormatError(field, "truncated file (need " + std::to_string(n) + " bytes at offset " +
                                   std::to_string(pos_) + ", file has " + std::to_string(b_.size()) + ")");
    }
  }
  std::uint64_t le(int n, const std::string& field) {
    need(static_cast<std::size_t>(n), field);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_agck(const AgckFile& file) {
  Writer w;
  w.bytes("AGCK");
  w.u32(kAgckVersion);
  w.u32(static_cast<std::uint32_t>(file.config.size()));
  for (const auto& [k, v] : file.config) {
    if (k.find('=') != std::string::npos) throw FormatError("config." + k, "key may not contain '='");
    const std::string entry = k + "=" + v;
    w.u32(static_cast<std::uint32_t>(entry.size()));
    w.bytes(entry);
  }
  w.u32(static_cast<std::uint32_t>(file.tensors.size()));
  for (const auto& [name, t] : file.tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) throw FormatError(name, "tensor name too long");
    if (t.rank() > 255) throw FormatError(name, "rank too large");
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
    w.u8(0);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (const auto d : t.dims()) w.u32(static_cast<std::uint32_t>(d));
    for (const float f : t.values()) w.f32(f);
  }
  return w.take();
}

AgckFile decode_agck(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.bytes(4, "magic") != "AGCK") throw FormatError("magic", "not an AGCK file");
  const auto version = r.u32("version");
  if (version != kAgckVersion) {
    throw FormatError("version", "unsupported version " + std::to_string(version));
  }
  AgckFile file;
  const auto n_config = r.u32("config.count");
  for (std::uint32_t i = 0; i < n_config; ++i) {
    const std::string field = "config[" + std::to_string(i) + "]";
    const auto len = r.u32(field + ".length");
    const std::string entry = r.bytes(len, field);
    const auto eq = entry.find('=');
    if (eq == std::string::npos) throw FormatError(field, "entry without '='");
    file.config.emplace_back(entry.substr(0, eq), entry.substr(eq + 1));
  }
  const auto n_tensors = r.u32("tensors.count");
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string field = "tensor[" + std::to_string(i) + "]";
    const auto name_len = r.u16(field + ".name_length");
    const std::string name = r.bytes(name_len, field + ".name");
    field = "tensor '" + name + "'";
    const auto dtype = r.u8(field + ".dtype");
    if (dtype != 0) throw FormatError(field + ".dtype", "unsupported dtype " + std::to_string(dtype));
    const auto rank = r.u8(field + ".rank");
    nn::Shape dims(rank);
    std::size_t count = 1;
    for (auto& d : dims) {
      d = r.u32(field + ".dims");
      if (d == 0) throw FormatError(field + ".dims", "zero dimension");
      count *= d;
    }
    if (count > bytes.size()) throw FormatError(field + ".payload", "truncated file (payload larger than file)");
    std::vector<float> data(count);
    for (auto& f : data) f = std::bit_cast<float>(r.u32(field + ".payload"));
    file.tensors.emplace_back(name, nn::Tensor<float>(std::move(dims), std::move(data)));
  }
  if (!r.at_end()) throw FormatError("trailer", "unexpected bytes after tensor table");
  return file;
}

void write_agck(const AgckFile& file, const std::filesystem::path& path) {
  const auto bytes = encode_agck(file);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

AgckFile read_agck(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_agck(bytes);
}

}  // namespace anogen
