#include "hdp/tnsr.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "hdp/error.hpp"

namespace hdp {

namespace {

static_assert(std::endian::native == std::endian::little,
              "TNSR encoding assumes a little-endian host");

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  void read(void* dst, std::size_t len, const char* what) {
    need(len, what);
    std::memcpy(dst, bytes_.data() + pos_, len);
    pos_ += len;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t len, const char* what) {
    if (bytes_.size() - pos_ < len) {
      throw FormatError(std::string("TNSR truncated while reading ") + what + " at byte " +
                        std::to_string(pos_));
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t TnsrEntry::numel() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void TnsrFile::add(TnsrEntry entry) {
  if (entry.name.empty() || entry.name.size() > 0xffff) {
    throw ParamError("TNSR entry name must be 1..65535 bytes");
  }
  if (entry.dims.size() > 0xff) throw ParamError("TNSR entry '" + entry.name + "' has too many dims");
  if (entry.numel() != entry.data.size()) {
    throw ShapeError("TNSR entry '" + entry.name + "' payload length does not match dims");
  }
  if (contains(entry.name)) throw ParamError("duplicate TNSR entry '" + entry.name + "'");
  entries_.push_back(std::move(entry));
}

void TnsrFile::add(const std::string& name, const Tensor& t) {
  const Shape& s = t.shape();
  add(TnsrEntry{name,
                {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
                 static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)},
                t.vec()});
}

void TnsrFile::add(const std::string& name, std::vector<std::uint32_t> dims,
                   std::vector<float> data) {
  add(TnsrEntry{name, std::move(dims), std::move(data)});
}

bool TnsrFile::contains(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

const TnsrEntry& TnsrFile::get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e;
  }
  throw FormatError("TNSR entry '" + name + "' not found");
}

Tensor TnsrFile::tensor(const std::string& name) const {
  const TnsrEntry& e = get(name);
  if (e.dims.size() > 4) throw ShapeError("TNSR entry '" + name + "' has more than 4 dims");
  std::size_t d[4] = {1, 1, 1, 1};
  const std::size_t off = 4 - e.dims.size();
  for (std::size_t i = 0; i < e.dims.size(); ++i) d[off + i] = e.dims[i];
  return Tensor(Shape{d[0], d[1], d[2], d[3]}, e.data);
}

std::vector<std::uint8_t> TnsrFile::encode() const {
  std::vector<std::uint8_t> out = {'T', 'N', 'S', 'R'};
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(e.dims.size()));
    for (auto d : e.dims) put<std::uint32_t>(out, d);
    put<std::uint8_t>(out, 0);
    const auto* p = reinterpret_cast<const std::uint8_t*>(e.data.data());
    out.insert(out.end(), p, p + e.data.size() * sizeof(float));
  }
  return out;
}

TnsrFile TnsrFile::decode(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[4];
  r.read(magic, 4, "magic");
  if (std::memcmp(magic, "TNSR", 4) != 0) throw FormatError("not a TNSR file (bad magic)");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kVersion) {
    throw FormatError("unsupported TNSR version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>("entry count");
  TnsrFile f;
  for (std::uint32_t i = 0; i < count; ++i) {
    TnsrEntry e;
    const auto len = r.get<std::uint16_t>("name length");
    e.name.resize(len);
    r.read(e.name.data(), len, "name");
    const auto ndim = r.get<std::uint8_t>("ndim");
    for (std::uint8_t k = 0; k < ndim; ++k) e.dims.push_back(r.get<std::uint32_t>("dims"));
    const auto dtype = r.get<std::uint8_t>("dtype");
    if (dtype != 0) {
      throw FormatError("TNSR entry '" + e.name + "' has unsupported dtype " +
                        std::to_string(dtype));
    }
    e.data.resize(e.numel());
    r.read(e.data.data(), e.data.size() * sizeof(float), "payload");
    f.add(std::move(e));
  }
  if (!r.done()) throw FormatError("trailing bytes after last TNSR entry");
  return f;
}

void TnsrFile::save(const std::filesystem::path& path) const {
  const auto bytes = encode();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

TnsrFile TnsrFile::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace hdp
