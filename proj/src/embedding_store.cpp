#include "nwqm/embedding_store.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "nwqm/error.hpp"

namespace nwqm {

namespace {

class ByteWriter {
 public:
  explicit ByteWriter(std::ostream& out) : out_(out) {}

  void bytes(const void* data, std::size_t n) { out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n)); }

  template <typename T>
  void le(T value) {
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
    bytes(buf, sizeof(T));
  }

  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }

  void header(std::uint16_t version, std::uint32_t dim, std::uint64_t count) {
    bytes(kStoreMagic, 4);
    le(version);
    le(kDtypeFloat32);
    le(dim);
    le(count);
  }

 private:
  std::ostream& out_;
};

class ByteReader {
 public:
  ByteReader(std::istream& in, std::string_view source) : in_(in), source_(source) {}

  void bytes(void* data, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError(source_ + ": truncated while reading " + what + " at byte " + std::to_string(offset_));
    }
    offset_ += n;
  }

  template <typename T>
  T le(const char* what) {
    unsigned char buf[sizeof(T)];
    bytes(buf, sizeof(T), what);
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(static_cast<T>(buf[i]) << (8 * i));
    return value;
  }

  float f32(const char* what) { return std::bit_cast<float>(le<std::uint32_t>(what)); }

  struct Header {
    std::uint16_t version;
    std::uint32_t dim;
    std::uint64_t count;
  };

  Header header(std::uint16_t expected_version) {
    char magic[4];
    bytes(magic, 4, "magic");
    if (std::memcmp(magic, kStoreMagic, 4) != 0) throw FormatError(source_ + ": bad magic (not an NWQM file)");
    Header h{};
    h.version = le<std::uint16_t>("version");
    if (h.version != expected_version) {
      throw FormatError(source_ + ": unsupported version " + std::to_string(h.version) + " (expected " +
                        std::to_string(expected_version) + ")");
    }
    const auto dtype = le<std::uint8_t>("dtype");
    if (dtype != kDtypeFloat32) throw FormatError(source_ + ": unsupported dtype " + std::to_string(dtype));
    h.dim = le<std::uint32_t>("dim");
    h.count = le<std::uint64_t>("count");
    return h;
  }

  std::string id(const char* what) {
    const auto len = le<std::uint16_t>(what);
    std::string s(len, '\0');
    if (len > 0) bytes(s.data(), len, what);
    return s;
  }

  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof()) {
      throw FormatError(source_ + ": trailing bytes after last record at byte " + std::to_string(offset_));
    }
  }

  const std::string& source() const { return source_; }

 private:
  std::istream& in_;
  std::string source_;
  std::uint64_t offset_ = 0;
};

void check_id_length(std::string_view id) {
  if (id.size() > std::numeric_limits<std::uint16_t>::max()) throw Error("record id longer than 65535 bytes");
}

}  // namespace

EmbeddingStore EmbeddingStore::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError(path.string());
  return read(in, path.string());
}

EmbeddingStore EmbeddingStore::read(std::istream& in, std::string_view source) {
  ByteReader reader(in, source);
  const auto header = reader.header(kStoreVersion);
  if (header.dim == 0 || header.dim > (1u << 24)) {
    throw FormatError(reader.source() + ": implausible dim " + std::to_string(header.dim));
  }
  EmbeddingStore store(header.dim);
  std::vector<float> row(header.dim);
  for (std::uint64_t r = 0; r < header.count; ++r) {
    std::string id = reader.id("record id");
    for (auto& v : row) v = reader.f32("record vector");
    if (store.index_.contains(id)) throw FormatError(reader.source() + ": duplicate record id '" + id + "'");
    store.put(std::move(id), row);
  }
  reader.expect_end();
  return store;
}

void EmbeddingStore::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write(out);
  if (!out) throw Error("write failed: " + path.string());
}

void EmbeddingStore::write(std::ostream& out) const {
  ByteWriter w(out);
  w.header(kStoreVersion, dim_, records_.size());
  for (const auto& [id, vec] : records_) {
    w.le(static_cast<std::uint16_t>(id.size()));
    w.bytes(id.data(), id.size());
    for (float v : vec) w.f32(v);
  }
}

void EmbeddingStore::put(std::string id, std::span<const float> vector) {
  check_id_length(id);
  if (vector.size() != dim_) {
    throw DimensionError("record '" + id + "' has " + std::to_string(vector.size()) + " values, store dim is " +
                         std::to_string(dim_));
  }
  if (index_.contains(id)) throw Error("duplicate record id '" + id + "'");
  index_.emplace(id, records_.size());
  records_.emplace_back(std::move(id), std::vector<float>(vector.begin(), vector.end()));
}

const std::vector<float>* EmbeddingStore::find(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &records_[it->second].second;
}

std::string section_key(std::int64_t page_id, std::size_t section_index) {
  return std::to_string(page_id) + "#" + std::to_string(section_index);
}

std::string sentence_key(std::int64_t page_id, std::size_t sentence_index) {
  return std::to_string(page_id) + "#" + std::to_string(sentence_index);
}

std::string page_key(std::int64_t page_id) { return std::to_string(page_id); }

void write_tensor_file(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  ByteWriter w(out);
  w.header(kTensorFileVersion, 0, tensors.size());
  for (const auto& t : tensors) {
    check_id_length(t.name);
    if (t.values.size() != static_cast<std::size_t>(t.rows) * t.cols) {
      throw DimensionError("tensor " + t.name + " shape does not match its values");
    }
    w.le(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.le(t.rows);
    w.le(t.cols);
    for (float v : t.values) w.f32(v);
  }
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<NamedTensor> read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError(path.string());
  ByteReader reader(in, path.string());
  const auto header = reader.header(kTensorFileVersion);
  std::vector<NamedTensor> tensors;
  for (std::uint64_t r = 0; r < header.count; ++r) {
    NamedTensor t;
    t.name = reader.id("tensor name");
    t.rows = reader.le<std::uint32_t>("tensor rows");
    t.cols = reader.le<std::uint32_t>("tensor cols");
    t.values.resize(static_cast<std::size_t>(t.rows) * t.cols);
    for (auto& v : t.values) v = reader.f32("tensor values");
    tensors.push_back(std::move(t));
  }
  reader.expect_end();
  return tensors;
}

}  // namespace nwqm
