#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace nwqm {

// Binary layout shared with the embedding exporter (all integers little-endian):
//   "NWQM" | version u16 | dtype u8 | dim u32 | count u64
//   count x ( id_len u16 | id bytes (UTF-8) | dim x f32 )
// Tensor files reuse the header with kTensorFileVersion and dim 0; each record is
//   name_len u16 | name | rows u32 | cols u32 | rows*cols x f32 (row-major)

inline constexpr char kStoreMagic[4] = {'N', 'W', 'Q', 'M'};
inline constexpr std::uint16_t kStoreVersion = 1;
inline constexpr std::uint16_t kTensorFileVersion = 2;
inline constexpr std::uint8_t kDtypeFloat32 = 0;

/// In-memory id -> vector table. Lookups are const and safe from many threads.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(std::uint32_t dim) : dim_(dim) {}

  static EmbeddingStore read(const std::filesystem::path& path);
  static EmbeddingStore read(std::istream& in, std::string_view source = "<stream>");

  void write(const std::filesystem::path& path) const;
  void write(std::ostream& out) const;

  /// Adds a record; duplicate ids and wrong dimensions are errors.
  void put(std::string id, std::span<const float> vector);

  const std::vector<float>* find(std::string_view id) const;

  std::uint32_t dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }

  /// Records in file order.
  const std::vector<std::pair<std::string, std::vector<float>>>& records() const { return records_; }

 private:
  std::uint32_t dim_;
  std::vector<std::pair<std::string, std::vector<float>>> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

std::string section_key(std::int64_t page_id, std::size_t section_index);
std::string sentence_key(std::int64_t page_id, std::size_t sentence_index);
std::string page_key(std::int64_t page_id);

struct NamedTensor {
  std::string name;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<float> values;  // row-major
};

void write_tensor_file(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensor_file(const std::filesystem::path& path);

}  // namespace nwqm
