#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nwqm/autodiff.hpp"
#include "nwqm/embedding_store.hpp"
#include "nwqm/wikitext.hpp"

namespace nwqm {

inline constexpr int kSentenceDim = 512;
inline constexpr int kTalkDim = 200;
inline constexpr int kImageDim = 2048;

enum class EncoderMode { kToy, kLookup };

/// Token -> row of the toy encoder's embedding table. Row 0 is the unknown token,
/// followed by the special tokens, then corpus tokens by descending frequency.
class Vocabulary {
 public:
  static constexpr std::int32_t kUnknown = 0;

  Vocabulary();

  /// Builds from token streams; natural tokens are lower-cased.
  static Vocabulary build(const std::vector<std::vector<std::string>>& documents, std::size_t min_count = 1,
                          std::size_t max_size = 50000);

  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::int32_t id(std::string_view token) const;
  std::vector<std::int32_t> ids(std::span<const std::string> tokens) const;
  std::size_t size() const { return tokens_.size(); }
  const std::string& token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }

 private:
  void add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

/// Mean-pooled token embeddings followed by a linear projection to the section dimension.
struct ToyEncoderParams {
  TensorId embedding;    // vocab x embed_dim
  TensorId proj_weight;  // section_dim x embed_dim
  TensorId proj_bias;    // section_dim
};

ToyEncoderParams register_toy_encoder(ParameterSet& params, std::size_t vocab_size, int embed_dim, int section_dim);

Var encode_section(Tape& tape, const ToyEncoderParams& encoder, std::span<const std::int32_t> token_ids);

/// Stored vector for (page_id, section_index); a missing key is an error naming it.
Vector lookup_section(const EmbeddingStore& store, std::int64_t page_id, std::size_t section_index);

struct TalkEncoderParams {
  TensorId weight;  // talk_dim x sentence_dim
  TensorId bias;    // talk_dim
};

TalkEncoderParams register_talk_encoder(ParameterSet& params, int sentence_dim, int talk_dim);

/// Arithmetic mean over sentences; zero vector when there are none.
Vector mean_sentence_embedding(std::span<const Vector> sentence_embeddings, int sentence_dim);

Var encode_talk(Tape& tape, const TalkEncoderParams& encoder, const Vector& mean_sentence);

struct TalkVector {
  Vector value;
  bool empty = false;
};

TalkVector encode_talk(const ParameterSet& params, const TalkEncoderParams& encoder,
                       std::span<const Vector> sentence_embeddings);

struct ImageVector {
  Vector value;
  bool present = false;
};

/// The page's image embedding, or a zero vector flagged absent.
ImageVector load_image_embedding(std::int64_t page_id, const EmbeddingStore& store, int dim = kImageDim);

/// Deterministic stand-in for a pretrained sentence encoder: signed feature
/// hashing of lower-cased tokens, L2-normalised.
class HashingSentenceEmbedder {
 public:
  explicit HashingSentenceEmbedder(int dim = kSentenceDim) : dim_(dim) {}
  Vector embed(std::string_view sentence) const;
  int dim() const { return dim_; }

 private:
  int dim_;
};

}  // namespace nwqm
