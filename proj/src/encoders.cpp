#include "nwqm/encoders.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "nwqm/error.hpp"

namespace nwqm {

namespace {

std::string normalise(std::string_view token) {
  if (default_special_tokens().contains(token)) return std::string(token);
  std::string out(token);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  add("<unk>");
  for (auto& t : default_special_tokens().all()) add(t);
}

void Vocabulary::add(std::string token) {
  if (index_.contains(token)) return;
  index_.emplace(token, static_cast<std::int32_t>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& documents, std::size_t min_count,
                             std::size_t max_size) {
  std::map<std::string, std::size_t> counts;
  for (const auto& doc : documents) {
    for (const auto& token : doc) ++counts[normalise(token)];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab;
  for (auto& [token, count] : ranked) {
    if (vocab.size() >= max_size) break;
    if (count >= min_count) vocab.add(token);
  }
  return vocab;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError(path.string());
  Vocabulary vocab;
  vocab.tokens_.clear();
  vocab.index_.clear();
  std::string line;
  while (std::getline(in, line)) vocab.add(line);
  if (vocab.tokens_.empty() || vocab.tokens_.front() != "<unk>") {
    throw FormatError(path.string() + ": vocabulary must start with <unk>");
  }
  return vocab;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  for (const auto& t : tokens_) out << t << '\n';
}

std::int32_t Vocabulary::id(std::string_view token) const {
  const auto it = index_.find(normalise(token));
  return it == index_.end() ? kUnknown : it->second;
}

std::vector<std::int32_t> Vocabulary::ids(std::span<const std::string> tokens) const {
  std::vector<std::int32_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

// ---------------------------------------------------------------------------
// Section encoder

ToyEncoderParams register_toy_encoder(ParameterSet& params, std::size_t vocab_size, int embed_dim, int section_dim) {
  ToyEncoderParams p;
  p.embedding = params.add("encoder.embedding", static_cast<Eigen::Index>(vocab_size), embed_dim);
  p.proj_weight = params.add("encoder.proj.weight", section_dim, embed_dim);
  p.proj_bias = params.add("encoder.proj.bias", section_dim);
  return p;
}

Var encode_section(Tape& tape, const ToyEncoderParams& encoder, std::span<const std::int32_t> token_ids) {
  return tape.affine(encoder.proj_weight, encoder.proj_bias, tape.embedding_mean(encoder.embedding, token_ids));
}

Vector lookup_section(const EmbeddingStore& store, std::int64_t page_id, std::size_t section_index) {
  const std::string key = section_key(page_id, section_index);
  const auto* row = store.find(key);
  if (row == nullptr) throw Error("section store has no record for key '" + key + "'");
  return Eigen::Map<const Eigen::VectorXf>(row->data(), static_cast<Eigen::Index>(row->size())).cast<double>();
}

// ---------------------------------------------------------------------------
// Talk encoder

TalkEncoderParams register_talk_encoder(ParameterSet& params, int sentence_dim, int talk_dim) {
  return TalkEncoderParams{params.add("talk.weight", talk_dim, sentence_dim), params.add("talk.bias", talk_dim)};
}

Vector mean_sentence_embedding(std::span<const Vector> sentence_embeddings, int sentence_dim) {
  Vector mean = Vector::Zero(sentence_dim);
  for (const auto& e : sentence_embeddings) {
    if (e.size() != sentence_dim) {
      throw DimensionError("sentence embedding has " + std::to_string(e.size()) + " values, expected " +
                           std::to_string(sentence_dim));
    }
    mean += e;
  }
  if (!sentence_embeddings.empty()) mean /= static_cast<double>(sentence_embeddings.size());
  return mean;
}

Var encode_talk(Tape& tape, const TalkEncoderParams& encoder, const Vector& mean_sentence) {
  return tape.affine(encoder.weight, encoder.bias, tape.constant(mean_sentence));
}

TalkVector encode_talk(const ParameterSet& params, const TalkEncoderParams& encoder,
                       std::span<const Vector> sentence_embeddings) {
  const auto dim = static_cast<int>(params[encoder.weight].value.cols());
  Tape tape(params);
  const Var out = encode_talk(tape, encoder, mean_sentence_embedding(sentence_embeddings, dim));
  return TalkVector{tape.value(out), sentence_embeddings.empty()};
}

// ---------------------------------------------------------------------------
// Image vectors

ImageVector load_image_embedding(std::int64_t page_id, const EmbeddingStore& store, int dim) {
  if (store.dim() != static_cast<std::uint32_t>(dim)) {
    throw FormatError("image store has dim " + std::to_string(store.dim()) + ", expected " + std::to_string(dim));
  }
  const auto* row = store.find(page_key(page_id));
  if (row == nullptr) return ImageVector{Vector::Zero(dim), false};
  return ImageVector{Eigen::Map<const Eigen::VectorXf>(row->data(), dim).cast<double>(), true};
}

// ---------------------------------------------------------------------------
// Hashing sentence embedder

Vector HashingSentenceEmbedder::embed(std::string_view sentence) const {
  Vector v = Vector::Zero(dim_);
  for (const auto& token : tokenize(sentence)) {
    const std::uint64_t h = fnv1a(normalise(token));
    const auto slot = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dim_));
    v(slot) += (h >> 63) != 0 ? -1.0 : 1.0;
  }
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

}  // namespace nwqm
