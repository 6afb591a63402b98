#include "nwqm/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "nwqm/embedding_store.hpp"
#include "nwqm/error.hpp"
#include "nwqm/random.hpp"

namespace nwqm {

using nlohmann::json;

namespace {

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool is_bias(std::string_view name) {
  return ends_with(name, "bias") || name.find(".b_") != std::string_view::npos;
}

void append(std::vector<TensorId>& out, std::initializer_list<TensorId> ids) { out.insert(out.end(), ids); }

void append_head(std::vector<TensorId>& out, const HeadParams& h) {
  append(out, {h.hidden_weight, h.hidden_bias, h.out_weight, h.out_bias});
}

void append_direction(std::vector<TensorId>& out, const GruDirectionParams& d) {
  append(out, {d.w_update, d.u_update, d.b_update, d.w_reset, d.u_reset, d.b_reset, d.w_candidate, d.u_candidate,
               d.b_candidate});
}

json dims_to_json(const ModelDims& d) {
  return json{{"vocab_size", d.vocab_size},     {"embed_dim", d.embed_dim},
              {"section_dim", d.section_dim},   {"gru_hidden", d.gru_hidden},
              {"attention_dim", d.attention_dim}, {"sentence_dim", d.sentence_dim},
              {"talk_dim", d.talk_dim},         {"image_dim", d.image_dim},
              {"image_proj_dim", d.image_proj_dim}, {"hidden_dim", d.hidden_dim}};
}

ModelDims dims_from_json(const json& j) {
  ModelDims d;
  d.vocab_size = j.at("vocab_size").get<std::size_t>();
  d.embed_dim = j.at("embed_dim").get<int>();
  d.section_dim = j.at("section_dim").get<int>();
  d.gru_hidden = j.at("gru_hidden").get<int>();
  d.attention_dim = j.at("attention_dim").get<int>();
  d.sentence_dim = j.at("sentence_dim").get<int>();
  d.talk_dim = j.at("talk_dim").get<int>();
  d.image_dim = j.at("image_dim").get<int>();
  d.image_proj_dim = j.at("image_proj_dim").get<int>();
  d.hidden_dim = j.at("hidden_dim").get<int>();
  return d;
}

}  // namespace

std::string_view to_string(EncoderMode mode) { return mode == EncoderMode::kToy ? "toy" : "lookup"; }

EncoderMode parse_encoder_mode(std::string_view text) {
  if (text == "toy") return EncoderMode::kToy;
  if (text == "lookup") return EncoderMode::kLookup;
  throw ConfigError("unknown encoder mode '" + std::string(text) + "'");
}

void ModelConfig::validate() const {
  const auto positive = [](int v, const char* field) {
    if (v <= 0) throw ConfigError(std::string("model.") + field + " must be positive");
  };
  positive(dims.embed_dim, "embed_dim");
  positive(dims.section_dim, "section_dim");
  positive(dims.gru_hidden, "gru_hidden");
  positive(dims.attention_dim, "attention_dim");
  positive(dims.sentence_dim, "sentence_dim");
  positive(dims.talk_dim, "talk_dim");
  positive(dims.image_dim, "image_dim");
  positive(dims.image_proj_dim, "image_proj_dim");
  positive(dims.hidden_dim, "hidden_dim");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model.dropout must lie in [0, 1)");
  if (!uses_elementwise(fusion.mode)) return;
  const int page = dims.page_dim();
  const auto require = [&](int other, const char* what) {
    if (other != page) {
      throw ConfigError("fusion mode " + std::string(to_string(fusion.mode)) + " needs " + what + " (" +
                        std::to_string(other) + ") equal to the page vector size (" + std::to_string(page) + ")");
    }
  };
  switch (fusion.variant) {
    case Variant::kFull:
      if (fusion.fold == FoldOrder::kTextTalk) require(dims.talk_dim, "model.talk_dim");
      else require(dims.image_proj_dim, "model.image_proj_dim");
      break;
    case Variant::kWithoutImage: require(dims.talk_dim, "model.talk_dim"); break;
    case Variant::kWithoutTalk: require(dims.image_proj_dim, "model.image_proj_dim"); break;
    default: break;
  }
}

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const ModelDims& d = config_.dims;
  const Variant v = config_.fusion.variant;
  if (uses_text(v)) {
    if (config_.encoder == EncoderMode::kToy) {
      encoder_ = register_toy_encoder(params_, d.vocab_size, d.embed_dim, d.section_dim);
      pretrain_head_ = register_head(params_, "pretrain", d.section_dim, d.hidden_dim);
    }
    summarizer_ = register_summarizer(params_, d.section_dim, d.gru_hidden, d.attention_dim);
    summarizer_head_ = register_head(params_, "summarizer", d.page_dim(), d.hidden_dim);
  }
  if (uses_talk(v)) talk_ = register_talk_encoder(params_, d.sentence_dim, d.talk_dim);
  if (uses_image(v)) image_ = register_image_projection(params_, d.image_dim, d.image_proj_dim);
  const auto features = feature_dim(config_.fusion, static_cast<std::size_t>(d.page_dim()),
                                    static_cast<std::size_t>(d.talk_dim), static_cast<std::size_t>(d.image_proj_dim));
  head_ = register_head(params_, "head", static_cast<int>(features), d.hidden_dim);
  initialise(seed);
}

void Model::initialise(std::uint64_t seed) {
  auto tensors = params_.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    Tensor& t = tensors[i];
    Rng rng(derive_seed(seed, i));
    if (is_bias(t.name) || (config_.zero_init_output && ends_with(t.name, ".out.weight") &&
                            t.name.rfind("attention", 0) != 0)) {
      t.value.setZero();
      continue;
    }
    // Embedding rows get unit variance; everything else uses the Glorot range.
    const double r = t.name == "encoder.embedding"
                         ? std::sqrt(3.0)
                         : std::sqrt(6.0 / static_cast<double>(t.value.rows() + t.value.cols()));
    for (Eigen::Index c = 0; c < t.value.cols(); ++c) {
      for (Eigen::Index row = 0; row < t.value.rows(); ++row) t.value(row, c) = rng.uniform(-r, r);
    }
  }
}

Var Model::page_vector(Tape& tape, const Example& ex, Var* attention) const {
  std::vector<Var> sections;
  if (config_.encoder == EncoderMode::kToy) {
    for (const auto& ids : ex.section_tokens) sections.push_back(encode_section(tape, *encoder_, ids));
  } else {
    for (const auto& v : ex.section_vectors) {
      if (v.size() != config_.dims.section_dim) {
        throw DimensionError("section vector of page " + std::to_string(ex.page_id) + " has " +
                             std::to_string(v.size()) + " values, expected " +
                             std::to_string(config_.dims.section_dim));
      }
      sections.push_back(tape.constant(v));
    }
  }
  if (sections.empty()) sections.push_back(tape.zeros(config_.dims.section_dim));
  const auto result = summarize(tape, *summarizer_, sections, ex.padding, config_.summarizer);
  if (attention != nullptr) *attention = result.weights;
  return result.pooled;
}

ForwardResult Model::forward(Tape& tape, const Example& ex, const Vector* dropout) const {
  ForwardResult out;
  const Variant v = config_.fusion.variant;
  const ModelDims& d = config_.dims;
  out.page = uses_text(v) ? page_vector(tape, ex, &out.attention) : tape.zeros(d.page_dim());
  if (uses_talk(v)) {
    out.talk = ex.mean_sentence.size() == 0 ? encode_talk(tape, *talk_, Vector::Zero(d.sentence_dim))
                                            : encode_talk(tape, *talk_, ex.mean_sentence);
  } else {
    out.talk = tape.zeros(d.talk_dim);
  }
  Var image = tape.zeros(d.image_dim);
  if (uses_image(v)) {
    if (ex.image.size() != 0 && ex.image.size() != d.image_dim) {
      throw DimensionError("image vector of page " + std::to_string(ex.page_id) + " has " +
                           std::to_string(ex.image.size()) + " values, expected " + std::to_string(d.image_dim));
    }
    if (ex.image.size() != 0) image = tape.constant(ex.image);
  }
  const ImageProjection projection = image_.value_or(ImageProjection{});
  out.features = fuse_modalities(tape, config_.fusion, projection, out.page, out.talk, image);
  out.logits = classify_logits(tape, head_, out.features, dropout);
  return out;
}

Var Model::summarizer_logits(Tape& tape, const Example& ex, const Vector* dropout) const {
  if (!summarizer_) throw Error("variant " + std::string(to_string(config_.fusion.variant)) + " has no summarizer");
  return classify_logits(tape, *summarizer_head_, page_vector(tape, ex, nullptr), dropout);
}

Var Model::pretrain_logits(Tape& tape, const Example& ex, const Vector* dropout) const {
  if (!encoder_) throw Error("model has no trainable section encoder");
  return classify_logits(tape, *pretrain_head_, encode_section(tape, *encoder_, ex.page_tokens), dropout);
}

Prediction Model::predict(const Example& ex) const {
  Tape tape(params_);
  const ForwardResult f = forward(tape, ex);
  Prediction p;
  p.distribution = to_distribution(tape.value(tape.softmax(f.logits)));
  p.predicted = p.distribution.argmax();
  p.page = tape.value(f.page);
  p.talk = tape.value(f.talk);
  if (uses_text(config_.fusion.variant)) p.attention = tape.value(f.attention);
  return p;
}

std::vector<Model::ModalityBlock> Model::modality_blocks() const {
  std::vector<ModalityBlock> blocks;
  std::size_t offset = 0;
  const auto add = [&](const char* name, int size) {
    blocks.push_back({name, offset, static_cast<std::size_t>(size)});
    offset += static_cast<std::size_t>(size);
  };
  const Variant v = config_.fusion.variant;
  if (uses_text(v)) add("text", config_.dims.page_dim());
  if (uses_talk(v)) add("talk", config_.dims.talk_dim);
  if (uses_image(v)) add("image", config_.dims.image_dim);
  return blocks;
}

Vector Model::modality_input(const Example& ex) const {
  const Prediction p = predict(ex);
  const auto blocks = modality_blocks();
  Vector out = Vector::Zero(static_cast<Eigen::Index>(blocks.back().offset + blocks.back().size));
  for (const auto& b : blocks) {
    const auto at = static_cast<Eigen::Index>(b.offset);
    const auto n = static_cast<Eigen::Index>(b.size);
    if (b.name == "text") out.segment(at, n) = p.page;
    if (b.name == "talk") out.segment(at, n) = p.talk;
    if (b.name == "image" && ex.image.size() == n) out.segment(at, n) = ex.image;
  }
  return out;
}

Vector Model::probabilities_from_modalities(const Vector& input) const {
  Tape tape(params_);
  const ModelDims& d = config_.dims;
  Var page = tape.zeros(d.page_dim());
  Var talk = tape.zeros(d.talk_dim);
  Var image = tape.zeros(d.image_dim);
  for (const auto& b : modality_blocks()) {
    const Var part = tape.constant(input.segment(static_cast<Eigen::Index>(b.offset), static_cast<Eigen::Index>(b.size)));
    if (b.name == "text") page = part;
    if (b.name == "talk") talk = part;
    if (b.name == "image") image = part;
  }
  const Var features = fuse_modalities(tape, config_.fusion, image_.value_or(ImageProjection{}), page, talk, image);
  return tape.value(tape.softmax(classify_logits(tape, head_, features)));
}

std::vector<TensorId> Model::group(TensorGroup g) const {
  std::vector<TensorId> out;
  switch (g) {
    case TensorGroup::kEncoder:
      if (encoder_) append(out, {encoder_->embedding, encoder_->proj_weight, encoder_->proj_bias});
      break;
    case TensorGroup::kPretrainHead:
      if (pretrain_head_) append_head(out, *pretrain_head_);
      break;
    case TensorGroup::kSummarizer:
      if (summarizer_) {
        append_direction(out, summarizer_->gru.forward);
        append_direction(out, summarizer_->gru.backward);
        const AttentionParams& a = summarizer_->attention;
        append(out, {a.weight, a.bias, a.context});
        if (a.has_output_projection) append(out, {a.out_weight, a.out_bias});
      }
      break;
    case TensorGroup::kSummarizerHead:
      if (summarizer_head_) append_head(out, *summarizer_head_);
      break;
    case TensorGroup::kTalk:
      if (talk_) append(out, {talk_->weight, talk_->bias});
      break;
    case TensorGroup::kImage:
      if (image_) append(out, {image_->weight, image_->bias});
      break;
    case TensorGroup::kHead: append_head(out, head_); break;
  }
  return out;
}

std::vector<TensorId> Model::all_tensors() const {
  std::vector<TensorId> out;
  for (std::uint32_t i = 0; i < params_.size(); ++i) out.push_back(TensorId{i});
  return out;
}

std::vector<TensorId> Model::forward_tensors() const {
  std::vector<TensorId> out;
  for (TensorGroup g : {TensorGroup::kEncoder, TensorGroup::kSummarizer, TensorGroup::kTalk, TensorGroup::kImage,
                        TensorGroup::kHead}) {
    const auto ids = group(g);
    out.insert(out.end(), ids.begin(), ids.end());
  }
  return out;
}

std::string Model::describe() const {
  json j;
  j["format"] = "nwqm-model";
  j["version"] = 1;
  j["dims"] = dims_to_json(config_.dims);
  j["encoder"] = std::string(to_string(config_.encoder));
  j["variant"] = std::string(to_string(config_.fusion.variant));
  j["fusion_mode"] = std::string(to_string(config_.fusion.mode));
  j["fold_order"] = std::string(to_string(config_.fusion.fold));
  j["attention_pooling"] = config_.summarizer.attention.pooling == AttentionPooling::kProjected ? "projected" : "hidden";
  j["attention_activation"] =
      config_.summarizer.attention.activation == AttentionActivation::kSigmoid ? "sigmoid" : "tanh";
  j["mask_padding"] = config_.summarizer.mask_padding;
  j["dropout"] = config_.dropout;
  j["zero_init_output"] = config_.zero_init_output;
  json tensors = json::array();
  for (const auto& t : params_.tensors()) tensors.push_back({t.name, {t.value.rows(), t.value.cols()}});
  j["tensors"] = tensors;
  return j.dump(2) + "\n";
}

void Model::save(const std::filesystem::path& checkpoint, const std::filesystem::path& description) const {
  std::vector<NamedTensor> out;
  for (const auto& t : params_.tensors()) {
    NamedTensor n;
    n.name = t.name;
    n.rows = static_cast<std::uint32_t>(t.value.rows());
    n.cols = static_cast<std::uint32_t>(t.value.cols());
    n.values.reserve(static_cast<std::size_t>(t.value.size()));
    for (Eigen::Index r = 0; r < t.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.value.cols(); ++c) n.values.push_back(static_cast<float>(t.value(r, c)));
    }
    out.push_back(std::move(n));
  }
  write_tensor_file(checkpoint, out);
  std::ofstream desc(description, std::ios::trunc);
  if (!desc) throw Error("cannot write " + description.string());
  desc << describe();
}

Model Model::load(const std::filesystem::path& checkpoint, const std::filesystem::path& description) {
  if (!std::filesystem::exists(description)) throw MissingArtifactError(description.string());
  if (!std::filesystem::exists(checkpoint)) throw MissingArtifactError(checkpoint.string());
  std::ifstream in(description);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(description.string() + ": " + e.what());
  }
  ModelConfig config;
  try {
    config.dims = dims_from_json(j.at("dims"));
    config.encoder = parse_encoder_mode(j.at("encoder").get<std::string>());
    config.fusion.variant = parse_variant(j.at("variant").get<std::string>());
    config.fusion.mode = parse_fusion_mode(j.at("fusion_mode").get<std::string>());
    config.fusion.fold = parse_fold_order(j.at("fold_order").get<std::string>());
    config.summarizer.attention.pooling =
        j.at("attention_pooling").get<std::string>() == "hidden" ? AttentionPooling::kHidden
                                                                 : AttentionPooling::kProjected;
    config.summarizer.attention.activation =
        j.at("attention_activation").get<std::string>() == "tanh" ? AttentionActivation::kTanh
                                                                  : AttentionActivation::kSigmoid;
    config.summarizer.mask_padding = j.at("mask_padding").get<bool>();
    config.dropout = j.at("dropout").get<double>();
    config.zero_init_output = j.at("zero_init_output").get<bool>();
  } catch (const json::exception& e) {
    throw FormatError(description.string() + ": " + e.what());
  }
  Model model(config, 0);
  const auto tensors = read_tensor_file(checkpoint);
  if (tensors.size() != model.params_.size()) {
    throw FormatError(checkpoint.string() + ": holds " + std::to_string(tensors.size()) + " tensors, model needs " +
                      std::to_string(model.params_.size()));
  }
  for (const auto& n : tensors) {
    const auto id = model.params_.find(n.name);
    if (!id) throw FormatError(checkpoint.string() + ": unexpected tensor '" + n.name + "'");
    Matrix& m = model.params_[*id].value;
    if (m.rows() != n.rows || m.cols() != n.cols) {
      throw FormatError(checkpoint.string() + ": tensor '" + n.name + "' has shape " + std::to_string(n.rows) + "x" +
                        std::to_string(n.cols) + ", expected " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()));
    }
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        m(r, c) = static_cast<double>(n.values[static_cast<std::size_t>(r * m.cols() + c)]);
      }
    }
  }
  return model;
}

int Model::hidden_width(TensorGroup head) const {
  switch (head) {
    case TensorGroup::kPretrainHead:
      return pretrain_head_ ? static_cast<int>(params_[pretrain_head_->hidden_weight].value.rows()) : 0;
    case TensorGroup::kSummarizerHead:
      return summarizer_head_ ? static_cast<int>(params_[summarizer_head_->hidden_weight].value.rows()) : 0;
    default: return static_cast<int>(params_[head_.hidden_weight].value.rows());
  }
}

}  // namespace nwqm
