#include "nwqm/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "nwqm/error.hpp"

namespace nwqm {

using nlohmann::json;

namespace {

class Reader {
 public:
  Reader(std::string_view text, std::string_view source) : text_(text), source_(source) {}

  [[noreturn]] void fail(const std::string& field, const std::string& message) const {
    throw ConfigError(fmt::format("{}:{}: field '{}': {}", source_, line_of(field), field, message));
  }

  /// Best-effort line of a dotted field: each key is searched after the previous one.
  std::size_t line_of(const std::string& field) const {
    std::size_t pos = 0;
    std::size_t start = 0;
    while (start <= field.size()) {
      const std::size_t dot = field.find('.', start);
      const std::string key = "\"" + field.substr(start, dot == std::string::npos ? std::string::npos : dot - start) + "\"";
      const std::size_t hit = text_.find(key, pos);
      if (hit == std::string_view::npos) break;
      pos = hit;
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    return line_at(pos);
  }

  std::size_t line_at(std::size_t byte) const {
    std::size_t line = 1;
    for (std::size_t i = 0; i < byte && i < text_.size(); ++i) line += text_[i] == '\n' ? 1 : 0;
    return line;
  }

  void allow(const json& obj, const std::string& prefix, std::initializer_list<const char*> keys) const {
    if (!obj.is_object()) fail(prefix, "expected an object");
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [key, value] : obj.items()) {
      if (!allowed.contains(key)) fail(join(prefix, key), "unknown key");
    }
  }

  static std::string join(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
  }

  template <typename T>
  void get(const json& obj, const std::string& prefix, const char* key, T& out) const {
    const auto it = obj.find(key);
    if (it == obj.end()) return;
    const std::string field = join(prefix, key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) fail(field, "expected true or false");
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!it->is_number_unsigned()) fail(field, "expected a non-negative integer");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) fail(field, "expected an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) fail(field, "expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) fail(field, "expected a string");
    }
    out = it->get<T>();
  }

  /// Applies `parse` to a string field, converting its errors into field errors.
  template <typename T, typename Parse>
  void get_enum(const json& obj, const std::string& prefix, const char* key, T& out, Parse parse) const {
    std::string text;
    get(obj, prefix, key, text);
    if (text.empty()) return;
    try {
      out = parse(text);
    } catch (const ConfigError& e) {
      fail(join(prefix, key), e.what());
    }
  }

 private:
  std::string_view text_;
  std::string_view source_;
};

void read_stage(const Reader& r, const json& obj, const std::string& prefix, StageConfig& stage) {
  r.allow(obj, prefix, {"lr", "epochs", "batch"});
  r.get(obj, prefix, "lr", stage.lr);
  r.get(obj, prefix, "epochs", stage.epochs);
  r.get(obj, prefix, "batch", stage.batch);
  try {
    stage.validate(prefix.substr(prefix.find('.') + 1));
  } catch (const ConfigError& e) {
    r.fail(prefix, e.what());
  }
}

}  // namespace

RunConfig RunConfig::parse(std::string_view text, std::string_view source) {
  const Reader r(text, source);
  json root;
  try {
    root = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{}:{}: {}", source, r.line_at(e.byte == 0 ? 0 : e.byte - 1), e.what()));
  }
  RunConfig c;
  r.allow(root, "", {"seed", "paths", "ingest", "model", "train", "vocab", "attribution", "synthetic"});
  r.get(root, "", "seed", c.seed);
  c.train.seed = c.seed;

  if (const auto it = root.find("paths"); it != root.end()) {
    const json& p = *it;
    r.allow(p, "paths", {"dumps", "images", "sentences", "sections", "work_dir"});
    if (const auto d = p.find("dumps"); d != p.end()) {
      if (d->is_string()) {
        c.paths.dumps = {d->get<std::string>()};
      } else if (d->is_array() && std::all_of(d->begin(), d->end(), [](const json& x) { return x.is_string(); })) {
        c.paths.dumps = d->get<std::vector<std::string>>();
      } else {
        r.fail("paths.dumps", "expected a path or a list of paths");
      }
    }
    r.get(p, "paths", "images", c.paths.images);
    r.get(p, "paths", "sentences", c.paths.sentences);
    r.get(p, "paths", "sections", c.paths.sections);
    r.get(p, "paths", "work_dir", c.paths.work_dir);
  }

  if (const auto it = root.find("ingest"); it != root.end()) {
    const json& g = *it;
    r.allow(g, "ingest", {"per_class_cap", "split"});
    r.get(g, "ingest", "per_class_cap", c.ingest.per_class_cap);
    if (c.ingest.per_class_cap == 0) r.fail("ingest.per_class_cap", "must be positive");
    if (const auto s = g.find("split"); s != g.end()) {
      if (!s->is_array() || s->size() != 3 || !std::all_of(s->begin(), s->end(), [](const json& x) { return x.is_number(); })) {
        r.fail("ingest.split", "expected three numbers [train, validation, test]");
      }
      c.ingest.split = SplitRatios{(*s)[0].get<double>(), (*s)[1].get<double>(), (*s)[2].get<double>()};
      const double sum = c.ingest.split.train + c.ingest.split.validation + c.ingest.split.test;
      if (std::abs(sum - 1.0) > 1e-9) r.fail("ingest.split", "ratios must sum to 1");
    }
  }

  if (const auto it = root.find("model"); it != root.end()) {
    const json& m = *it;
    r.allow(m, "model",
            {"encoder", "embed_dim", "section_dim", "gru_hidden", "attention_dim", "sentence_dim", "talk_dim",
             "image_dim", "image_proj_dim", "hidden_dim", "variant", "fusion_mode", "fold_order", "attention_pooling",
             "attention_activation", "mask_padding", "dropout", "zero_init_output"});
    ModelDims& d = c.model.dims;
    r.get_enum(m, "model", "encoder", c.model.encoder, parse_encoder_mode);
    r.get(m, "model", "embed_dim", d.embed_dim);
    r.get(m, "model", "section_dim", d.section_dim);
    r.get(m, "model", "gru_hidden", d.gru_hidden);
    r.get(m, "model", "attention_dim", d.attention_dim);
    r.get(m, "model", "sentence_dim", d.sentence_dim);
    r.get(m, "model", "talk_dim", d.talk_dim);
    r.get(m, "model", "image_dim", d.image_dim);
    r.get(m, "model", "image_proj_dim", d.image_proj_dim);
    r.get(m, "model", "hidden_dim", d.hidden_dim);
    r.get_enum(m, "model", "variant", c.model.fusion.variant, parse_variant);
    r.get_enum(m, "model", "fusion_mode", c.model.fusion.mode, parse_fusion_mode);
    r.get_enum(m, "model", "fold_order", c.model.fusion.fold, parse_fold_order);
    r.get_enum(m, "model", "attention_pooling", c.model.summarizer.attention.pooling, [](const std::string& s) {
      if (s == "projected") return AttentionPooling::kProjected;
      if (s == "hidden") return AttentionPooling::kHidden;
      throw ConfigError("expected 'projected' or 'hidden'");
    });
    r.get_enum(m, "model", "attention_activation", c.model.summarizer.attention.activation, [](const std::string& s) {
      if (s == "sigmoid") return AttentionActivation::kSigmoid;
      if (s == "tanh") return AttentionActivation::kTanh;
      throw ConfigError("expected 'sigmoid' or 'tanh'");
    });
    r.get(m, "model", "mask_padding", c.model.summarizer.mask_padding);
    r.get(m, "model", "dropout", c.model.dropout);
    r.get(m, "model", "zero_init_output", c.model.zero_init_output);
    try {
      c.model.validate();
    } catch (const ConfigError& e) {
      r.fail("model", e.what());
    }
  }

  if (const auto it = root.find("train"); it != root.end()) {
    const json& t = *it;
    r.allow(t, "train", {"pretrain", "summarizer", "joint"});
    if (const auto s = t.find("pretrain"); s != t.end()) read_stage(r, *s, "train.pretrain", c.train.pretrain);
    if (const auto s = t.find("summarizer"); s != t.end()) read_stage(r, *s, "train.summarizer", c.train.summarizer);
    if (const auto s = t.find("joint"); s != t.end()) read_stage(r, *s, "train.joint", c.train.joint);
  }

  if (const auto it = root.find("vocab"); it != root.end()) {
    r.allow(*it, "vocab", {"min_count", "max_size"});
    r.get(*it, "vocab", "min_count", c.vocab.min_count);
    r.get(*it, "vocab", "max_size", c.vocab.max_size);
  }

  if (const auto it = root.find("attribution"); it != root.end()) {
    const json& a = *it;
    r.allow(a, "attribution", {"samples", "top_k", "ridge", "kernel_width", "group_by", "split", "max_pages"});
    r.get(a, "attribution", "samples", c.attribution.lime.samples);
    r.get(a, "attribution", "top_k", c.attribution.lime.top_k);
    r.get(a, "attribution", "ridge", c.attribution.lime.ridge);
    r.get(a, "attribution", "kernel_width", c.attribution.lime.kernel_width);
    r.get(a, "attribution", "max_pages", c.attribution.max_pages);
    std::string group = "predicted";
    r.get(a, "attribution", "group_by", group);
    if (group != "predicted" && group != "true") r.fail("attribution.group_by", "expected 'predicted' or 'true'");
    c.attribution.by_predicted = group == "predicted";
    r.get(a, "attribution", "split", c.attribution.split);
    if (c.attribution.split != "train" && c.attribution.split != "validation" && c.attribution.split != "test") {
      r.fail("attribution.split", "expected train, validation or test");
    }
    if (c.attribution.lime.samples < 2) r.fail("attribution.samples", "must be at least 2");
  }

  if (const auto it = root.find("synthetic"); it != root.end()) {
    const json& s = *it;
    r.allow(s, "synthetic",
            {"pages_per_class", "seed", "image_dim", "image_spread", "text_noise", "talk_noise", "image_noise",
             "distractors"});
    r.get(s, "synthetic", "pages_per_class", c.synthetic.pages_per_class);
    r.get(s, "synthetic", "seed", c.synthetic.seed);
    r.get(s, "synthetic", "image_dim", c.synthetic.image_dim);
    r.get(s, "synthetic", "image_spread", c.synthetic.image_spread);
    r.get(s, "synthetic", "text_noise", c.synthetic.text_noise);
    r.get(s, "synthetic", "talk_noise", c.synthetic.talk_noise);
    r.get(s, "synthetic", "image_noise", c.synthetic.image_noise);
    r.get(s, "synthetic", "distractors", c.synthetic.distractors);
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError(path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), path.string());
}

std::filesystem::path resolve_input(const std::string& path) {
  const std::filesystem::path p(path);
  if (p.is_absolute() || std::filesystem::exists(p)) return p;
  if (const char* root = std::getenv("NWQM_DATA_DIR"); root != nullptr && *root != '\0') {
    const std::filesystem::path candidate = std::filesystem::path(root) / p;
    if (std::filesystem::exists(candidate)) return candidate;
  }
  return p;
}

}  // namespace nwqm
