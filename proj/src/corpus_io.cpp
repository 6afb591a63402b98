#include "nwqm/corpus_io.hpp"

#include <fstream>

#include <json.hpp>

#include "nwqm/error.hpp"
#include "nwqm/wikitext.hpp"

namespace nwqm {

using nlohmann::json;

namespace {

QualityClass label_from_json(const json& j) {
  const auto parsed = parse_quality_class(j.get<std::string>());
  if (!parsed) throw FormatError("unknown quality label '" + j.get<std::string>() + "'");
  return *parsed;
}

template <typename T, typename Parse>
std::vector<T> read_jsonl(const std::filesystem::path& path, Parse parse) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError(path.string());
  std::vector<T> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      out.push_back(parse(json::parse(line)));
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

template <typename T, typename Dump>
void write_jsonl(const std::filesystem::path& path, const std::vector<T>& records, Dump dump) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  for (const auto& r : records) out << dump(r).dump() << '\n';
}

}  // namespace

CorpusRecord to_record(const PagePair& pair) {
  if (!pair.label) throw Error("page '" + pair.main.title + "' has no quality label");
  return CorpusRecord{pair.main.page_id, pair.talk.page_id, pair.main.title, *pair.label,
                      pair.main.text,    pair.talk.text,    pair.main.revision_timestamp};
}

PreprocessedRecord preprocess_record(const CorpusRecord& record) {
  PreprocessedRecord out;
  out.page_id = record.page_id;
  out.title = record.title;
  out.label = record.label;

  const CleanDocument doc = wikitext_to_plain(record.main_text, record.title);
  const SectionSequence seq = segment_sections(doc);
  for (std::size_t i = 0; i < seq.sections.size(); ++i) {
    out.sections.push_back({doc.sections[i].heading, doc.sections[i].level, seq.sections[i]});
  }
  out.padding = seq.padding;
  std::vector<std::string> all;
  for (const auto& s : doc.sections) all.insert(all.end(), s.tokens.begin(), s.tokens.end());
  out.page_tokens = apply_token_budget(all);
  out.main_tokens = doc.token_count();
  out.empty_main = out.main_tokens == 0;
  out.malformed = doc.malformed;

  const CleanDocument talk = wikitext_to_plain(record.talk_text);
  out.talk_sentences = split_sentences(talk.plain_text());
  out.talk_tokens = talk.token_count();
  out.malformed += talk.malformed;
  return out;
}

void write_corpus(const std::filesystem::path& path, const std::vector<CorpusRecord>& records) {
  write_jsonl(path, records, [](const CorpusRecord& r) {
    return json{{"page_id", r.page_id},     {"talk_page_id", r.talk_page_id},
                {"title", r.title},         {"label", std::string(to_string(r.label))},
                {"main_text", r.main_text}, {"talk_text", r.talk_text},
                {"revision_timestamp", r.revision_timestamp}};
  });
}

std::vector<CorpusRecord> read_corpus(const std::filesystem::path& path) {
  return read_jsonl<CorpusRecord>(path, [](const json& j) {
    CorpusRecord r;
    r.page_id = j.at("page_id").get<std::int64_t>();
    r.talk_page_id = j.value("talk_page_id", std::int64_t{0});
    r.title = j.at("title").get<std::string>();
    r.label = label_from_json(j.at("label"));
    r.main_text = j.at("main_text").get<std::string>();
    r.talk_text = j.at("talk_text").get<std::string>();
    r.revision_timestamp = j.value("revision_timestamp", std::string{});
    return r;
  });
}

void write_preprocessed(const std::filesystem::path& path, const std::vector<PreprocessedRecord>& records) {
  write_jsonl(path, records, [](const PreprocessedRecord& r) {
    json sections = json::array();
    for (const auto& s : r.sections) sections.push_back({{"heading", s.heading}, {"level", s.level}, {"tokens", s.tokens}});
    return json{{"page_id", r.page_id},
                {"title", r.title},
                {"label", std::string(to_string(r.label))},
                {"sections", sections},
                {"padding", r.padding},
                {"page_tokens", r.page_tokens},
                {"talk_sentences", r.talk_sentences},
                {"main_tokens", r.main_tokens},
                {"talk_tokens", r.talk_tokens},
                {"empty_main", r.empty_main},
                {"malformed", r.malformed}};
  });
}

std::vector<PreprocessedRecord> read_preprocessed(const std::filesystem::path& path) {
  return read_jsonl<PreprocessedRecord>(path, [](const json& j) {
    PreprocessedRecord r;
    r.page_id = j.at("page_id").get<std::int64_t>();
    r.title = j.at("title").get<std::string>();
    r.label = label_from_json(j.at("label"));
    for (const auto& s : j.at("sections")) {
      r.sections.push_back({s.at("heading").get<std::string>(), s.at("level").get<int>(),
                            s.at("tokens").get<std::vector<std::string>>()});
    }
    r.padding = j.at("padding").get<std::size_t>();
    r.page_tokens = j.at("page_tokens").get<std::vector<std::string>>();
    r.talk_sentences = j.at("talk_sentences").get<std::vector<std::string>>();
    r.main_tokens = j.at("main_tokens").get<std::size_t>();
    r.talk_tokens = j.at("talk_tokens").get<std::size_t>();
    r.empty_main = j.at("empty_main").get<bool>();
    r.malformed = j.at("malformed").get<std::size_t>();
    if (r.sections.size() + r.padding != kMaxSections) {
      throw FormatError("page " + std::to_string(r.page_id) + ": sections plus padding must equal 16");
    }
    return r;
  });
}

}  // namespace nwqm
