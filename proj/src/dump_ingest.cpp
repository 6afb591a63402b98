#include "nwqm/dump_ingest.hpp"

#include <expat.h>

#include <algorithm>
#include <cctype>
#include <deque>
#include <cmath>
#include <sstream>

#include "nwqm/error.hpp"
#include "nwqm/random.hpp"

namespace nwqm {

// ---------------------------------------------------------------------------
// DumpReader

struct DumpReader::State {
  std::istream& in;
  XML_Parser parser = nullptr;
  std::vector<char> buffer;
  std::deque<RawPage> ready;
  DumpStats stats;
  std::uint64_t bytes_fed = 0;
  bool finished = false;

  std::vector<std::string> path;
  std::string* sink = nullptr;

  // page under construction
  std::string title;
  std::string ns;
  std::string page_id;
  bool has_ns = false;
  bool has_page_id = false;

  // revision under construction
  std::string rev_timestamp;
  std::string rev_text;
  std::string best_timestamp;
  std::string best_text;
  bool has_best = false;

  State(std::istream& stream, std::size_t chunk) : in(stream), buffer(chunk) {}

  const std::string& parent() const {
    static const std::string kNone;
    return path.size() >= 2 ? path[path.size() - 2] : kNone;
  }

  void start(const char* name) {
    path.emplace_back(name);
    const std::string& el = path.back();
    const std::string& up = parent();
    if (el == "page") {
      title.clear();
      ns.clear();
      page_id.clear();
      has_ns = has_page_id = has_best = false;
      best_text.clear();
      best_timestamp.clear();
    } else if (up == "page" && el == "title") {
      title.clear();
      sink = &title;
    } else if (up == "page" && el == "ns") {
      ns.clear();
      has_ns = true;
      sink = &ns;
    } else if (up == "page" && el == "id") {
      page_id.clear();
      has_page_id = true;
      sink = &page_id;
    } else if (up == "page" && el == "revision") {
      rev_timestamp.clear();
      rev_text.clear();
    } else if (up == "revision" && el == "timestamp") {
      sink = &rev_timestamp;
    } else if (up == "revision" && el == "text") {
      sink = &rev_text;
    }
  }

  void end() {
    const std::string el = path.back();
    const std::string up = parent();
    path.pop_back();
    sink = nullptr;
    if (up == "page" && el == "revision") {
      // Latest timestamp wins; equal timestamps resolve to the later revision in the file.
      if (!has_best || rev_timestamp >= best_timestamp) {
        best_timestamp = std::move(rev_timestamp);
        best_text = std::move(rev_text);
        has_best = true;
      }
    } else if (el == "page") {
      finish_page();
    }
  }

  void finish_page() {
    ++stats.pages;
    const auto trimmed = [](const std::string& s) {
      const auto b = s.find_first_not_of(" \t\r\n");
      if (b == std::string::npos) return std::string();
      return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
    };
    std::string clean_title = trimmed(title);
    if (clean_title.empty()) {
      ++stats.missing_title;
      return;
    }
    if (!has_ns || trimmed(ns).empty()) {
      ++stats.missing_namespace;
      return;
    }
    RawPage page;
    page.title = std::move(clean_title);
    try {
      page.ns = std::stoi(trimmed(ns));
      page.page_id = has_page_id ? std::stoll(trimmed(page_id)) : 0;
    } catch (const std::exception&) {
      throw DumpParseError("non-numeric ns or id in page '" + page.title + "'",
                           static_cast<std::uint64_t>(XML_GetCurrentByteIndex(parser)));
    }
    page.text = std::move(best_text);
    page.revision_timestamp = std::move(best_timestamp);
    ready.push_back(std::move(page));
  }

  static void XMLCALL on_start(void* user, const XML_Char* name, const XML_Char**) {
    static_cast<State*>(user)->start(name);
  }
  static void XMLCALL on_end(void* user, const XML_Char*) { static_cast<State*>(user)->end(); }
  static void XMLCALL on_chars(void* user, const XML_Char* s, int len) {
    auto* self = static_cast<State*>(user);
    if (self->sink != nullptr) self->sink->append(s, static_cast<std::size_t>(len));
  }

  void check(XML_Status status) {
    if (status == XML_STATUS_ERROR) {
      throw DumpParseError(std::string("malformed XML: ") + XML_ErrorString(XML_GetErrorCode(parser)),
                           static_cast<std::uint64_t>(XML_GetCurrentByteIndex(parser)));
    }
  }

  void pump() {
    in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    const auto got = static_cast<int>(in.gcount());
    if (got == 0) {
      finished = true;
      if (bytes_fed == 0) return;  // zero-byte input: an empty dump
      check(XML_Parse(parser, nullptr, 0, 1));
      return;
    }
    bytes_fed += static_cast<std::uint64_t>(got);
    check(XML_Parse(parser, buffer.data(), got, 0));
  }
};

DumpReader::DumpReader(std::istream& in, std::size_t chunk_size)
    : state_(std::make_unique<State>(in, std::max<std::size_t>(chunk_size, 1))) {
  state_->parser = XML_ParserCreate("UTF-8");
  if (state_->parser == nullptr) throw Error("cannot allocate XML parser");
  XML_SetUserData(state_->parser, state_.get());
  XML_SetElementHandler(state_->parser, &State::on_start, &State::on_end);
  XML_SetCharacterDataHandler(state_->parser, &State::on_chars);
}

DumpReader::~DumpReader() {
  if (state_ && state_->parser != nullptr) XML_ParserFree(state_->parser);
}

std::optional<RawPage> DumpReader::next() {
  while (state_->ready.empty() && !state_->finished) state_->pump();
  if (state_->ready.empty()) return std::nullopt;
  RawPage page = std::move(state_->ready.front());
  state_->ready.pop_front();
  return page;
}

const DumpStats& DumpReader::stats() const { return state_->stats; }

std::vector<RawPage> stream_pages(std::string_view xml, DumpStats* stats) {
  std::istringstream in{std::string(xml)};
  DumpReader reader(in);
  std::vector<RawPage> pages;
  while (auto page = reader.next()) pages.push_back(std::move(*page));
  if (stats != nullptr) *stats = reader.stats();
  return pages;
}

bool is_redirect(std::string_view wikitext) {
  std::size_t i = 0;
  while (i < wikitext.size() && std::isspace(static_cast<unsigned char>(wikitext[i]))) ++i;
  constexpr std::string_view kDirective = "#redirect";
  if (wikitext.size() - i < kDirective.size()) return false;
  for (std::size_t k = 0; k < kDirective.size(); ++k) {
    if (std::tolower(static_cast<unsigned char>(wikitext[i + k])) != kDirective[k]) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Pairing

std::optional<PagePair> PairBuilder::add(RawPage page) {
  if (page.ns != 0 && page.ns != 1) {
    ++stats_.other_namespace;
    return std::nullopt;
  }
  if (is_redirect(page.text)) {
    ++stats_.redirects;
    return std::nullopt;
  }
  std::string key;
  if (page.ns == 0) {
    key = page.title;
  } else {
    if (page.title.size() <= kTalkPrefix.size() || page.title.compare(0, kTalkPrefix.size(), kTalkPrefix) != 0) {
      ++stats_.malformed_talk_title;
      return std::nullopt;
    }
    key = page.title.substr(kTalkPrefix.size());
  }
  if (paired_.contains(key)) {
    ++stats_.duplicates;
    return std::nullopt;
  }
  auto& own = page.ns == 0 ? pending_main_ : pending_talk_;
  auto& other = page.ns == 0 ? pending_talk_ : pending_main_;
  if (own.contains(key)) {
    ++stats_.duplicates;
    return std::nullopt;
  }
  auto match = other.find(key);
  if (match == other.end()) {
    own.emplace(std::move(key), std::move(page));
    return std::nullopt;
  }
  PagePair pair;
  if (page.ns == 0) {
    pair.main = std::move(page);
    pair.talk = std::move(match->second);
  } else {
    pair.main = std::move(match->second);
    pair.talk = std::move(page);
  }
  other.erase(match);
  paired_.insert(std::move(key));
  return pair;
}

PairingStats PairBuilder::finish() {
  stats_.unmatched += pending_main_.size() + pending_talk_.size();
  pending_main_.clear();
  pending_talk_.clear();
  return stats_;
}

std::vector<PagePair> pair_main_talk(const std::vector<RawPage>& pages, PairingStats* stats) {
  PairBuilder builder;
  std::vector<PagePair> pairs;
  for (const auto& page : pages) {
    if (auto pair = builder.add(page)) pairs.push_back(std::move(*pair));
  }
  const PairingStats final_stats = builder.finish();
  if (stats != nullptr) *stats = final_stats;
  return pairs;
}

// ---------------------------------------------------------------------------
// Labels

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Position of the "}}" closing the template opened at `open`, or npos.
std::size_t matching_close(std::string_view text, std::size_t open) {
  int depth = 0;
  std::size_t i = open;
  while (i + 1 < text.size()) {
    if (text[i] == '{' && text[i + 1] == '{') {
      ++depth;
      i += 2;
    } else if (text[i] == '}' && text[i + 1] == '}') {
      if (--depth == 0) return i;
      i += 2;
    } else {
      ++i;
    }
  }
  return std::string_view::npos;
}

std::vector<std::string_view> split_top_level(std::string_view inner) {
  std::vector<std::string_view> parts;
  int braces = 0;
  int brackets = 0;
  std::size_t begin = 0;
  for (std::size_t i = 0; i < inner.size(); ++i) {
    const char c = inner[i];
    const char n = i + 1 < inner.size() ? inner[i + 1] : '\0';
    if (c == '{' && n == '{') {
      ++braces;
      ++i;
    } else if (c == '}' && n == '}') {
      braces = std::max(0, braces - 1);
      ++i;
    } else if (c == '[' && n == '[') {
      ++brackets;
      ++i;
    } else if (c == ']' && n == ']') {
      brackets = std::max(0, brackets - 1);
      ++i;
    } else if (c == '|' && braces == 0 && brackets == 0) {
      parts.push_back(inner.substr(begin, i - begin));
      begin = i + 1;
    }
  }
  parts.push_back(inner.substr(begin));
  return parts;
}

void collect_votes(std::string_view text, std::array<int, kNumClasses>& votes) {
  std::size_t pos = 0;
  while ((pos = text.find("{{", pos)) != std::string_view::npos) {
    const std::size_t close = matching_close(text, pos);
    if (close == std::string_view::npos) {
      pos += 2;
      continue;
    }
    const std::string_view inner = text.substr(pos + 2, close - pos - 2);
    const auto parts = split_top_level(inner);
    for (std::size_t p = 1; p < parts.size(); ++p) {
      const std::size_t eq = parts[p].find('=');
      if (eq == std::string_view::npos) continue;
      std::string key(trim(parts[p].substr(0, eq)));
      std::transform(key.begin(), key.end(), key.begin(), [](unsigned char ch) { return std::tolower(ch); });
      if (key != "class") continue;
      if (auto cls = parse_quality_class(parts[p].substr(eq + 1))) ++votes[static_cast<std::size_t>(ordinal(*cls))];
    }
    collect_votes(inner, votes);
    pos = close + 2;
  }
}

}  // namespace

std::optional<QualityClass> extract_label(std::string_view talk_text) {
  std::array<int, kNumClasses> votes{};
  collect_votes(talk_text, votes);
  int best = -1;
  int best_votes = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    if (votes[static_cast<std::size_t>(c)] > 0 && votes[static_cast<std::size_t>(c)] >= best_votes) {
      best = c;
      best_votes = votes[static_cast<std::size_t>(c)];
    }
  }
  if (best < 0) return std::nullopt;
  return class_from_ordinal(best);
}

// ---------------------------------------------------------------------------
// Balancing and splitting

namespace {

std::array<std::vector<std::size_t>, kNumClasses> group_by_class(const std::vector<PagePair>& pairs) {
  std::array<std::vector<std::size_t>, kNumClasses> groups;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!pairs[i].label) throw Error("pair '" + pairs[i].title() + "' has no quality label");
    groups[static_cast<std::size_t>(ordinal(*pairs[i].label))].push_back(i);
  }
  return groups;
}

}  // namespace

std::vector<PagePair> balance_sample(const std::vector<PagePair>& labeled, std::size_t per_class_cap,
                                     std::uint64_t seed) {
  if (per_class_cap == 0) throw Error("per-class cap must be positive");
  auto groups = group_by_class(labeled);
  std::string empty;
  for (int c = kNumClasses - 1; c >= 0; --c) {
    if (groups[static_cast<std::size_t>(c)].empty()) {
      if (!empty.empty()) empty += ", ";
      empty += to_string(class_from_ordinal(c));
    }
  }
  if (!empty.empty()) throw Error("no pairs for class(es): " + empty);

  Rng rng(seed);
  std::vector<PagePair> out;
  for (int c = kNumClasses - 1; c >= 0; --c) {
    auto chosen = groups[static_cast<std::size_t>(c)];
    if (class_from_ordinal(c) != QualityClass::kFA && chosen.size() > per_class_cap) {
      rng.shuffle(chosen);
      chosen.resize(per_class_cap);
      std::sort(chosen.begin(), chosen.end());
    }
    for (std::size_t i : chosen) out.push_back(labeled[i]);
  }
  return out;
}

std::array<std::size_t, 3> stratum_sizes(std::size_t n, const SplitRatios& ratios) {
  const std::array<double, 3> r = {ratios.train, ratios.validation, ratios.test};
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    const double exact = r[s] * static_cast<double>(n);
    sizes[s] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    frac[s] = exact - static_cast<double>(sizes[s]);
    assigned += sizes[s];
  }
  std::array<std::size_t, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b] + 1e-9; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k % 3]];
  return sizes;
}

CorpusSplit split_corpus(const std::vector<PagePair>& corpus, const SplitRatios& ratios, std::uint64_t seed) {
  if (ratios.train < 0 || ratios.validation < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) {
    throw Error("split ratios must be non-negative and sum to 1");
  }
  auto groups = group_by_class(corpus);
  CorpusSplit split;
  split.seed = seed;
  Rng rng(seed);
  for (int c = kNumClasses - 1; c >= 0; --c) {
    auto& members = groups[static_cast<std::size_t>(c)];
    if (members.empty()) continue;
    if (members.size() < 3) {
      throw Error("class " + std::string(to_string(class_from_ordinal(c))) + " has fewer than 3 pairs");
    }
    rng.shuffle(members);
    const auto sizes = stratum_sizes(members.size(), ratios);
    std::size_t i = 0;
    for (; i < sizes[0]; ++i) split.train.push_back(corpus[members[i]]);
    for (; i < sizes[0] + sizes[1]; ++i) split.validation.push_back(corpus[members[i]]);
    for (; i < members.size(); ++i) split.test.push_back(corpus[members[i]]);
  }
  return split;
}

std::vector<PagePair> ingest_dump(std::istream& in, IngestStats& stats) {
  DumpReader reader(in);
  PairBuilder builder;
  std::vector<PagePair> labeled;
  while (auto page = reader.next()) {
    auto pair = builder.add(std::move(*page));
    if (!pair) continue;
    pair->label = extract_label(pair->talk.text);
    if (!pair->label) {
      ++stats.unlabeled;
      continue;
    }
    ++stats.labeled[static_cast<std::size_t>(ordinal(*pair->label))];
    labeled.push_back(std::move(*pair));
  }
  const PairingStats pairing = builder.finish();
  const DumpStats& dump = reader.stats();
  stats.dump.pages += dump.pages;
  stats.dump.missing_namespace += dump.missing_namespace;
  stats.dump.missing_title += dump.missing_title;
  stats.pairing.duplicates += pairing.duplicates;
  stats.pairing.redirects += pairing.redirects;
  stats.pairing.other_namespace += pairing.other_namespace;
  stats.pairing.malformed_talk_title += pairing.malformed_talk_title;
  stats.pairing.unmatched += pairing.unmatched;
  return labeled;
}

}  // namespace nwqm
