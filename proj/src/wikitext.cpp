#include "nwqm/wikitext.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <optional>

namespace nwqm {

std::vector<std::string> SpecialTokens::all() const {
  return {infobox, heading_l1, heading_l2, wikilink, external_link,
          inline_reference, footnote, image, quotation, category};
}

bool SpecialTokens::contains(std::string_view token) const {
  for (const auto& t : all()) {
    if (t == token) return true;
  }
  return false;
}

const SpecialTokens& default_special_tokens() {
  static const SpecialTokens tokens;
  return tokens;
}

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

bool starts_with_ci(std::string_view s, std::size_t pos, std::string_view prefix) {
  if (s.size() - pos < prefix.size() || pos > s.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[pos + i])) != prefix[i]) return false;
  }
  return true;
}

std::size_t find_ci(std::string_view s, std::string_view needle, std::size_t from) {
  for (std::size_t i = from; i + needle.size() <= s.size(); ++i) {
    if (starts_with_ci(s, i, needle)) return i;
  }
  return std::string_view::npos;
}

// Index of the closer matching the opener at `open`; both are two-character delimiters.
std::size_t match_pair(std::string_view s, std::size_t open, char o, char c) {
  int depth = 0;
  std::size_t i = open;
  while (i + 1 < s.size()) {
    if (s[i] == o && s[i + 1] == o) {
      ++depth;
      i += 2;
    } else if (s[i] == c && s[i + 1] == c) {
      if (--depth == 0) return i;
      i += 2;
    } else {
      ++i;
    }
  }
  return std::string_view::npos;
}

std::vector<std::string_view> split_pipes(std::string_view inner) {
  std::vector<std::string_view> parts;
  int braces = 0;
  int brackets = 0;
  std::size_t begin = 0;
  for (std::size_t i = 0; i < inner.size(); ++i) {
    const char c = inner[i];
    const char n = i + 1 < inner.size() ? inner[i + 1] : '\0';
    if (c == '{' && n == '{') {
      ++braces, ++i;
    } else if (c == '}' && n == '}') {
      braces = std::max(0, braces - 1), ++i;
    } else if (c == '[' && n == '[') {
      ++brackets, ++i;
    } else if (c == ']' && n == ']') {
      brackets = std::max(0, brackets - 1), ++i;
    } else if (c == '|' && braces == 0 && brackets == 0) {
      parts.push_back(inner.substr(begin, i - begin));
      begin = i + 1;
    }
  }
  parts.push_back(inner.substr(begin));
  return parts;
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x110000) {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

enum class TemplateKind { kDrop, kInfobox, kFootnote, kImage, kQuotation };

TemplateKind classify_template(std::string_view inner) {
  std::string name = lower(trim(split_pipes(inner).front()));
  std::replace(name.begin(), name.end(), '_', ' ');
  if (name.starts_with("template:")) name = std::string(trim(std::string_view(name).substr(9)));
  if (name.starts_with("infobox")) return TemplateKind::kInfobox;
  static constexpr std::array<std::string_view, 13> kFootnotes = {
      "citation", "sfn", "sfnp", "efn", "refn", "harvnb", "harv", "r", "reflist", "notelist", "note", "ref", "rp"};
  if (name.starts_with("cite")) return TemplateKind::kFootnote;
  if (std::find(kFootnotes.begin(), kFootnotes.end(), name) != kFootnotes.end()) return TemplateKind::kFootnote;
  static constexpr std::array<std::string_view, 7> kImages = {
      "image", "multiple image", "gallery", "photo montage", "wide image", "tall image", "double image"};
  if (std::find(kImages.begin(), kImages.end(), name) != kImages.end()) return TemplateKind::kImage;
  static constexpr std::array<std::string_view, 8> kQuotes = {
      "quote", "blockquote", "cquote", "quotation", "quote box", "rquote", "pull quote", "quote frame"};
  if (std::find(kQuotes.begin(), kQuotes.end(), name) != kQuotes.end()) return TemplateKind::kQuotation;
  return TemplateKind::kDrop;
}

std::optional<std::pair<int, std::string_view>> parse_heading(std::string_view line) {
  line = trim(line);
  if (line.size() < 3 || line.front() != '=' || line.back() != '=') return std::nullopt;
  std::size_t lead = 0;
  while (lead < line.size() && line[lead] == '=') ++lead;
  std::size_t trail = 0;
  while (trail < line.size() && line[line.size() - 1 - trail] == '=') ++trail;
  const std::size_t level = std::min({lead, trail, std::size_t{6}});
  if (line.size() <= 2 * level) return std::nullopt;
  std::string_view inner = trim(line.substr(level, line.size() - 2 * level));
  if (inner.empty()) return std::nullopt;
  return std::make_pair(static_cast<int>(level), inner);
}

class Renderer {
 public:
  Renderer(const SpecialTokens& vocab, CleanDocument& doc) : vocab_(vocab), doc_(doc) {
    doc_.sections.push_back(Section{});
  }

  void render(std::string_view s, bool top_level);

  void finish() {
    flush();
    for (auto& section : doc_.sections) section.text = std::string(trim(section.text));
  }

 private:
  Section& current() { return doc_.sections.back(); }

  void text(std::string_view t) { pending_ += t; }
  void text(char c) { pending_ += c; }

  void flush() {
    if (pending_.empty()) return;
    auto tokens = tokenize(pending_);
    auto& section = current();
    section.tokens.insert(section.tokens.end(), std::make_move_iterator(tokens.begin()),
                          std::make_move_iterator(tokens.end()));
    section.text += pending_;
    pending_.clear();
  }

  void special(const std::string& token) {
    flush();
    current().tokens.push_back(token);
    // keep words on either side of a removed construct apart in the plain text
    if (!current().text.empty() && !is_space(current().text.back())) current().text += ' ';
  }

  void heading(int level, std::string_view inner) {
    flush();
    CleanDocument scratch;
    Renderer sub(vocab_, scratch);
    sub.render(inner, false);
    sub.finish();
    doc_.malformed += scratch.malformed;
    Section section;
    section.level = level;
    section.heading = scratch.sections.front().text;
    section.tokens.push_back(level == 1 ? vocab_.heading_l1 : vocab_.heading_l2);
    const auto& heading_tokens = scratch.sections.front().tokens;
    section.tokens.insert(section.tokens.end(), heading_tokens.begin(), heading_tokens.end());
    doc_.sections.push_back(std::move(section));
  }

  std::size_t line_end(std::string_view s, std::size_t pos) const {
    const std::size_t e = s.find('\n', pos);
    return e == std::string_view::npos ? s.size() : e;
  }

  std::size_t skip_table(std::string_view s, std::size_t pos) {
    int depth = 0;
    while (pos < s.size()) {
      std::size_t first = pos;
      while (first < s.size() && (s[first] == ' ' || s[first] == '\t')) ++first;
      if (s.compare(first, 2, "{|") == 0) ++depth;
      if (s.compare(first, 2, "|}") == 0 && --depth == 0) return std::min(s.size(), line_end(s, pos) + 1);
      pos = line_end(s, pos) + 1;
    }
    ++doc_.malformed;
    return s.size();
  }

  std::size_t at_line_start(std::string_view s, std::size_t pos) {
    const std::size_t end = line_end(s, pos);
    if (auto h = parse_heading(s.substr(pos, end - pos))) {
      heading(h->first, h->second);
      return std::min(s.size(), end + 1);
    }
    std::size_t first = pos;
    while (first < end && (s[first] == ' ' || s[first] == '\t')) ++first;
    if (s.compare(first, 2, "{|") == 0) return skip_table(s, pos);
    if (s.compare(first, 4, "----") == 0) {
      std::size_t i = first;
      while (i < end && s[i] == '-') ++i;
      return i;
    }
    while (pos < end && (s[pos] == '*' || s[pos] == '#' || s[pos] == ':' || s[pos] == ';')) ++pos;
    return pos;
  }

  std::size_t comment(std::string_view s, std::size_t pos) {
    const std::size_t close = s.find("-->", pos + 4);
    if (close == std::string_view::npos) {
      ++doc_.malformed;
      return s.size();
    }
    return close + 3;
  }

  // Handles "<...": references, block elements that map to tokens, and plain tags.
  std::size_t tag(std::string_view s, std::size_t pos) {
    const std::size_t gt = s.find('>', pos);
    const bool looks_like_tag = pos + 1 < s.size() && (std::isalpha(static_cast<unsigned char>(s[pos + 1])) != 0 ||
                                                       s[pos + 1] == '/');
    if (!looks_like_tag || gt == std::string_view::npos) {
      text('<');
      return pos + 1;
    }
    const std::string_view open = s.substr(pos, gt - pos + 1);
    std::size_t name_end = pos + 1;
    while (name_end < gt && (std::isalnum(static_cast<unsigned char>(s[name_end])) != 0 || s[name_end] == '/')) {
      ++name_end;
    }
    const std::string name = lower(s.substr(pos + 1, name_end - pos - 1));
    const bool self_closing = open.size() >= 2 && open[open.size() - 2] == '/';

    const auto swallow = [&](const std::string& token, std::string_view element) -> std::size_t {
      special(token);
      if (self_closing) return gt + 1;
      const std::string closer = "</" + std::string(element);
      const std::size_t close = find_ci(s, closer, gt + 1);
      if (close == std::string_view::npos) {
        ++doc_.malformed;
        return gt + 1;
      }
      const std::size_t close_gt = s.find('>', close);
      return close_gt == std::string_view::npos ? s.size() : close_gt + 1;
    };

    if (name == "ref") return swallow(vocab_.inline_reference, "ref");
    if (name == "gallery") return swallow(vocab_.image, "gallery");
    if (name == "blockquote") return swallow(vocab_.quotation, "blockquote");
    for (std::string_view dropped : {"math", "score", "syntaxhighlight", "source", "timeline", "chem"}) {
      if (name == dropped) {
        if (self_closing) return gt + 1;
        const std::size_t close = find_ci(s, "</" + std::string(dropped), gt + 1);
        if (close == std::string_view::npos) {
          ++doc_.malformed;
          return gt + 1;
        }
        const std::size_t close_gt = s.find('>', close);
        return close_gt == std::string_view::npos ? s.size() : close_gt + 1;
      }
    }
    if (name == "br" || name == "p" || name == "/p" || name == "div" || name == "/div") text(' ');
    return gt + 1;
  }

  std::size_t templ(std::string_view s, std::size_t pos) {
    const std::size_t close = match_pair(s, pos, '{', '}');
    if (close == std::string_view::npos) {
      ++doc_.malformed;
      return pos + 2;
    }
    switch (classify_template(s.substr(pos + 2, close - pos - 2))) {
      case TemplateKind::kInfobox: special(vocab_.infobox); break;
      case TemplateKind::kFootnote: special(vocab_.footnote); break;
      case TemplateKind::kImage: special(vocab_.image); break;
      case TemplateKind::kQuotation: special(vocab_.quotation); break;
      case TemplateKind::kDrop: break;
    }
    return close + 2;
  }

  std::size_t wikilink(std::string_view s, std::size_t pos) {
    const std::size_t close = match_pair(s, pos, '[', ']');
    if (close == std::string_view::npos) {
      ++doc_.malformed;
      return pos + 2;
    }
    const std::string_view inner = s.substr(pos + 2, close - pos - 2);
    const auto parts = split_pipes(inner);
    std::string_view target = trim(parts.front());
    const std::size_t colon = target.find(':');
    if (colon != std::string_view::npos && !target.starts_with(':')) {
      const std::string ns = lower(trim(target.substr(0, colon)));
      if (ns == "file" || ns == "image") {
        special(vocab_.image);
        return close + 2;
      }
      if (ns == "category") {
        special(vocab_.category);
        return close + 2;
      }
    }
    if (target.starts_with(':')) target.remove_prefix(1);
    special(vocab_.wikilink);
    render(parts.size() > 1 ? parts.back() : target, false);
    return close + 2;
  }

  std::size_t external_link(std::string_view s, std::size_t pos) {
    const std::size_t close = s.find(']', pos);
    const std::size_t newline = s.find('\n', pos);
    if (close == std::string_view::npos || (newline != std::string_view::npos && newline < close)) {
      text('[');
      return pos + 1;
    }
    const std::string_view inner = s.substr(pos + 1, close - pos - 1);
    special(vocab_.external_link);
    const std::size_t space = inner.find_first_of(" \t");
    if (space != std::string_view::npos) render(trim(inner.substr(space + 1)), false);
    return close + 1;
  }

  std::size_t entity(std::string_view s, std::size_t pos) {
    const std::size_t semi = s.find(';', pos);
    if (semi == std::string_view::npos || semi - pos > 10) {
      text('&');
      return pos + 1;
    }
    const std::string_view name = s.substr(pos + 1, semi - pos - 1);
    static constexpr std::array<std::pair<std::string_view, std::string_view>, 9> kNamed = {{
        {"nbsp", " "}, {"amp", "&"}, {"lt", "<"}, {"gt", ">"}, {"quot", "\""},
        {"apos", "'"}, {"ndash", "–"}, {"mdash", "—"}, {"thinsp", " "},
    }};
    for (const auto& [key, value] : kNamed) {
      if (name == key) {
        text(value);
        return semi + 1;
      }
    }
    if (name.size() > 1 && name.front() == '#') {
      std::uint32_t cp = 0;
      const bool hex = name[1] == 'x' || name[1] == 'X';
      bool ok = name.size() > (hex ? 2u : 1u);
      for (std::size_t i = hex ? 2 : 1; ok && i < name.size(); ++i) {
        const char c = name[i];
        int digit = -1;
        if (c >= '0' && c <= '9') digit = c - '0';
        else if (hex && c >= 'a' && c <= 'f') digit = c - 'a' + 10;
        else if (hex && c >= 'A' && c <= 'F') digit = c - 'A' + 10;
        if (digit < 0) ok = false;
        else cp = cp * (hex ? 16u : 10u) + static_cast<std::uint32_t>(digit);
        if (cp > 0x10FFFF) ok = false;
      }
      if (ok) {
        append_utf8(pending_, cp);
        return semi + 1;
      }
    }
    text('&');
    return pos + 1;
  }

  const SpecialTokens& vocab_;
  CleanDocument& doc_;
  std::string pending_;
};

bool is_url_start(std::string_view s, std::size_t pos) {
  for (std::string_view scheme : {"http://", "https://", "ftp://", "//", "mailto:"}) {
    if (starts_with_ci(s, pos, scheme)) return true;
  }
  return false;
}

void Renderer::render(std::string_view s, bool top_level) {
  std::size_t pos = 0;
  bool line_start = true;
  while (pos < s.size()) {
    if (top_level && line_start) {
      line_start = false;
      const std::size_t before = pos;
      pos = at_line_start(s, pos);
      if (pos > before && s[pos - 1] == '\n') {
        line_start = true;
        continue;
      }
      if (pos >= s.size()) break;
    }
    const char c = s[pos];
    const char n = pos + 1 < s.size() ? s[pos + 1] : '\0';
    if (c == '\n') {
      text('\n');
      ++pos;
      line_start = true;
    } else if (c == '<' && s.compare(pos, 4, "<!--") == 0) {
      pos = comment(s, pos);
    } else if (c == '<') {
      pos = tag(s, pos);
    } else if (c == '{' && n == '{') {
      pos = templ(s, pos);
    } else if (c == '[' && n == '[') {
      pos = wikilink(s, pos);
    } else if (c == '[' && is_url_start(s, pos + 1)) {
      pos = external_link(s, pos);
    } else if ((c == ']' && n == ']') || (c == '}' && n == '}')) {
      ++doc_.malformed;
      pos += 2;
    } else if (c == '\'' && n == '\'') {
      while (pos < s.size() && s[pos] == '\'') ++pos;
    } else if (c == '&') {
      pos = entity(s, pos);
    } else if (c == '_' && n == '_') {
      std::size_t end = pos + 2;
      while (end < s.size() && std::isupper(static_cast<unsigned char>(s[end])) != 0) ++end;
      if (end > pos + 2 && s.compare(end, 2, "__") == 0) {
        pos = end + 2;
      } else {
        text("__");
        pos += 2;
      }
    } else {
      text(c);
      ++pos;
    }
  }
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c) != 0) {
      ++i;
    } else if (is_word_byte(c)) {
      std::size_t j = i;
      while (j < text.size() && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
      tokens.emplace_back(text.substr(i, j - i));
      i = j;
    } else {
      tokens.emplace_back(1, text[i]);
      ++i;
    }
  }
  return tokens;
}

std::size_t CleanDocument::token_count() const {
  std::size_t n = 0;
  for (const auto& section : sections) n += section.tokens.size();
  return n;
}

std::string CleanDocument::plain_text() const {
  std::string out;
  for (const auto& section : sections) {
    if (!section.heading.empty()) {
      if (!out.empty()) out += '\n';
      out += section.heading;
    }
    if (!section.text.empty()) {
      if (!out.empty()) out += '\n';
      out += section.text;
    }
  }
  return out;
}

CleanDocument wikitext_to_plain(std::string_view markup, std::string_view title, const SpecialTokens& vocab) {
  CleanDocument doc;
  doc.source_title = std::string(title);
  Renderer renderer(vocab, doc);
  renderer.render(markup, true);
  renderer.finish();
  return doc;
}

SectionSequence segment_sections(const CleanDocument& doc, std::size_t max_sections) {
  SectionSequence seq;
  seq.max_sections = max_sections;
  const std::size_t kept = std::min(doc.sections.size(), max_sections);
  for (std::size_t i = 0; i < kept; ++i) seq.sections.push_back(apply_token_budget(doc.sections[i].tokens));
  seq.padding = max_sections - kept;
  return seq;
}

namespace {

bool is_abbreviation(std::string_view text, std::size_t dot) {
  static constexpr std::array<std::string_view, 30> kAbbreviations = {
      "mr", "mrs", "ms", "dr", "prof", "st", "jr", "sr", "vs", "etc", "e.g", "i.e", "no", "fig", "approx",
      "inc", "ltd", "co", "mt", "gen", "col", "lt", "sgt", "rev", "hon", "u.s", "cf", "ca", "al", "vol"};
  std::size_t begin = dot;
  while (begin > 0 && (std::isalpha(static_cast<unsigned char>(text[begin - 1])) != 0 || text[begin - 1] == '.')) {
    --begin;
  }
  std::string word = lower(text.substr(begin, dot - begin));
  while (!word.empty() && word.front() == '.') word.erase(word.begin());
  while (!word.empty() && word.back() == '.') word.pop_back();
  return std::find(kAbbreviations.begin(), kAbbreviations.end(), word) != kAbbreviations.end();
}

bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }

}  // namespace

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> sentences;
  const auto emit = [&](std::size_t from, std::size_t to) {
    const std::string_view piece = trim(text.substr(from, to - from));
    if (!piece.empty()) sentences.emplace_back(piece);
  };
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '\n') {
      emit(start, i);
      start = ++i;
      continue;
    }
    if (!is_terminator(text[i])) {
      ++i;
      continue;
    }
    std::size_t end = i + 1;
    while (end < text.size() && (is_terminator(text[end]) || is_closer(text[end]))) ++end;
    std::size_t next = end;
    while (next < text.size() && text[next] != '\n' && is_space(text[next])) ++next;
    const bool boundary = next > end && next < text.size() &&
                          std::isupper(static_cast<unsigned char>(text[next])) != 0 &&
                          !(text[i] == '.' && is_abbreviation(text, i));
    if (boundary) {
      emit(start, end);
      start = next;
      i = next;
    } else {
      i = end;
    }
  }
  emit(start, text.size());
  return sentences;
}

}  // namespace nwqm
