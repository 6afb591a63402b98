#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nwqm {

/// Atomic tokens standing in for wiki meta constructs. The angle-bracket spelling
/// can never come out of the tokenizer, which splits '<' and '>' into their own tokens.
struct SpecialTokens {
  std::string infobox = "<infobox>";
  std::string heading_l1 = "<h1>";
  std::string heading_l2 = "<h2>";
  std::string wikilink = "<wikilink>";
  std::string external_link = "<extlink>";
  std::string inline_reference = "<ref>";
  std::string footnote = "<footnote>";
  std::string image = "<image>";
  std::string quotation = "<quote>";
  std::string category = "<category>";

  std::vector<std::string> all() const;
  bool contains(std::string_view token) const;
};

const SpecialTokens& default_special_tokens();

/// Whitespace + punctuation splitting: runs of ASCII alphanumerics and non-ASCII
/// bytes form words, every other visible character is a token of its own.
std::vector<std::string> tokenize(std::string_view text);

struct Section {
  std::string heading;  // empty for the lead
  int level = 1;
  std::vector<std::string> tokens;
  std::string text;  // plain rendering without special tokens
};

struct CleanDocument {
  std::vector<Section> sections;
  std::string source_title;
  std::size_t malformed = 0;

  std::size_t token_count() const;
  std::string plain_text() const;
};

/// Renders wikitext to sectioned plain-token form. Recognised meta constructs
/// become one special token each; unknown templates vanish; broken markup is
/// recovered from and counted, never fatal.
CleanDocument wikitext_to_plain(std::string_view markup, std::string_view title = {},
                                const SpecialTokens& vocab = default_special_tokens());

inline constexpr std::size_t kMaxSections = 16;
inline constexpr std::size_t kHeadTokens = 128;
inline constexpr std::size_t kTailTokens = 384;

/// Sections kept for the summarizer. `padding` counts the zero-vector slots that
/// precede the genuine sections so that padding + sections.size() == max_sections.
struct SectionSequence {
  std::vector<std::vector<std::string>> sections;
  std::size_t padding = 0;
  std::size_t max_sections = kMaxSections;
};

/// First `head` tokens followed by the last `tail` tokens once the input exceeds head + tail.
template <typename T>
std::vector<T> apply_token_budget(std::span<const T> tokens, std::size_t head = kHeadTokens,
                                  std::size_t tail = kTailTokens) {
  if (tokens.size() <= head + tail) return {tokens.begin(), tokens.end()};
  std::vector<T> out(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(head));
  out.insert(out.end(), tokens.end() - static_cast<std::ptrdiff_t>(tail), tokens.end());
  return out;
}

template <typename T>
std::vector<T> apply_token_budget(const std::vector<T>& tokens, std::size_t head = kHeadTokens,
                                  std::size_t tail = kTailTokens) {
  return apply_token_budget(std::span<const T>(tokens), head, tail);
}

/// Keeps the first `max_sections` sections in order, each cut to the token budget.
SectionSequence segment_sections(const CleanDocument& doc, std::size_t max_sections = kMaxSections);

/// Sentence boundaries: '.', '!' or '?' (plus trailing quotes/brackets) followed by
/// whitespace and an uppercase letter, unless the word before '.' is a known
/// abbreviation; a line break always ends a sentence; a trailing fragment counts.
std::vector<std::string> split_sentences(std::string_view text);

}  // namespace nwqm
