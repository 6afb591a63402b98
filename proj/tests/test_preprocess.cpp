#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "nwqm/corpus_io.hpp"
#include "nwqm/random.hpp"
#include "nwqm/wikitext.hpp"
#include "support.hpp"

using namespace nwqm;

namespace {

std::vector<std::string> all_tokens(const CleanDocument& doc) {
  std::vector<std::string> out;
  for (const auto& s : doc.sections) out.insert(out.end(), s.tokens.begin(), s.tokens.end());
  return out;
}

std::string n_sections(std::size_t n) {
  std::string text = "Lead words.\n";
  for (std::size_t i = 1; i < n; ++i) text += "== Part " + std::to_string(i) + " ==\nBody " + std::to_string(i) + ".\n";
  return text;
}

}  // namespace

TEST_CASE("wikilinks become a special token followed by the label") {
  const auto doc = wikitext_to_plain("[[Apple]] pie");
  const std::vector<std::string> expected = {"<wikilink>", "Apple", "pie"};
  CHECK(all_tokens(doc) == expected);
}

TEST_CASE("piped wikilinks keep the display text") {
  const auto doc = wikitext_to_plain("[[Malus domestica|Apple]] pie");
  const std::vector<std::string> expected = {"<wikilink>", "Apple", "pie"};
  CHECK(all_tokens(doc) == expected);
}

TEST_CASE("a level-two heading opens a section") {
  const auto doc = wikitext_to_plain("Intro.\n== History ==\nOld times.");
  REQUIRE(doc.sections.size() == 2);
  CHECK(doc.sections[0].heading.empty());
  CHECK(doc.sections[1].heading == "History");
  CHECK(doc.sections[1].level == 2);
  const auto& t = doc.sections[1].tokens;
  CHECK(std::find(t.begin(), t.end(), "<h2>") != t.end());
}

TEST_CASE("deeper headings map to the level-two token") {
  const auto doc = wikitext_to_plain("=== Details ===\nx");
  const auto tokens = all_tokens(doc);
  CHECK(std::find(tokens.begin(), tokens.end(), "<h2>") != tokens.end());
}

TEST_CASE("empty markup gives one empty lead section") {
  const auto doc = wikitext_to_plain("");
  REQUIRE(doc.sections.size() == 1);
  CHECK(doc.sections[0].heading.empty());
  CHECK(doc.sections[0].tokens.empty());
}

TEST_CASE("meta constructs map to special tokens and delimiters disappear") {
  const std::string markup =
      "{{Infobox town|name=X|pop=3}}\n"
      "Text<ref>{{cite web|url=http://a.b}}</ref> more [http://example.org site].\n"
      "[[File:Pic.jpg|thumb|caption]]\n"
      "== History ==\n"
      "{{Quote|Words here}}\n"
      "{{unknown template|x=1}}\n"
      "[[Category:Towns]]";
  const auto doc = wikitext_to_plain(markup);
  const auto tokens = all_tokens(doc);
  const auto has = [&](const char* t) { return std::find(tokens.begin(), tokens.end(), t) != tokens.end(); };
  CHECK(has("<infobox>"));
  CHECK(has("<ref>"));
  CHECK(has("<extlink>"));
  CHECK(has("<image>"));
  CHECK(has("<quote>"));
  CHECK(has("<category>"));
  CHECK_FALSE(has("unknown"));
  const auto& specials = default_special_tokens();
  for (const auto& t : tokens) {
    CHECK(t != "[");
    CHECK(t != "{");
    CHECK(t != "=");
    if (t.size() > 1 && t.front() == '<') CHECK(specials.contains(t));
  }
}

TEST_CASE("broken markup is recovered and counted") {
  const auto doc = wikitext_to_plain("Start [[unclosed link and {{open template");
  CHECK(doc.malformed > 0);
  CHECK_FALSE(doc.sections.empty());
}

TEST_CASE("plain text passes through unchanged") {
  Rng rng(2);
  const std::vector<std::string> words = {"river", "Town", "old", "bridge", "north", "42", "station", "A1"};
  for (int trial = 0; trial < 50; ++trial) {
    std::string text;
    std::vector<std::string> expected;
    const std::size_t n = 1 + rng.uniform_index(30);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string& w = words[rng.uniform_index(words.size())];
      if (!text.empty()) text += rng.bernoulli(0.2) ? "  " : " ";
      text += w;
      expected.push_back(w);
    }
    CHECK(all_tokens(wikitext_to_plain(text)) == expected);
    CHECK(tokenize(text) == expected);
  }
}

TEST_CASE("tokenizer splits punctuation into single tokens") {
  const std::vector<std::string> expected = {"Hello", ",", "world", "!", "a", "<", "b", ">"};
  CHECK(tokenize("Hello, world! a<b>") == expected);
}

TEST_CASE("section segmentation") {
  SUBCASE("twenty sections keep the first sixteen") {
    const auto seq = segment_sections(wikitext_to_plain(n_sections(20)));
    REQUIRE(seq.sections.size() == 16);
    CHECK(seq.padding == 0);
    const auto& last = seq.sections.back();
    CHECK(std::find(last.begin(), last.end(), "15") != last.end());
  }
  SUBCASE("three sections get thirteen pad slots") {
    const auto seq = segment_sections(wikitext_to_plain(n_sections(3)));
    CHECK(seq.sections.size() == 3);
    CHECK(seq.padding == 13);
  }
  SUBCASE("exactly sixteen is unchanged") {
    const auto doc = wikitext_to_plain(n_sections(16));
    const auto seq = segment_sections(doc);
    REQUIRE(seq.sections.size() == 16);
    CHECK(seq.padding == 0);
    for (std::size_t i = 0; i < 16; ++i) CHECK(seq.sections[i] == doc.sections[i].tokens);
  }
  SUBCASE("any count") {
    for (std::size_t n = 1; n <= 24; ++n) {
      const auto seq = segment_sections(wikitext_to_plain(n_sections(n)));
      CHECK(seq.sections.size() == std::min<std::size_t>(n, 16));
      CHECK(seq.sections.size() + seq.padding == 16);
    }
  }
}

TEST_CASE("token budget examples") {
  std::vector<int> tokens(600);
  std::iota(tokens.begin(), tokens.end(), 0);
  const auto cut = apply_token_budget(tokens);
  REQUIRE(cut.size() == 512);
  CHECK(cut[0] == 0);
  CHECK(cut[127] == 127);
  CHECK(cut[128] == 216);
  CHECK(cut.back() == 599);

  const std::vector<int> short_input(tokens.begin(), tokens.begin() + 400);
  CHECK(apply_token_budget(short_input) == short_input);
  const std::vector<int> exact(tokens.begin(), tokens.begin() + 512);
  CHECK(apply_token_budget(exact) == exact);
}

TEST_CASE("token budget output is an order-preserving subsequence of length min(n, 512)") {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = rng.uniform_index(1500);
    std::vector<std::size_t> tokens(n);
    std::iota(tokens.begin(), tokens.end(), std::size_t{0});
    const auto cut = apply_token_budget(tokens);
    CHECK(cut.size() == std::min<std::size_t>(n, 512));
    CHECK(std::is_sorted(cut.begin(), cut.end()));
    CHECK(std::adjacent_find(cut.begin(), cut.end()) == cut.end());
  }
}

TEST_CASE("sentence splitting") {
  CHECK(split_sentences("A. B? C!").size() == 3);
  CHECK(split_sentences("").empty());
  CHECK(split_sentences("no terminator here") == std::vector<std::string>{"no terminator here"});
  CHECK(split_sentences("See e.g. Smith. Then more.").size() == 2);
  CHECK(split_sentences("Dr. Who arrived. He left.").size() == 2);
  CHECK(split_sentences("lowercase. follows here").size() == 1);
  CHECK(split_sentences("first line\nsecond line").size() == 2);
  CHECK(split_sentences("He said \"Stop.\" Then went.").size() == 2);
}

TEST_CASE("preprocessing a record") {
  CorpusRecord r;
  r.page_id = 5;
  r.title = "Town";
  r.label = QualityClass::kB;
  r.main_text = n_sections(3);
  r.talk_text = "{{WikiProject Places|class=B}}\n== Review ==\nLooks fine. Needs sources.\n";
  const auto p = preprocess_record(r);
  CHECK(p.sections.size() == 3);
  CHECK(p.padding == 13);
  CHECK(p.talk_sentences.size() >= 2);
  CHECK(p.main_tokens > 0);
  CHECK_FALSE(p.empty_main);

  r.main_text = "";
  CHECK(preprocess_record(r).empty_main);
}

TEST_CASE("preprocessed records round-trip through JSON lines") {
  test::TempDir dir;
  CorpusRecord r;
  r.page_id = 9;
  r.title = "Quote \"town\"";
  r.label = QualityClass::kGA;
  r.main_text = n_sections(18);
  r.talk_text = "One. Two.";
  const auto p = preprocess_record(r);
  write_preprocessed(dir / "p.jsonl", {p});
  const auto back = read_preprocessed(dir / "p.jsonl");
  REQUIRE(back.size() == 1);
  CHECK(back[0].title == p.title);
  CHECK(back[0].label == p.label);
  CHECK(back[0].sections.size() == p.sections.size());
  CHECK(back[0].page_tokens == p.page_tokens);
  CHECK(back[0].talk_sentences == p.talk_sentences);

  write_corpus(dir / "c.jsonl", {r});
  const auto corpus = read_corpus(dir / "c.jsonl");
  REQUIRE(corpus.size() == 1);
  CHECK(corpus[0].main_text == r.main_text);
  CHECK(corpus[0].label == QualityClass::kGA);
}

TEST_CASE("a corrupt preprocessed line names the file and line") {
  test::TempDir dir;
  {
    std::ofstream out(dir / "bad.jsonl");
    out << "{not json\n";
  }
  try {
    read_preprocessed(dir / "bad.jsonl");
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("bad.jsonl:1") != std::string::npos);
  }
}
