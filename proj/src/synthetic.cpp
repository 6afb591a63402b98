#include "nwqm/synthetic.hpp"

#include <array>
#include <fstream>

#include <fmt/format.h>

#include "nwqm/error.hpp"
#include "nwqm/quality.hpp"
#include "nwqm/random.hpp"

namespace nwqm {

namespace {

using WordList = std::array<std::string_view, 6>;

constexpr std::array<std::string_view, 40> kFiller = {
    "the",     "river",  "city",    "history", "early",  "built",   "population", "region", "known",  "during",
    "century", "local",  "area",    "later",   "first",  "village", "church",     "school", "near",   "north",
    "south",   "family", "work",    "team",    "season", "record",  "became",     "large",  "public", "water",
    "road",    "town",   "station", "group",   "number", "years",   "period",     "main",   "county", "state"};

constexpr std::array<WordList, kNumClasses> kTextWords = {{
    {"small", "minor", "little", "brief", "short", "few"},
    {"started", "basic", "initial", "outline", "rough", "partial"},
    {"moderate", "several", "developing", "average", "fair", "mixed"},
    {"detailed", "broad", "solid", "thorough", "extended", "substantial"},
    {"good", "reliable", "balanced", "verified", "careful", "accurate"},
    {"featured", "comprehensive", "exemplary", "definitive", "meticulous", "brilliant"},
}};

constexpr std::array<WordList, kNumClasses> kTalkWords = {{
    {"expand", "needs", "stub", "missing", "please", "help"},
    {"cleanup", "sources", "improve", "tag", "citation", "needed"},
    {"copyedit", "structure", "merge", "rewrite", "section", "unclear"},
    {"assessment", "review", "criteria", "checklist", "progress", "nearly"},
    {"nomination", "passed", "reviewer", "hold", "concerns", "addressed"},
    {"candidate", "promoted", "support", "oppose", "closing", "consensus"},
}};

constexpr std::array<std::string_view, 8> kPlaces = {"Alder", "Birch", "Cedar", "Dogwood",
                                                     "Elm",   "Fir",   "Gorse", "Hazel"};

std::string xml_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

int neighbour(int c, double noise, Rng& rng) {
  if (!rng.bernoulli(noise)) return c;
  if (c == 0) return 1;
  if (c == kNumClasses - 1) return c - 1;
  return rng.bernoulli(0.5) ? c - 1 : c + 1;
}

template <typename List>
std::string_view pick(const List& list, Rng& rng) {
  return list[rng.uniform_index(list.size())];
}

std::string sentence(int signal, Rng& rng, const std::array<WordList, kNumClasses>& words) {
  const std::size_t length = 6 + rng.uniform_index(5);
  const std::size_t marked = rng.uniform_index(length);
  std::string out;
  for (std::size_t w = 0; w < length; ++w) {
    std::string word(w == marked ? pick(words[static_cast<std::size_t>(signal)], rng) : pick(kFiller, rng));
    if (w == 0) word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
    if (!out.empty()) out += ' ';
    out += word;
  }
  return out + '.';
}

std::string article_text(const std::string& title, int signal, Rng& rng) {
  const auto c = static_cast<std::size_t>(signal);
  std::string text;
  if (signal >= 2) text += fmt::format("{{{{Infobox settlement|name={}|type=town}}}}\n", title);
  const std::size_t sections = std::min<std::size_t>(16, 1 + 2 * c + rng.uniform_index(3));
  for (std::size_t s = 0; s < sections; ++s) {
    if (s > 0) text += fmt::format("\n== {} {} ==\n", pick(kFiller, rng), s);
    if (signal >= 3 && rng.bernoulli(0.4)) text += "[[File:Example.jpg|thumb|A view]]\n";
    const std::size_t sentences = 2 + c / 2 + rng.uniform_index(3);
    for (std::size_t k = 0; k < sentences; ++k) {
      std::string sent = sentence(signal, rng, kTextWords);
      if (rng.bernoulli(0.12 * static_cast<double>(c))) {
        sent += fmt::format("<ref>{{{{cite web|title={}|url=http://example.org}}}}</ref>", pick(kFiller, rng));
      }
      if (rng.bernoulli(0.3)) sent += fmt::format(" See [[{}]].", pick(kPlaces, rng));
      text += sent + ' ';
    }
    text += '\n';
  }
  text += fmt::format("\n[[Category:{} places]]\n", pick(kPlaces, rng));
  return text;
}

std::string talk_text(int label, int signal, Rng& rng) {
  std::string text = fmt::format("{{{{WikiProject Places|class={}|importance=low}}}}\n", to_string(class_from_ordinal(label)));
  const std::size_t sentences = 2 + 3 * static_cast<std::size_t>(signal) + rng.uniform_index(4);
  for (std::size_t k = 0; k < sentences; ++k) {
    if (k % 3 == 0) text += fmt::format("\n== Topic {} ==\n", k / 3 + 1);
    text += sentence(signal, rng, kTalkWords) + '\n';
  }
  return text;
}

DumpPage page(std::string title, int ns, std::int64_t id, std::string text, std::string timestamp) {
  return DumpPage{std::move(title), ns, id, {DumpRevision{std::move(timestamp), std::move(text)}}};
}

}  // namespace

std::string to_dump_xml(const std::vector<DumpPage>& pages) {
  std::string out = "<mediawiki xmlns=\"http://www.mediawiki.org/xml/export-0.10/\" xml:lang=\"en\">\n";
  std::int64_t revision_id = 1;
  for (const auto& p : pages) {
    out += "  <page>\n";
    out += fmt::format("    <title>{}</title>\n    <ns>{}</ns>\n    <id>{}</id>\n", xml_escape(p.title), p.ns, p.id);
    for (const auto& r : p.revisions) {
      out += fmt::format("    <revision>\n      <id>{}</id>\n      <timestamp>{}</timestamp>\n", revision_id++,
                         r.timestamp);
      out += fmt::format("      <text xml:space=\"preserve\">{}</text>\n    </revision>\n", xml_escape(r.text));
    }
    out += "  </page>\n";
  }
  return out + "</mediawiki>\n";
}

SyntheticCorpus generate_synthetic(const SyntheticOptions& o) {
  if (o.pages_per_class == 0) throw ConfigError("synthetic.pages_per_class must be positive");
  if (o.image_dim <= 0) throw ConfigError("synthetic.image_dim must be positive");
  SyntheticCorpus corpus;
  corpus.images = EmbeddingStore(static_cast<std::uint32_t>(o.image_dim));
  Rng rng(o.seed);

  std::array<Vector, kNumClasses> centroids;
  for (auto& c : centroids) {
    c.resize(o.image_dim);
    for (Eigen::Index i = 0; i < o.image_dim; ++i) c(i) = rng.normal();
  }

  std::vector<DumpPage> pages;
  std::size_t serial = 0;
  for (std::size_t k = 0; k < o.pages_per_class; ++k) {
    for (int label = 0; label < kNumClasses; ++label) {
      const std::int64_t id = 1000 + static_cast<std::int64_t>(serial);
      const std::string title = fmt::format("{} {}", pick(kPlaces, rng), serial);
      const int text_signal = neighbour(label, o.text_noise, rng);
      const int talk_signal = neighbour(label, o.talk_noise, rng);
      const int image_signal = neighbour(label, o.image_noise, rng);

      DumpPage main = page(title, 0, id, article_text(title, text_signal, rng), "2021-03-01T12:00:00Z");
      if (o.distractors && serial % 7 == 3) {
        // A stale revision that must lose to the newer one.
        main.revisions.insert(main.revisions.begin(),
                              DumpRevision{"2015-06-01T08:00:00Z", "Old draft of " + title + "."});
      }
      pages.push_back(std::move(main));
      pages.push_back(page("Talk:" + title, 1, 100000 + id, talk_text(label, talk_signal, rng), "2021-03-02T12:00:00Z"));
      corpus.labels.emplace_back(id, label);

      if (!(o.distractors && serial % 13 == 5)) {
        Vector v = centroids[static_cast<std::size_t>(image_signal)];
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) += o.image_spread * rng.normal();
        const Eigen::VectorXf f = v.cast<float>();
        corpus.images.put(page_key(id), std::span<const float>(f.data(), static_cast<std::size_t>(f.size())));
      }
      ++serial;
    }
  }

  if (o.distractors) {
    pages.push_back(page("Old Alder name", 0, 90001, "#REDIRECT [[Alder 0]]", "2020-01-01T00:00:00Z"));
    pages.push_back(page("User:Example editor", 2, 90002, "I edit articles about towns.", "2020-01-01T00:00:00Z"));
    pages.push_back(page("Orphan article", 0, 90003, "An article without a talk page.", "2020-01-01T00:00:00Z"));
    pages.push_back(page("Talk:Lonely discussion", 1, 90004,
                         "{{WikiProject Places|class=B}}\nA talk page without an article.", "2020-01-01T00:00:00Z"));
    pages.push_back(page("Unassessed town", 0, 90005, "A town nobody assessed.", "2020-01-01T00:00:00Z"));
    pages.push_back(page("Talk:Unassessed town", 1, 90006, "{{WikiProject Places}}\nNo class yet.", "2020-01-01T00:00:00Z"));
  }

  // Mixed order: talk pages sometimes precede their article.
  rng.shuffle(pages);
  corpus.pages = std::move(pages);
  return corpus;
}

void write_synthetic(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream xml(dir / "dump.xml", std::ios::binary | std::ios::trunc);
  if (!xml) throw Error("cannot write " + (dir / "dump.xml").string());
  xml << to_dump_xml(corpus.pages);
  corpus.images.write(dir / "images.nwqm");
}

}  // namespace nwqm
