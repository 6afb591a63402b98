// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "nwqm/attribution.hpp"
#include "nwqm/dump_ingest.hpp"
#include "nwqm/evaluation.hpp"
#include "nwqm/synthetic.hpp"
#include "nwqm/wikitext.hpp"
#include "support.hpp"

using namespace nwqm;
namespace fs = std::filesystem;

namespace {

constexpr double kGradientTolerance = 1e-5;
constexpr double kGradientSeconds = 120.0;
constexpr int kGradientExamples = 3;
constexpr int kAttentionInstances = 1000;
constexpr double kAttentionTolerance = 1e-12;
constexpr double kManualTolerance = 1e-10;
constexpr int kOverfitEpochs = 200;
constexpr double kOverfitLossTolerance = 1e-6;
constexpr double kOverfitSeconds = 300.0;
constexpr double kSeparationAccuracy = 0.80;
constexpr int kSeparationSeeds = 3;
constexpr std::size_t kSeparationPagesPerClass = 40;
constexpr int kPairingDumps = 100;
constexpr std::size_t kPairingMaxPages = 1000;
constexpr int kBudgetTrials = 1000;
constexpr double kMcNemarTolerance = 1e-9;
constexpr double kChiSquareTolerance = 1e-3;
constexpr double kAttributionMass = 0.95;
constexpr double kAttributionCosine = 0.99;
constexpr std::size_t kAttributionSamples = 5000;
constexpr double kCrossEntropyTolerance = 1e-9;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
}

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  const auto start = Clock::now();
  const std::vector<Variant> variants = {Variant::kFull, Variant::kWithoutImage, Variant::kWithoutTalk,
                                         Variant::kWithoutTalkImage, Variant::kTalkOnly, Variant::kImageOnly};
  double worst = 0.0;
  std::string worst_at;
  int checked = 0;
  bool enough = true;
  for (Variant v : variants) {
    std::vector<Stage> stages = {Stage::kJoint};
    if (uses_text(v)) stages.insert(stages.end(), {Stage::kSummarizer, Stage::kPretrain});
    for (Stage stage : stages) {
      const auto r = test::gradient_suite(test::tiny_config(v), stage, kGradientExamples,
                                          1000 + 10 * static_cast<std::uint64_t>(v) + static_cast<std::uint64_t>(stage));
      enough = enough && r.accepted == kGradientExamples;
      checked += r.accepted;
      if (r.worst >= worst) {
        worst = r.worst;
        worst_at = fmt::format("{} {} {}", to_string(v), to_string(stage), r.worst_tensor);
      }
    }
  }
  const double elapsed = seconds_since(start);
  return {enough && worst <= kGradientTolerance && elapsed < kGradientSeconds,
          fmt::format("{} examples over 6 variants, worst relative error {:.3e} ({}), {:.1f} s", checked, worst,
                      worst_at, elapsed)};
}

Outcome attention_normalization() {
  Rng rng(7);
  double worst_sum = 0.0;
  double worst_uniform = 0.0;
  for (int i = 0; i < kAttentionInstances; ++i) {
    const int hidden = 1 + static_cast<int>(rng.uniform_index(8));
    const int width = 1 + static_cast<int>(rng.uniform_index(8));
    ParameterSet params;
    const auto att = register_attention(params, hidden, width);
    test::randomize(params, rng, 3.0);
    Tape tape(params);
    const std::size_t n = 1 + rng.uniform_index(24);
    std::vector<Var> states;
    for (std::size_t s = 0; s < n; ++s) {
      Vector h(hidden);
      for (Eigen::Index k = 0; k < h.size(); ++k) h(k) = rng.uniform(-5.0, 5.0);
      states.push_back(tape.constant(h));
    }
    worst_sum = std::max(worst_sum, std::abs(tape.value(attention_pool(tape, att, states).weights).sum() - 1.0));
    const std::vector<Var> same(n, states.front());
    const Vector alpha = tape.value(attention_pool(tape, att, same).weights);
    worst_uniform = std::max(worst_uniform, (alpha.array() - 1.0 / static_cast<double>(n)).abs().maxCoeff());
  }
  return {worst_sum <= kAttentionTolerance && worst_uniform <= kAttentionTolerance,
          fmt::format("{} instances, max |sum - 1| {:.1e}, max |alpha - 1/n| {:.1e}", kAttentionInstances, worst_sum,
                      worst_uniform)};
}

Outcome manual_oracle() {
  using M = test::ManualSummarizer;
  M m;
  Tape tape(m.params);
  std::vector<Var> inputs;
  for (const auto& x : M::inputs()) inputs.push_back(tape.constant(x));
  double worst = std::abs(
      tape.value(gru_cell(tape, m.summarizer.gru.forward, inputs[0], tape.zeros(1)))(0) - M::kSingleStep);
  const auto hidden = gru_bidirectional(tape, m.summarizer.gru, inputs);
  const auto projected = summarize(tape, m.summarizer, inputs, 0);
  const auto pooled_h = summarize(tape, m.summarizer, inputs, 0, {{AttentionPooling::kHidden}});
  for (int i = 0; i < 2; ++i) {
    for (int k = 0; k < 2; ++k) worst = std::max(worst, std::abs(tape.value(hidden[i])(k) - M::kHidden[i][k]));
    worst = std::max(worst, std::abs(tape.value(projected.weights)(i) - M::kAlpha[i]));
    worst = std::max(worst, std::abs(tape.value(projected.pooled)(i) - M::kPooled[i]));
    worst = std::max(worst, std::abs(tape.value(pooled_h.pooled)(i) - M::kPooledHidden[i]));
  }
  return {worst <= kManualTolerance, fmt::format("max deviation {:.1e} over GRU states, weights and pooled vectors", worst)};
}

Outcome overfit() {
  const auto start = Clock::now();
  test::TempDir dir;
  RunConfig c = test::config_in(dir.path());
  test::prepare_corpus(c, dir.path());
  const WorkLayout layout{c.paths.work_dir};
  std::vector<PreprocessedRecord> records;
  for (const char* s : {"train", "validation", "test"}) {
    const auto part = read_preprocessed(layout.preprocessed(s));
    records.insert(records.end(), part.begin(), part.end());
  }
  const Vocabulary vocab = build_vocabulary(records, c.vocab);
  const auto examples = ExampleBuilder(c, &vocab).build(records);

  ModelConfig mc = c.model;
  mc.dims.vocab_size = vocab.size();
  Model model(mc, c.seed);
  TrainConfig tc = c.train;
  tc.joint.epochs = kOverfitEpochs;
  const TrainResult r = train(model, examples, {}, tc);

  const auto rows = r.report.select(Stage::kJoint, "train");
  const double initial = rows.front().loss;
  int first_perfect = -1;
  for (const auto& row : rows) {
    if (row.accuracy == 1.0) {
      first_perfect = row.epoch;
      break;
    }
  }
  const double elapsed = seconds_since(start);
  const bool pass = examples.size() == 60 && rows.front().epoch == 0 &&
                    std::abs(initial - std::log(6.0)) <= kOverfitLossTolerance && first_perfect >= 0 &&
                    first_perfect <= kOverfitEpochs && elapsed < kOverfitSeconds;
  return {pass, fmt::format("{} pages, initial loss {:.9f} (ln 6 = {:.9f}), 100% training accuracy first at epoch "
                            "{}, {:.1f} s",
                            examples.size(), initial, std::log(6.0), first_perfect, elapsed)};
}

struct AblationRuns {
  std::map<Variant, std::vector<double>> accuracy;
  double seconds = 0.0;
};

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

std::string joined(const std::vector<double>& v) {
  std::string out;
  for (double x : v) out += fmt::format("{}{:.3f}", out.empty() ? "" : "/", x);
  return out;
}

// Full, w/oI and w/oT trained through the pipeline on a larger generated corpus per seed.
const AblationRuns& ablation_runs() {
  static const AblationRuns runs = [] {
    const auto start = Clock::now();
    AblationRuns out;
    for (int s = 1; s <= kSeparationSeeds; ++s) {
      test::TempDir dir;
      RunConfig c = test::config_in(dir.path());
      c.synthetic.pages_per_class = kSeparationPagesPerClass;
      c.synthetic.seed = 100 + static_cast<std::uint64_t>(s);
      c.set_seed(static_cast<std::uint64_t>(s));
      test::prepare_corpus(c, dir.path());
      for (Variant v : {Variant::kFull, Variant::kWithoutImage, Variant::kWithoutTalk}) {
        RunConfig vc = c;
        vc.model.fusion.variant = v;
        run_train(vc, test::null_stream());
        run_evaluate(vc, "test", std::nullopt, test::null_stream());
        std::ifstream in(WorkLayout{vc.paths.work_dir}.run(v) / "eval" / "metrics.json");
        const nlohmann::json m = nlohmann::json::parse(in);
        out.accuracy[v].push_back(m.at("accuracy").get<double>());
      }
    }
    out.seconds = seconds_since(start);
    return out;
  }();
  return runs;
}

Outcome separation() {
  const auto& runs = ablation_runs();
  const auto& full = runs.accuracy.at(Variant::kFull);
  const double avg = mean(full);
  return {avg >= kSeparationAccuracy,
          fmt::format("full variant test accuracy {} over seeds 1..{}, mean {:.3f} (chance 0.167), {} pages per class",
                      joined(full), kSeparationSeeds, avg, kSeparationPagesPerClass)};
}

Outcome ablation_ordering() {
  const auto& runs = ablation_runs();
  const double full = mean(runs.accuracy.at(Variant::kFull));
  const double no_image = mean(runs.accuracy.at(Variant::kWithoutImage));
  const double no_talk = mean(runs.accuracy.at(Variant::kWithoutTalk));
  return {full >= no_image && full >= no_talk,
          fmt::format("mean test accuracy full {:.3f} ({}), w/oI {:.3f} ({}), w/oT {:.3f} ({}); {:.1f} s for all runs",
                      full, joined(runs.accuracy.at(Variant::kFull)), no_image,
                      joined(runs.accuracy.at(Variant::kWithoutImage)), no_talk,
                      joined(runs.accuracy.at(Variant::kWithoutTalk)), runs.seconds)};
}

// Two passes over the generated pages: collect the first eligible occurrence of
// every main and talk key, then intersect.
std::set<std::pair<std::int64_t, std::int64_t>> oracle_pairs(const std::vector<DumpPage>& pages) {
  std::map<std::string, std::int64_t> main_first;
  std::map<std::string, std::int64_t> talk_first;
  for (const auto& p : pages) {
    // Latest timestamp, the later revision on a tie.
    const DumpRevision* latest = nullptr;
    for (const auto& r : p.revisions) {
      if (latest == nullptr || r.timestamp >= latest->timestamp) latest = &r;
    }
    const std::string text = latest == nullptr ? "" : latest->text;
    if (text.rfind("#REDIRECT", 0) == 0) continue;
    if (p.ns == 0) {
      main_first.emplace(p.title, p.id);
    } else if (p.ns == 1 && p.title.size() > 5 && p.title.rfind("Talk:", 0) == 0) {
      talk_first.emplace(p.title.substr(5), p.id);
    }
  }
  std::set<std::pair<std::int64_t, std::int64_t>> out;
  for (const auto& [key, id] : main_first) {
    const auto t = talk_first.find(key);
    if (t != talk_first.end()) out.emplace(id, t->second);
  }
  return out;
}

std::vector<DumpPage> random_dump(Rng& rng) {
  const std::size_t n = rng.uniform_index(kPairingMaxPages + 1);
  const std::size_t pool = 1 + rng.uniform_index(std::max<std::size_t>(1, n));
  std::vector<DumpPage> pages;
  for (std::size_t i = 0; i < n; ++i) {
    DumpPage p;
    p.id = static_cast<std::int64_t>(i + 1);
    const std::string key = fmt::format("Title {}", rng.uniform_index(pool));
    const double kind = rng.uniform();
    if (kind < 0.45) {
      p.ns = 0;
      p.title = key;
    } else if (kind < 0.9) {
      p.ns = 1;
      p.title = "Talk:" + key;
    } else if (kind < 0.95) {
      p.ns = 2;
      p.title = "User:" + key;
    } else {
      p.ns = 1;
      p.title = "Talk:";
    }
    const std::size_t revisions = 1 + rng.uniform_index(3);
    for (std::size_t r = 0; r < revisions; ++r) {
      const bool redirect = rng.bernoulli(0.05);
      p.revisions.push_back({fmt::format("20{:02}-01-01T00:00:00Z", rng.uniform_index(30)),
                             redirect ? "#REDIRECT [[Elsewhere]]" : fmt::format("text {}", rng.next() % 1000)});
    }
    pages.push_back(std::move(p));
  }
  return pages;
}

Outcome pairing_oracle() {
  Rng rng(99);
  int agreed = 0;
  std::size_t total_pairs = 0;
  std::size_t reversed = 0;
  std::size_t unmatched = 0;
  for (int d = 0; d < kPairingDumps; ++d) {
    auto pages = random_dump(rng);
    if (d % 2 == 1) std::reverse(pages.begin(), pages.end());
    PairingStats stats;
    const auto pairs = pair_main_talk(stream_pages(to_dump_xml(pages)), &stats);
    std::set<std::pair<std::int64_t, std::int64_t>> streamed;
    bool titles = true;
    std::map<std::int64_t, std::size_t> position;
    for (std::size_t i = 0; i < pages.size(); ++i) position.emplace(pages[i].id, i);
    for (const auto& p : pairs) {
      streamed.emplace(p.main.page_id, p.talk.page_id);
      titles = titles && p.talk.title == "Talk:" + p.main.title;
      if (position.at(p.talk.page_id) < position.at(p.main.page_id)) ++reversed;
    }
    unmatched += stats.unmatched;
    total_pairs += pairs.size();
    if (titles && streamed.size() == pairs.size() && streamed == oracle_pairs(pages)) ++agreed;
  }
  return {agreed == kPairingDumps && reversed > 0 && unmatched > 0,
          fmt::format("{}/{} dumps agree, {} pairs ({} talk-before-main), {} unmatched pages", agreed, kPairingDumps,
                      total_pairs, reversed, unmatched)};
}

Outcome token_budget() {
  Rng rng(5);
  int agreed = 0;
  for (int t = 0; t < kBudgetTrials; ++t) {
    const std::size_t len = rng.uniform_index(2049);
    std::vector<int> tokens(len);
    for (std::size_t i = 0; i < len; ++i) tokens[i] = static_cast<int>(i);
    std::vector<int> expected;
    if (len > 512) {
      expected.assign(tokens.begin(), tokens.begin() + 128);
      expected.insert(expected.end(), tokens.end() - 384, tokens.end());
    } else {
      expected = tokens;
    }
    if (apply_token_budget(tokens) == expected) ++agreed;
  }
  return {agreed == kBudgetTrials, fmt::format("{}/{} random lengths match head 128 + tail 384", agreed, kBudgetTrials)};
}

Outcome stuart_maxwell_checks() {
  Rng rng(17);
  double symmetric = 0.0;
  double mcnemar = 0.0;
  for (int t = 0; t < 100; ++t) {
    Matrix s(6, 6);
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j <= i; ++j) s(i, j) = s(j, i) = static_cast<double>(rng.uniform_index(30));
    }
    symmetric = std::max(symmetric, std::abs(stuart_maxwell(s).statistic));
    Matrix k2(2, 2);
    k2 << static_cast<double>(rng.uniform_index(60)), static_cast<double>(1 + rng.uniform_index(60)),
        static_cast<double>(rng.uniform_index(60)), static_cast<double>(rng.uniform_index(60));
    const double b = k2(0, 1), c = k2(1, 0);
    mcnemar = std::max(mcnemar, std::abs(stuart_maxwell(k2).statistic - (b - c) * (b - c) / (b + c)));
  }
  const double p = chi_square_survival(9.49, 4);
  return {symmetric == 0.0 && mcnemar <= kMcNemarTolerance && std::abs(p - 0.0499) <= kChiSquareTolerance,
          fmt::format("symmetric max statistic {:.1e}, McNemar max deviation {:.1e} over 100 tables, p(9.49, df 4) = "
                      "{:.5f}",
                      symmetric, mcnemar, p)};
}

double cosine(const Vector& a, const Vector& b) { return a.dot(b) / (a.norm() * b.norm()); }

Outcome attribution() {
  // Desk dimensions with a head that reads only the talk block.
  RunConfig rc = RunConfig::load(test::bundled_config());
  ModelConfig c = rc.model;
  c.dims.vocab_size = 50;
  c.fusion.mode = FusionMode::kConcat;
  Model model(c, 3);
  Rng rng(31);
  test::randomize(model.params(), rng, 0.3);
  Matrix& w = model.params()[model.params().id("head.hidden.weight")].value;
  w.leftCols(c.dims.page_dim()).setZero();
  w.rightCols(c.dims.image_proj_dim).setZero();
  std::vector<FeatureBlock> blocks;
  for (const auto& b : model.modality_blocks()) blocks.push_back({b.name, b.offset, b.size});
  const ScoreFn score = [&](const Vector& x) { return model.probabilities_from_modalities(x); };

  LimeOptions options;
  options.samples = kAttributionSamples;
  AttributionReport report;
  report.modalities = {"text", "talk", "image"};
  Vector linear_x;
  for (int p = 0; p < 6; ++p) {
    const Example ex = test::random_example(c.dims, rng, p);
    const Vector x = model.modality_input(ex);
    if (p == 0) linear_x = x;
    const LimeExplanation e = explain(score, x, options, static_cast<std::uint64_t>(p));
    report.add(class_from_ordinal(e.target), block_scores(e.weights, blocks, options.top_k));
  }
  report.finish();
  std::array<double, 3> mass{};
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    for (std::size_t m = 0; m < 3; ++m) mass[m] += report.mean[k][m];
  }
  const double talk_share = mass[1] / (mass[0] + mass[1] + mass[2]);

  // Exactly linear head over the same feature layout.
  Vector lw(linear_x.size());
  for (Eigen::Index i = 0; i < lw.size(); ++i) lw(i) = rng.uniform(-1.0, 1.0);
  const ScoreFn linear = [&](const Vector& x) {
    Vector out = Vector::Zero(kNumClasses);
    out(0) = 1000.0 + lw.dot(x);
    return out;
  };
  LimeOptions exact = options;
  exact.ridge = 1e-9;
  const double cos = cosine(explain(linear, linear_x, exact, 77).weights, lw.cwiseProduct(linear_x));

  return {talk_share >= kAttributionMass && cos >= kAttributionCosine,
          fmt::format("talk-only head: {:.3f} of the mass on talk ({} features, {} samples, 6 pages); linear head "
                      "cosine {:.6f}",
                      talk_share, linear_x.size(), kAttributionSamples, cos)};
}

Outcome cross_entropy_points() {
  ClassDistribution uniform;
  uniform.p.fill(1.0 / 6.0);
  ClassDistribution quarter;
  quarter.p.fill(0.15);
  quarter.p[3] = 0.25;
  const double a = cross_entropy(uniform, QualityClass::kC).loss;
  const double b = cross_entropy(quarter, QualityClass::kB).loss;
  ParameterSet none;
  Tape tape(none);
  const double c = tape.scalar(tape.softmax_cross_entropy(tape.zeros(6), 4));
  const double worst = std::max({std::abs(a - std::log(6.0)), std::abs(b - std::log(4.0)), std::abs(c - std::log(6.0))});
  return {worst <= kCrossEntropyTolerance,
          fmt::format("uniform {:.12f}, p = 0.25 {:.12f}, zero logits {:.12f}; max deviation {:.1e}", a, b, c, worst)};
}

// Every file under `root`, relative path to bytes.
std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file()) out.emplace(fs::relative(entry.path(), root).string(), test::slurp(entry.path()));
  }
  return out;
}

Outcome determinism() {
  const auto run = [](const fs::path& root) {
    const RunConfig c = test::config_in(root);
    test::prepare_corpus(c, root);
    run_train(c, test::null_stream());
    run_evaluate(c, "test", std::nullopt, test::null_stream());
    run_report(c, {}, test::null_stream());
    return snapshot(root);
  };
  test::TempDir a;
  test::TempDir b;
  const auto first = run(a.path());
  const auto second = run(b.path());
  std::size_t differing = 0;
  for (const auto& [name, bytes] : first) {
    const auto it = second.find(name);
    if (it == second.end() || it->second != bytes) ++differing;
  }
  const bool has = first.contains("work/runs/full/model.ckpt") && first.contains("work/runs/full/loss_report.tsv") &&
                   first.contains("work/report.tsv");
  return {has && differing == 0 && first.size() == second.size(),
          fmt::format("{} artifacts compared (checkpoint, loss report, evaluation, report), {} differ", first.size(),
                      differing)};
}

}  // namespace

int main() {
  report("gradient suite", gradient_suite);
  report("attention normalization", attention_normalization);
  report("manual GRU and attention oracle", manual_oracle);
  report("overfit check", overfit);
  report("separation check", separation);
  report("ablation ordering", ablation_ordering);
  report("pairing oracle", pairing_oracle);
  report("token budget", token_budget);
  report("Stuart-Maxwell", stuart_maxwell_checks);
  report("attribution oracles", attribution);
  report("cross-entropy analytic points", cross_entropy_points);
  report("determinism", determinism);
  std::cout << (failures == 0 ? "all criteria passed" : fmt::format("{} criteria failed", failures)) << std::endl;
  return failures == 0 ? 0 : 1;
}
