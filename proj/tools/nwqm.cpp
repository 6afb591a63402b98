// Command-line entry point: synth | ingest | preprocess | train | evaluate | attribute | report.
//
// Exit status: 0 success, 1 configuration or usage error, 2 missing prerequisite
// artifact, 3 output directory locked, 4 any other failure.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nwqm/config.hpp"
#include "nwqm/error.hpp"
#include "nwqm/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 1, kMissing = 2, kLocked = 3, kFailure = 4 };

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal Wikipedia article quality pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string variant;
  std::string mode;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--seed", seed, "Override the master seed");
  app.add_option("--variant", variant, "full | w/oI | w/oT | w/oTI | talk-only | image-only");
  app.add_option("--mode", mode, "Fusion mode, e.g. \"u,v,|u-v|\"");

  std::string synth_out = "synthetic";
  auto* synth = app.add_subcommand("synth", "Write the seeded synthetic dump and image store");
  synth->add_option("--out", synth_out, "Output directory")->capture_default_str();

  auto* ingest = app.add_subcommand("ingest", "Stream dumps, pair and label pages, balance and split");
  auto* preprocess = app.add_subcommand("preprocess", "Convert wikitext to sectioned token records");
  auto* train = app.add_subcommand("train", "Train the configured variant");

  std::string split = "test";
  std::string compare;
  auto* evaluate = app.add_subcommand("evaluate", "Score a trained variant on a split");
  evaluate->add_option("--split", split, "train | validation | test")->capture_default_str();
  evaluate->add_option("--compare", compare, "Second trained variant for the Stuart-Maxwell test");

  auto* attribute = app.add_subcommand("attribute", "Per-modality attribution with a local surrogate");

  std::vector<std::string> report_variants;
  auto* report = app.add_subcommand("report", "Collate evaluated variants into an accuracy table");
  report->add_option("--variants", report_variants, "Variants to include (default: every evaluated one)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    nwqm::RunConfig config;
    if (!config_path.empty()) config = nwqm::RunConfig::load(nwqm::resolve_input(config_path));
    if (seed) config.set_seed(*seed);
    if (!variant.empty()) config.model.fusion.variant = nwqm::parse_variant(variant);
    if (!mode.empty()) config.model.fusion.mode = nwqm::parse_fusion_mode(mode);
    config.model.validate();

    if (*synth) {
      nwqm::run_synth(config, synth_out, std::cout);
    } else if (*ingest) {
      nwqm::run_ingest(config, std::cout);
    } else if (*preprocess) {
      nwqm::run_preprocess(config, std::cout);
    } else if (*train) {
      nwqm::run_train(config, std::cout);
    } else if (*evaluate) {
      std::optional<nwqm::Variant> other;
      if (!compare.empty()) other = nwqm::parse_variant(compare);
      if (split != "train" && split != "validation" && split != "test") {
        throw nwqm::ConfigError("--split must be train, validation or test");
      }
      nwqm::run_evaluate(config, split, other, std::cout);
    } else if (*attribute) {
      nwqm::run_attribute(config, std::cout);
    } else if (*report) {
      std::vector<nwqm::Variant> variants;
      for (const auto& v : report_variants) variants.push_back(nwqm::parse_variant(v));
      nwqm::run_report(config, variants, std::cout);
    }
  } catch (const nwqm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const nwqm::MissingArtifactError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kMissing;
  } catch (const nwqm::LockHeldError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kLocked;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}
