// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "seqtag/pipeline.hpp"

using namespace seqtag;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kWork = "cli_work";

std::string cli() {
  const char* p = std::getenv("SEQTAG_CLI");
  REQUIRE(p != nullptr);
  return p;
}

int run(const std::string& args, const std::string& stdin_file = "") {
  std::string cmd = cli() + " " + args;
  if (!stdin_file.empty()) cmd += " < " + stdin_file;
  cmd += " > " + std::string(kWork) + "/out.txt 2> " + std::string(kWork) + "/err.txt";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string out_text() { return slurp(std::string(kWork) + "/out.txt"); }
std::string err_text() { return slurp(std::string(kWork) + "/err.txt"); }

// A desk-scale-in-miniature experiment: tiny core, 5% budgets, short runs.
const char* kConfig = R"({
  "seed": 7,
  "corpus_dir": "cli_work/corpus",
  "bundle_path": "cli_work/model.bundle",
  "reports_path": "cli_work/reports.json",
  "encoder": {"n_layers": 1, "d_model": 16, "n_heads": 2, "d_ff": 32, "max_seq_len": 64},
  "adapter": {"kind": "prefix", "prefix_len": 4},
  "train": {"lr": 5e-3, "max_epochs": 2, "pooled_epochs": 1, "batch_size": 8},
  "pretrain": {"lr": 1e-3, "epochs": 1},
  "router": {"group_size": 4, "max_tokens": 64, "lr": 2e-2, "max_epochs": 2, "patience": 2},
  "synth": {"budget_scale": 0.05, "vocab_size": 120},
  "grid": {"min": 2, "max": 10, "coarse_step": 4, "refine_radius": 2}
})";

std::string config_path() {
  static bool written = false;
  const std::string path = std::string(kWork) + "/config.json";
  if (!written) {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
    std::ofstream(path) << kConfig;
    written = true;
  }
  return path;
}

// synth + train happen once; later cases reuse the artifacts.
void ensure_trained() {
  static bool done = false;
  if (done) return;
  REQUIRE(run("synth --config " + config_path()) == 0);
  REQUIRE(run("train --config " + config_path()) == 0);
  done = true;
}

}  // namespace

TEST_CASE("synth writes per-domain files and a manifest, deterministically") {
  REQUIRE(run("synth --config " + config_path()) == 0);
  int files = 0;
  for ([[maybe_unused]] const auto& e :
       fs::directory_iterator(std::string(kWork) + "/corpus/train")) {
    ++files;
  }
  CHECK(files == 12);
  const std::string manifest1 = slurp(std::string(kWork) + "/corpus/manifest.json");
  const std::string news1 = slurp(std::string(kWork) + "/corpus/train/news.conll");
  REQUIRE(run("synth --config " + config_path()) == 0);
  CHECK(manifest1 == slurp(std::string(kWork) + "/corpus/manifest.json"));
  CHECK(news1 == slurp(std::string(kWork) + "/corpus/train/news.conll"));
}

TEST_CASE("invalid config values exit nonzero with a message on stderr") {
  const std::string bad = std::string(kWork) + "/bad.json";
  std::ofstream(bad) << R"({"seed": 1, "synth": {"ambiguity_rate": 3.0},
                           "corpus_dir": "cli_work/bad_corpus"})";
  CHECK(run("synth --config " + bad) != 0);
  CHECK(err_text().find("ambiguity_rate") != std::string::npos);
  CHECK(run("synth --config cli_work/no_such_config.json") != 0);
  CHECK(!err_text().empty());
}

TEST_CASE("train produces a complete bundle") {
  ensure_trained();
  const Bundle b = load_bundle(std::string(kWork) + "/model.bundle");
  CHECK(b.registry.domains().size() == 12);
  CHECK(b.registry.head_ids().size() == 2);
  CHECK(b.registry.adapter_ids().size() == 12);
  REQUIRE(b.router != nullptr);
  CHECK(b.router->domains.size() == 12);
  CHECK(fs::exists(std::string(kWork) + "/model.bundle.vocab"));
  const auto reports = json::parse(slurp(std::string(kWork) + "/reports.json"));
  CHECK(reports.contains("pretrain"));
  CHECK(reports["finetune"].size() == 12);
  CHECK(reports["router"].contains("dev_accuracy"));
}

TEST_CASE("train is byte-deterministic under a fixed seed") {
  ensure_trained();
  const std::string first = slurp(std::string(kWork) + "/model.bundle");
  REQUIRE(run("train --config " + config_path()) == 0);
  CHECK(first == slurp(std::string(kWork) + "/model.bundle"));
}

TEST_CASE("tag --domain emits one tagged line per input token") {
  ensure_trained();
  const std::string input = std::string(kWork) + "/input.conll";
  std::ofstream(input) << "alpha\nbeta\ngamma\n\ndelta\nepsilon\n";
  REQUIRE(run("tag --config " + config_path() + " --domain news", input) == 0);
  std::istringstream out(out_text());
  std::string line;
  int tagged = 0;
  while (std::getline(out, line)) {
    if (line.empty()) continue;
    CHECK(line.find('\t') != std::string::npos);
    ++tagged;
  }
  CHECK(tagged == 5);
}

TEST_CASE("tag with an unknown domain exits with the domain list") {
  ensure_trained();
  const std::string input = std::string(kWork) + "/input.conll";
  std::ofstream(input) << "alpha\n";
  CHECK(run("tag --config " + config_path() + " --domain mars", input) != 0);
  CHECK(err_text().find("news") != std::string::npos);
  CHECK(run("tag --config " + config_path(), input) != 0);
}

TEST_CASE("tag --route produces valid BIO and routing records") {
  ensure_trained();
  const std::string input = std::string(kWork) + "/route_input.conll";
  std::ofstream(input) << "alpha\nbeta\n\ngamma\ndelta\n\nepsilon\n";
  REQUIRE(run("tag --config " + config_path() + " --route", input) == 0);
  std::istringstream out(out_text());
  std::string line;
  std::vector<std::string> labels;
  int tagged = 0;
  while (std::getline(out, line)) {
    if (line.empty()) continue;
    labels.push_back(line.substr(line.find('\t') + 1));
    ++tagged;
  }
  CHECK(tagged == 5);
  CHECK(is_valid_bio(labels));
  CHECK(err_text().find("# group") != std::string::npos);
}

TEST_CASE("eval emits a table covering every corpus domain") {
  ensure_trained();
  REQUIRE(run("eval --config " + config_path()) == 0);
  const std::string text = out_text();
  const auto table = json::parse(text.substr(0, text.find("\nmodel") + 1));
  REQUIRE(table.contains("multi-prefix"));
  CHECK(table["multi-prefix"].size() == 12);
  for (const auto& [domain, f1] : table["multi-prefix"].items()) {
    CHECK(f1.get<double>() >= 0.0);
    CHECK(f1.get<double>() <= 1.0);
  }
}

TEST_CASE("gridsearch reports a best point inside the range with a full table") {
  ensure_trained();
  REQUIRE(run("gridsearch --config " + config_path()) == 0);
  const auto j = json::parse(out_text());
  const int best = j["best"]["prefix_len"].get<int>();
  CHECK(best >= 2);
  CHECK(best <= 10);
  CHECK(j["table"].size() >= 3);
}
