#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>

#include "fixtures.hpp"
#include "pipeline_fixture.hpp"
#include "wsindex/digest.hpp"
#include "wsindex/label_matrix.hpp"

using namespace wsindex;

namespace {

struct Result {
  int code = -1;
  std::string output;
};

// Runs the command line tool inside `dir`, capturing stdout and stderr.
Result cli(const std::filesystem::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" WSINDEX_CLI_PATH "' " + args + " 2>&1";
  Result r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  std::array<char, 4096> buf{};
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) r.output.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

Result ok(const std::filesystem::path& dir, const std::string& args) {
  auto r = cli(dir, args);
  INFO(args << "\n" << r.output);
  CHECK(r.code == 0);
  return r;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("subcommands chain into a full experiment") {
    fixtures::TempDir tmp;
    const auto& d = tmp.path();
    ok(d, "synth --articles 150 --seed 2 --miss-rate 0.2 --out-dir data");
    ok(d, "annotate --descriptor data/thesaurus.json --corpus data/corpus.jsonl --out occ.jsonl");
    ok(d, "weaklabel --descriptor data/thesaurus.json --corpus data/corpus.jsonl --occurrences occ.jsonl "
          "--out weak.csv --targets-out targets.json");
    ok(d, "split --descriptor data/thesaurus.json --weak weak.csv --ma1 20 --ma2 20 --seed 1 "
          "--undersample-target 30 --out split.json");
    ok(d, "featurize --corpus data/corpus.jsonl --occurrences occ.jsonl --split split.json --set ws "
          "--out raw.json");
    ok(d, "select --features raw.json --weak weak.csv --descriptor data/thesaurus.json --split split.json "
          "--set ws --method chi2 -k 25 --report selected.csv --out reduced.json");
    ok(d, "train --features reduced.json --labels weak.csv --split split.json --set ws "
          "--descriptor data/thesaurus.json --classifier logreg --penalty l2 -C 1 --seed 3 --out model.json");
    ok(d, "predict --model model.json --features reduced.json --split split.json --set ma2 --out pred.csv");
    ok(d, "baseline --kind WSLabels --descriptor data/thesaurus.json --weak weak.csv --split split.json "
          "--set ma2 --out wslabels.csv");
    const auto ev = ok(d, "evaluate --pred pred.csv --golden data/golden.csv --csv eval.csv --json eval.json");
    CHECK(ev.output.find("macro") != std::string::npos);
    const auto cv = ok(d, "cv --features raw.json --weak weak.csv --descriptor data/thesaurus.json "
                          "--split split.json --set ws -k 25 --folds 3 --seed 1");
    CHECK(cv.output.find("mean") != std::string::npos);
    ok(d, "relabel --model model.json --features reduced.json --labels weak.csv --split split.json "
          "--set ws --out retrained.json --labels-out relabeled.csv");

    const auto pred = load_label_matrix(d / "pred.csv", LabelMatrix::Kind::Predicted);
    CHECK(pred.rows() == 20);
    CHECK(read_file(d / "selected.csv").rfind("rank,kind,key", 0) == 0);
    CHECK(std::filesystem::exists(d / "retrained.json"));

    // the same step twice gives byte-identical output
    ok(d, "train --features reduced.json --labels weak.csv --split split.json --set ws "
          "--descriptor data/thesaurus.json --classifier logreg --penalty l2 -C 1 --seed 3 --out model2.json");
    CHECK(read_file(d / "model.json") == read_file(d / "model2.json"));
  }

  TEST_CASE("run prints one status line per stage") {
    fixtures::TempDir tmp;
    SyntheticSpec spec;
    spec.n_articles = 120;
    spec.seed = 8;
    spec.miss_rate = 0.2;
    fixtures::write_synthetic_inputs(tmp / "data", spec);
    fixtures::write_config(tmp / "cfg.json", fixtures::small_config(tmp / "data", tmp / "out"));
    const auto r = ok(tmp.path(), "run cfg.json");
    CHECK(r.output.find("ingest\tran") != std::string::npos);
    CHECK(r.output.find("evaluate\tran") != std::string::npos);
    CHECK(ok(tmp.path(), "run cfg.json").output.find("train\tcached") != std::string::npos);

    auto bad = fixtures::small_config(tmp / "data", tmp / "out2");
    bad["selector"]["k"] = {100000};
    fixtures::write_config(tmp / "bad.json", bad);
    const auto fail = cli(tmp.path(), "run bad.json");
    CHECK(fail.code != 0);
    CHECK(fail.output.find("[run:select]") != std::string::npos);
  }

  TEST_CASE("exit codes and stage-tagged errors") {
    fixtures::TempDir tmp;
    ok(tmp.path(), "synth --articles 30 --seed 1 --out-dir data");
    ok(tmp.path(), "annotate --descriptor data/thesaurus.json --corpus data/corpus.jsonl --out occ.jsonl");
    ok(tmp.path(), "weaklabel --descriptor data/thesaurus.json --corpus data/corpus.jsonl "
                   "--occurrences occ.jsonl --out weak.csv");

    const auto validation = cli(tmp.path(), "split --descriptor data/thesaurus.json --weak weak.csv "
                                            "--ma1 1000 --seed 1 --out s.json");
    CHECK(validation.code == 2);
    CHECK(validation.output.rfind("[split]", 0) == 0);

    const auto parse = cli(tmp.path(), "annotate --descriptor data/corpus.jsonl --corpus data/corpus.jsonl "
                                       "--out x.jsonl");
    CHECK(parse.code == 3);
    CHECK(parse.output.rfind("[annotate] parse error", 0) == 0);

    write_file_atomic(tmp / "bad.xml", "<PubmedArticleSet><PubmedArticle>");
    const auto xml = cli(tmp.path(), "import bad.xml --out c.jsonl");
    CHECK(xml.code == 3);
    CHECK(xml.output.find("byte") != std::string::npos);

    CHECK(cli(tmp.path(), "nonsense").code != 0);
    CHECK(cli(tmp.path(), "train --features missing.json --labels weak.csv --seed 1 --out m.json").code != 0);
  }

  TEST_CASE("fetch reports network failures with exit code 4") {
    fixtures::TempDir tmp;
    // nothing listens on port 9 of the loopback interface
    const std::string env = "EUTILS_ENDPOINT=http://127.0.0.1:9/eutils NCBI_RATE_LIMIT=100 ";
    const std::string cmd = "cd '" + tmp.path().string() + "' && " + env + "'" WSINDEX_CLI_PATH
                            "' fetch --term x --out c.jsonl 2>&1";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe);
    std::string out;
    std::array<char, 1024> buf{};
    while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), n);
    const int status = ::pclose(pipe);
    CHECK(WEXITSTATUS(status) == 4);
    CHECK(out.rfind("[fetch]", 0) == 0);
  }
}
