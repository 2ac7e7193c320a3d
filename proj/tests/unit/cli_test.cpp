// Copyright 2026 The Rosetta Mining Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <sstream>

#include "rosetta/cli.hpp"
#include "rosetta/json_util.hpp"
#include "test_util.hpp"

namespace rosetta {
namespace {

using testing::TempDir;

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const Outcome o = cli({"toy", "--out", root(), "--instances", "12", "--gen-layers", "6:4x4,4:8x8",
                           "--disc-layers", "5:8x8", "--models", "2", "--planted", "2", "--chunk", "5",
                           "--images", "16"});
    ASSERT_EQ(o.code, 0) << o.err;
  }
  std::string root() const { return dir.path().string(); }
  std::string at(const std::string& name) const { return (dir / name).string(); }

  TempDir dir;
};

TEST_F(CliTest, ValidateSummarizesDump) {
  const Outcome o = cli({"validate", "--dump", at("gen")});
  EXPECT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(o.out, "ok: dump 'gen' (generative), dataset 'toy', 12 instances, 2 layers, 10 units\n");
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_EQ(cli({"match", "--dump-a", at("gen")}).code, 2);
  EXPECT_EQ(cli({"validate"}).code, 2);
  EXPECT_EQ(cli({"toy", "--out", at("x"), "--gen-layers", "four"}).code, 2);
  const Outcome o = cli({"stats", "--dump", at("gen"), "--threads", "0"});
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("usage error"), std::string::npos);
  EXPECT_EQ(cli({"--version"}).out, std::string(cli::kToolVersion) + "\n");
}

TEST_F(CliTest, LibraryErrorsExitOneWithKind) {
  ASSERT_EQ(cli({"toy", "--out", at("other"), "--instances", "7"}).code, 0);
  const Outcome o = cli({"match", "--dump-a", at("gen"), "--dump-b", at("other/disc1"), "--out", at("m.json")});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("InstanceCountMismatch"), std::string::npos) << o.err;
  const Outcome missing = cli({"validate", "--dump", at("nowhere")});
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.err.find("MissingFile"), std::string::npos) << missing.err;
}

TEST_F(CliTest, MatchDefaultsAndProvenance) {
  ASSERT_EQ(cli({"match", "--dump-a", at("gen"), "--dump-b", at("disc1"), "--out", at("m.json"), "-j", "2"}).code, 0);
  const auto doc = json_util::read_file(at("m.json"));
  EXPECT_EQ(doc["k"], 5);
  EXPECT_EQ(doc["policy"], "pairwise-max");
  EXPECT_EQ(doc["rank"], "descending");
  EXPECT_EQ(doc["entries"].size(), 10u);
  EXPECT_EQ(doc["entries"][0]["neighbors"].size(), 5u);
  const auto& prov = doc["provenance"];
  EXPECT_EQ(prov["subcommand"], "match");
  EXPECT_EQ(prov["version"], cli::kToolVersion);
  EXPECT_EQ(prov["argv"], nlohmann::json({"match", "--dump-a", at("gen"), "--dump-b", at("disc1"), "--out", at("m.json")}));
}

TEST_F(CliTest, OutputsIndependentOfThreadCount) {
  // Same argv apart from -j, so provenance matches too.
  std::map<std::string, std::pair<std::string, std::string>> outputs;
  for (const char* j : {"1", "3"}) {
    ASSERT_EQ(cli({"stats", "--dump", at("gen"), "--partner", at("disc1"), "--out", at("s.json"), "-j", j}).code, 0);
    ASSERT_EQ(cli({"match", "--dump-a", at("gen"), "--dump-b", at("disc1"), "--out", at("m.json"), "--batch", "4",
                   "--threads", j}).code, 0);
    outputs[j] = {slurp(at("s.json")), slurp(at("m.json"))};
  }
  EXPECT_EQ(outputs["1"].first, outputs["3"].first);
  EXPECT_EQ(outputs["1"].second, outputs["3"].second);
}

TEST_F(CliTest, FullPipeline) {
  for (const char* m : {"disc1", "disc2"}) {
    ASSERT_EQ(cli({"stats", "--dump", at(m), "--partner", at("gen")}).code, 0);
    ASSERT_EQ(cli({"match", "--dump-a", at("gen"), "--dump-b", at(m), "--stats-b", at(std::string(m) + "/stats.json"),
                   "--k", "3", "--out", at(std::string("m_") + m + ".json")}).code, 0);
  }
  ASSERT_EQ(cli({"self-match", "--dump", at("gen"), "--k", "3", "--out", at("self.json")}).code, 0);
  ASSERT_EQ(cli({"merge", "--matches", at("m_disc1.json"), at("m_disc2.json"), "--out", at("rosetta.json")}).code, 0);
  ASSERT_EQ(cli({"cluster", "--rosetta", at("rosetta.json"), "--self-matches", at("self.json"), "--out",
                 at("clusters.json")}).code, 0);
  ASSERT_EQ(cli({"stats", "--dump", at("gen"), "--partner", at("disc1"), at("disc2")}).code, 0);
  Outcome o = cli({"curate", "--rosetta", at("rosetta.json"), "--clusters", at("clusters.json"), "--stats",
                   at("gen/stats.json"), at("disc1/stats.json"), at("disc2/stats.json"), "--out", at("dict.json")});
  ASSERT_EQ(o.code, 0) << o.err;
  o = cli({"render", "--dict", at("dict.json"), "--dump", at("disc2"), "--images", at("images"), "--samples", "2",
           "--out", at("gallery")});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "gallery" / "index.html"));

  const auto dict = json_util::read_file(at("dict.json"));
  ASSERT_FALSE(dict["concepts"].empty());
  const auto& gen_unit = dict["concepts"][0]["members"][0]["generator"];
  json_util::write_file(dir / "edits.json",
                        {{"commands", {{{"target", {gen_unit}}, {"op", "scale"}, {"factor", 2.0}}}}});
  o = cli({"edit-maps", "--dict", at("dict.json"), "--dump", at("gen"), "--instance", "3", "--spec", at("edits.json"),
           "--out", at("targets")});
  ASSERT_EQ(o.code, 0) << o.err;
  o = cli({"validate", "--dict", at("dict.json"), "--targets", at("targets")});
  EXPECT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("ok: targets of instance 3"), std::string::npos);

  // A dictionary curated against the wrong K run is rejected.
  ASSERT_EQ(cli({"self-match", "--dump", at("gen"), "--k", "4", "--out", at("self4.json")}).code, 0);
  o = cli({"cluster", "--rosetta", at("rosetta.json"), "--self-matches", at("self4.json"), "--out", at("c4.json")});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("KMismatch"), std::string::npos) << o.err;
}

}  // namespace
}  // namespace rosetta
