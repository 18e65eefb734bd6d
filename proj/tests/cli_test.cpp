// Copyright 2026 The relml Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>

#include "relml/io.hpp"

namespace relml {
namespace {

struct CliRun {
  int status = -1;
  std::string out;
  std::string err;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    ws_ = fs::temp_directory_path() /
          ("relml_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(ws_);
    fs::create_directories(ws_);
  }
  void TearDown() override { fs::remove_all(ws_); }

  CliRun run(const std::string& args, const fs::path& ws) {
    const fs::path out = ws_ / ".stdout", err = ws_ / ".stderr";
    const std::string cmd = std::string(RELML_CLI_PATH) + " " + args + " --workspace " + ws.string() + " >" +
                            out.string() + " 2>" + err.string();
    const int raw = std::system(cmd.c_str());
    CliRun r;
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = read_text(out);
    r.err = read_text(err);
    return r;
  }
  CliRun run(const std::string& args) { return run(args, ws_ / "w"); }

  fs::path ws_;
};

TEST_F(CliTest, EmptyWorkspaceReportsMissingInput) {
  for (const char* cmd : {"forward", "train", "emit-sql"}) {
    const CliRun r = run(cmd);
    EXPECT_EQ(r.status, 1) << cmd;
    EXPECT_NE(r.err.find("MissingInput"), std::string::npos) << r.err;
  }
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run("frobnicate").status, 2);
  EXPECT_EQ(run("generate bogus-kind").status, 2);
  EXPECT_EQ(run("train --epochs notanumber").status, 2);
}

TEST_F(CliTest, GenerateIsDeterministic) {
  ASSERT_EQ(run("generate sbm-graph --seed 4 --nodes 32", ws_ / "a").status, 0);
  ASSERT_EQ(run("generate sbm-graph --seed 4 --nodes 32", ws_ / "b").status, 0);
  for (const char* f : {"model.json", "data/adj.csv", "data/samples.csv", "params/gc1_w.csv"}) {
    EXPECT_EQ(read_text(ws_ / "a" / f), read_text(ws_ / "b" / f)) << f;
  }
  ASSERT_EQ(run("generate sbm-graph --seed 5 --nodes 32", ws_ / "c").status, 0);
  EXPECT_NE(read_text(ws_ / "a" / "data/adj.csv"), read_text(ws_ / "c" / "data/adj.csv"));
}

TEST_F(CliTest, TrainWritesHistoryAndParams) {
  ASSERT_EQ(run("generate sbm-graph --seed 1 --nodes 32").status, 0);
  const CliRun f = run("forward");
  ASSERT_EQ(f.status, 0) << f.err;
  EXPECT_EQ(f.out.rfind("loss ", 0), 0u);
  EXPECT_TRUE(fs::exists(ws_ / "w" / "predictions.csv"));
  const CliRun t = run("train --epochs 5 --lr 0.1");
  ASSERT_EQ(t.status, 0) << t.err;
  const std::string hist = read_text(ws_ / "w" / "history.csv");
  EXPECT_EQ(hist.rfind("epoch,loss,accuracy\n", 0), 0u);
  EXPECT_EQ(std::count(hist.begin(), hist.end(), '\n'), 6);
  EXPECT_TRUE(relation_exists(ws_ / "w" / "params", "gc1_w"));
}

TEST_F(CliTest, EmitSqlIsByteIdentical) {
  ASSERT_EQ(run("generate toy-images --images 4 --model toy-cnn").status, 0);
  ASSERT_EQ(run("emit-sql").status, 0);
  const fs::path sql = ws_ / "w" / "sql";
  const std::string fwd = read_text(sql / "toy-cnn_forward.sql");
  const std::string data = read_text(sql / "toy-cnn_data.sql");
  EXPECT_TRUE(fs::exists(sql / "toy-cnn_schema.sql"));
  ASSERT_EQ(run("emit-sql").status, 0);
  EXPECT_EQ(read_text(sql / "toy-cnn_forward.sql"), fwd);
  EXPECT_EQ(read_text(sql / "toy-cnn_data.sql"), data);
  ASSERT_EQ(run("emit-sql --dialect strict-sql92").status, 0);
  EXPECT_NE(read_text(sql / "toy-cnn_forward.sql"), fwd);
  EXPECT_EQ(run("emit-sql --dialect mysql").status, 2);
}

TEST_F(CliTest, VerifyAndGradcheck) {
  const CliRun v = run("verify --model gcn --trials 5");
  EXPECT_EQ(v.status, 0) << v.err;
  EXPECT_NE(v.out.find("PASS"), std::string::npos);
  EXPECT_EQ(v.out.find("FAIL"), std::string::npos);
  const CliRun g = run("gradcheck --model gcn --seeds 2");
  EXPECT_EQ(g.status, 0) << g.err;
  const auto report = read_json(ws_ / "w" / "reports" / "gradcheck.json");
  EXPECT_TRUE(report["pass"].get<bool>());
  EXPECT_EQ(report["runs"].size(), 2u);
  EXPECT_EQ(run("gradcheck --model cnn").status, 1);
}

}  // namespace
}  // namespace relml
