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

#include "relml/dataset.hpp"
#include "relml/io.hpp"
#include "support/random_relations.hpp"

namespace relml {
namespace {

class IoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("relml_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

void expect_same(const TensorRelation& a, const TensorRelation& b) {
  EXPECT_EQ(a.schema(), b.schema());
  EXPECT_EQ(a.default_value(), b.default_value());
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a.key(k), b.key(k));
    EXPECT_EQ(a.value(k), b.value(k));
  }
}

TEST_F(IoTest, RelationRoundTripIsExact) {
  testing::Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const auto rel = testing::random_relation(rng, testing::random_schema(rng, t % 4), 0.4, t % 3 ? 0.0 : -0.25);
    write_relation(dir_, "r", rel);
    expect_same(read_relation(dir_, "r"), rel);
  }
}

TEST_F(IoTest, FileLayout) {
  RelationBuilder b(IndexSchema::of({{"i", 3}, {"j", 2}}), 0.0);
  const std::int64_t idx[2] = {2, 1};
  b.push(idx, 0.1);
  write_relation(dir_, "w", std::move(b).canonical());
  EXPECT_EQ(read_text(dir_ / "w.csv"), "i,j,val\n2,1,0.10000000000000001\n");
  const auto side = read_json(dir_ / "w.schema.json");
  EXPECT_EQ(side["default"], 0.0);
  EXPECT_EQ(side["columns"][0]["name"], "i");
  EXPECT_EQ(side["columns"][0]["domain_size"], 3);
}

TEST_F(IoTest, MissingRelation) {
  try {
    read_relation(dir_, "nope");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MissingInput);
  }
  EXPECT_TRUE(read_relations(dir_).empty());
}

TEST_F(IoTest, MalformedFiles) {
  write_relation(dir_, "r", TensorRelation(IndexSchema::of({{"a", 4}})));
  write_text(dir_ / "r.csv", "b,val\n1,2\n");
  try {
    read_relation(dir_, "r");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::SchemaMismatch);
  }
  write_text(dir_ / "r.csv", "a,val\n1,abc\n");
  try {
    read_relation(dir_, "r");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ParseError);
  }
  write_text(dir_ / "r.csv", "a,val\n9,1\n");
  EXPECT_THROW(read_relation(dir_, "r"), Error);
  write_text(dir_ / "r.schema.json", "{not json");
  try {
    read_relation(dir_, "r");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ParseError);
  }
}

TEST_F(IoTest, ReadRelationsSkipsFilesWithoutSidecar) {
  write_relation(dir_, "a", TensorRelation(IndexSchema::of({{"x", 2}})));
  write_relation(dir_, "b", TensorRelation(IndexSchema::of({{"x", 2}})));
  write_text(dir_ / "stray.csv", "x\n");
  const auto all = read_relations(dir_);
  EXPECT_EQ(all.size(), 2u);
  EXPECT_TRUE(all.count("a") && all.count("b"));
}

TEST_F(IoTest, ModelRoundTrip) {
  for (const auto& spec : {cnn_spec(), gcn_spec(), toy_cnn_spec(16)}) {
    write_model(dir_ / "model.json", spec);
    EXPECT_EQ(to_json(read_model(dir_ / "model.json")), to_json(spec));
  }
}

TEST(HistoryCsvTest, Format) {
  History h{{0, 0.5, 0.25}, {1, 0.125, 1.0}};
  EXPECT_EQ(history_csv(h), "epoch,loss,accuracy\n0,0.5,0.25\n1,0.125,1\n");
  EXPECT_EQ(predictions_csv({2, 0}, {2, 1}), "sample,predicted,label\n0,2,2\n1,0,1\n");
  EXPECT_EQ(predictions_csv({1}, {}), "sample,predicted\n0,1\n");
}

}  // namespace
}  // namespace relml
