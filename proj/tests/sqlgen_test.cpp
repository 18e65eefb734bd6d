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

#include <random>
#include <regex>

#include "relml/dataset.hpp"
#include "relml/sqlgen.hpp"
#include "support/random_relations.hpp"
#include "support/sqlite_harness.hpp"

namespace relml {
namespace {

using testing::sql_round_trip;
using testing::SqliteDb;

std::string squash(const std::string& s) { return std::regex_replace(s, std::regex(R"(\s+)"), " "); }

std::string statement(const SqlScript& script, const std::string& table) {
  for (const auto& s : script.statements) {
    if (s.rfind("CREATE TABLE " + table + " AS", 0) == 0) return squash(s);
  }
  return "";
}

std::size_t count_prefix(const SqlScript& script, const std::string& prefix) {
  std::size_t n = 0;
  for (const auto& s : script.statements) n += s.rfind(prefix, 0) == 0;
  return n;
}

TEST(EmitForwardSqlTest, ConvolutionStatementShape) {
  const auto script = emit_forward_sql(build_model(cnn_spec()).plan);
  EXPECT_EQ(statement(script, "conv1_unbiased"),
            "CREATE TABLE conv1_unbiased AS SELECT image, out_channel AS channel, "
            "samples.r - conv1_weight.r AS r, samples.c - conv1_weight.c AS c, "
            "SUM(val * weight) AS val FROM samples, conv1_weight "
            "WHERE samples.channel = in_channel AND samples.r - conv1_weight.r BETWEEN 0 AND 27 "
            "AND samples.c - conv1_weight.c BETWEEN 0 AND 27 "
            "GROUP BY image, out_channel, samples.r - conv1_weight.r, samples.c - conv1_weight.c;");
  EXPECT_EQ(statement(script, "relu1_out"),
            "CREATE TABLE relu1_out AS SELECT image, channel, r, c, MAX(0, val) AS val FROM conv1_out;");
  EXPECT_EQ(statement(script, "pool1_out"),
            "CREATE TABLE pool1_out AS SELECT image, channel, relu1_out.r / 2 AS r, relu1_out.c / 2 AS c, "
            "MAX(val) AS val FROM relu1_out GROUP BY image, channel, relu1_out.r / 2, relu1_out.c / 2;");
  EXPECT_EQ(statement(script, "flatten_out"),
            "CREATE TABLE flatten_out AS SELECT image, channel * 25 + r * 5 + c AS i, val FROM pool2_out;");
  EXPECT_NE(statement(script, "fc1_unbiased").find("WHERE flatten_out.i = in_dim GROUP BY image, out_dim"),
            std::string::npos);
  EXPECT_NE(statement(script, "x_ent_losses_r").find("LN(SUM(EXP(val)))"), std::string::npos);
  EXPECT_NE(statement(script, "x_ent_loss").find("SUM(val) / COUNT(val)"), std::string::npos);
  EXPECT_EQ(script.statements.back(), "SELECT val FROM x_ent_loss;");
}

TEST(EmitForwardSqlTest, BiasStepsDensifyFirstAndSayWhy) {
  const auto script = emit_forward_sql(build_model(cnn_spec()).plan);
  const std::string dense = statement(script, "conv1_dense");
  EXPECT_NE(dense.find("WITH RECURSIVE"), std::string::npos);
  EXPECT_NE(dense.find("COALESCE(conv1_unbiased.val, 0)"), std::string::npos);
  EXPECT_NE(statement(script, "conv1_out").find("LEFT JOIN conv1_bias ON channel = out_channel"),
            std::string::npos);
  bool commented = false;
  for (const auto& s : script.statements) commented = commented || s.rfind("-- conv1_dense", 0) == 0;
  EXPECT_TRUE(commented);
}

TEST(EmitForwardSqlTest, GraphConvolutionChainsTwoContractions) {
  const auto script = emit_forward_sql(build_model(gcn_spec()).plan);
  EXPECT_EQ(statement(script, "gc1_mid"),
            "CREATE TABLE gc1_mid AS SELECT samples.i AS i, gc1_w.j AS j, SUM(val * weight) AS val "
            "FROM samples, gc1_w WHERE samples.j = gc1_w.i GROUP BY samples.i, gc1_w.j;");
  EXPECT_NE(statement(script, "gc1_unbiased").find("SUM(adj.val * gc1_mid.val) AS val"), std::string::npos);
}

TEST(EmitForwardSqlTest, StrictDialectAvoidsTwoArgumentMaxAndRecursion) {
  const auto script = emit_forward_sql(build_model(toy_cnn_spec(4)).plan, Dialect::StrictSql92);
  const std::string text = script.text();
  EXPECT_EQ(text.find("MAX(0,"), std::string::npos);
  EXPECT_EQ(text.find("RECURSIVE"), std::string::npos);
  EXPECT_NE(statement(script, "relu1_out").find("CASE WHEN val > 0 THEN val ELSE 0 END"), std::string::npos);
  EXPECT_NE(text.find("relml_series"), std::string::npos);
}

TEST(EmitForwardSqlTest, IdentityPlanIsOnePassThrough) {
  ModelSpec s;
  s.inputs = {image_input(1, 1, 2)};
  const auto script = emit_forward_sql(build_model(s).plan);
  EXPECT_EQ(count_prefix(script, "CREATE TABLE"), 1u);
  EXPECT_EQ(statement(script, "identity_out"),
            "CREATE TABLE identity_out AS SELECT image, channel, r, c, val FROM samples;");
}

TEST(EmitForwardSqlTest, ByteIdenticalAcrossRuns) {
  for (const auto& spec : {cnn_spec(), gcn_spec()}) {
    for (auto d : {Dialect::EmbeddedDefault, Dialect::StrictSql92}) {
      EXPECT_EQ(emit_forward_sql(build_model(spec).plan, d).text(),
                emit_forward_sql(build_model(spec).plan, d).text());
    }
  }
}

TEST(EmitForwardSqlTest, UnsupportedConstructs) {
  Plan p;
  const auto x = p.add_input("x", Signature{IndexSchema::of({{"a", 3}}), 0.0});
  p.add("m", AggregateOp{{}, {}, AggKind::MAX}, {x});
  try {
    emit_forward_sql(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnsupportedNode);
  }
  Plan q;
  const auto y = q.add_input("y", Signature{IndexSchema::of({{"a", 3}}), 0.0});
  const auto e = q.add("e", MapOp{ScalarFn::exp()}, {y});
  q.add("s", AggregateOp{{}, {}, AggKind::SUM}, {e});
  EXPECT_THROW(emit_forward_sql(q), Error);
  EXPECT_THROW(parse_dialect("postgres"), Error);
}

TEST(EmitDataSqlTest, OneInsertPerStoredEntry) {
  const auto empty = emit_data_sql({{"t", TensorRelation(IndexSchema::of({{"a", 4}}))}});
  EXPECT_EQ(count_prefix(empty, "CREATE TABLE t (a INTEGER, val REAL);"), 1u);
  EXPECT_EQ(count_prefix(empty, "INSERT"), 0u);
  EXPECT_EQ(empty.statements[0], "-- t: default 0, domains a=4, 0 stored rows");

  RelationBuilder b(IndexSchema::of({{"image", 2}, {"i", 3}}), 0.0);
  for (std::int64_t k = 0; k < 3; ++k) {
    const std::int64_t idx[2] = {k % 2, k};
    b.push(idx, 0.1 * static_cast<double>(k + 1));
  }
  const auto three = emit_data_sql({{"w", std::move(b).canonical(), "weight"}});
  EXPECT_EQ(count_prefix(three, "INSERT INTO w VALUES"), 3u);
  EXPECT_EQ(count_prefix(three, "CREATE TABLE w (image INTEGER, i INTEGER, weight REAL);"), 1u);
  EXPECT_NE(three.text().find("INSERT INTO w VALUES (0, 0, 0.10000000000000001);"), std::string::npos);
}

TEST(EmitSchemaSqlTest, DeclaresEveryInputAndRunsOnAnEmptyDatabase) {
  const Model m = build_model(cnn_spec());
  const auto script = emit_schema_sql(m.plan);
  EXPECT_EQ(count_prefix(script, "CREATE TABLE"), m.plan.inputs_with_role(InputRole::Param).size() + 2);
  EXPECT_NE(script.text().find("CREATE TABLE conv1_weight (out_channel INTEGER, in_channel INTEGER, r INTEGER, c INTEGER, weight REAL);"),
            std::string::npos);
  SqliteDb db;
  db.exec(script.text());
  EXPECT_TRUE(db.has_table("samples"));
  EXPECT_TRUE(db.has_table("fc3_bias"));
}

TEST(SqlRoundTripProperty, BuiltinModelsReproduceEveryTable) {
  for (const auto& spec : {toy_cnn_spec(4), cnn_spec(2), gcn_spec()}) {
    const Model m = build_model(spec);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      std::mt19937_64 rng(seed);
      const Bindings b = bind_params(random_inputs(m, rng), random_params(m.plan, rng));
      const double engine = evaluate(m.plan, b).at({});
      for (auto d : {Dialect::EmbeddedDefault, Dialect::StrictSql92}) {
        const auto r = sql_round_trip(m.plan, b, d);
        EXPECT_LE(r.max_abs_err, 1e-9) << spec.model << " " << dialect_name(d) << " worst " << r.worst;
        EXPECT_GT(r.tables, 5u);
        EXPECT_NEAR(r.output, engine, 1e-9);
      }
    }
  }
}

TEST(SqlRoundTripProperty, EmptyImagesStillGetBiases) {
  const Model m = build_model(toy_cnn_spec(3));
  std::mt19937_64 rng(1);
  Bindings b = bind_params(random_inputs(m, rng), random_params(m.plan, rng));
  b["samples"] = TensorRelation(b["samples"].schema());
  const auto r = sql_round_trip(m.plan, b, Dialect::EmbeddedDefault);
  EXPECT_LE(r.max_abs_err, 1e-9) << r.worst;
}

// Filters with a shifted range, affine reindexing into negative indices,
// averages and sums over sparse and dense inputs.
TEST(SqlRoundTripProperty, HandBuiltPlans) {
  const auto xs = IndexSchema::of({{"a", 6}, {"b", 4}});
  Plan p;
  const auto x = p.add_input("x", Signature{xs, 0.0});
  const auto f = p.add("f", FilterOp{"a", 2, 4}, {x});
  const auto r = p.add("r", ReindexOp{{AffineIndexExpr::copy("a"), AffineIndexExpr{"s", {{"a", 1}, {"b", -2}}, -1, {}}}}, {f});
  const auto s = p.add("s", AggregateOp{{"s"}, {}, AggKind::SUM}, {r});
  const auto avg = p.add("avg", AggregateOp{{"s"}, {}, AggKind::AVG}, {r}, true);
  const auto dn = p.add("dn", DensifyOp{}, {x});
  const auto mean_a = p.add("mean_a", AggregateOp{{"a"}, {}, AggKind::AVG}, {dn}, true);
  const auto neg = p.add("neg", MapOp{ScalarFn::negate()}, {mean_a});
  const auto sum = p.add("total", AddOp{{{"a", "a"}}}, {neg, mean_a});
  (void)s;
  (void)avg;
  p.set_output(sum);
  testing::Rng rng(12);
  for (int t = 0; t < 10; ++t) {
    const Bindings b{{"x", testing::random_relation(rng, xs, 0.4)}};
    const auto res = sql_round_trip(p, b, t % 2 ? Dialect::StrictSql92 : Dialect::EmbeddedDefault);
    EXPECT_LE(res.max_abs_err, 1e-12) << res.worst;
    EXPECT_GE(res.tables, 4u);
  }
}

}  // namespace
}  // namespace relml
