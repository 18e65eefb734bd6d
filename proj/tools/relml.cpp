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

// relml: generate datasets, run, train, verify and export models.
//
// Workspace layout:
//   model.json            model spec, including the train block
//   data/<name>.csv       data relations (+ <name>.schema.json)
//   params/<name>.csv     parameters (+ sidecars)
//   sql/<model>_{schema,data,forward}.sql
//   history.csv, predictions.csv, reports/gradcheck.json
//
// Exit codes: 0 success, 1 failure (failed check or runtime error),
// 2 usage error. Errors are one line on stderr: "error <Code>: <detail>".

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "relml/dataset.hpp"
#include "relml/gradcheck.hpp"
#include "relml/io.hpp"
#include "relml/sqlgen.hpp"
#include "relml/train.hpp"
#include "relml/verify.hpp"

namespace {

using namespace relml;

struct Options {
  std::string workspace = ".";
  std::uint64_t seed = 0;
  std::string model;
  std::string dialect = "embedded-default";
  std::optional<double> lr;
  std::optional<std::int64_t> epochs;
  std::optional<std::int64_t> batch_size;
  std::optional<double> loss_threshold;

  // generate
  std::string kind;
  ToyImageParams toy;
  SbmParams sbm;
  std::int64_t hidden = 8;

  // verify / gradcheck
  std::int64_t trials = 100;
  std::int64_t seeds = 1;
};

struct Workspace {
  fs::path root;

  fs::path model() const { return root / "model.json"; }
  fs::path data() const { return root / "data"; }
  fs::path params() const { return root / "params"; }
  fs::path sql() const { return root / "sql"; }
  fs::path reports() const { return root / "reports"; }
};

ModelSpec load_model(const Workspace& ws) {
  if (!fs::exists(ws.model())) throw Error(Errc::MissingInput, "no model.json in " + ws.root.string());
  return read_model(ws.model());
}

// Data relations required by the plan, plus any extra files in data/.
Bindings load_data(const Workspace& ws, const Model& model) {
  Bindings data = read_relations(ws.data());
  for (auto id : model.plan.inputs_with_role(InputRole::Data)) {
    const std::string& name = model.plan.node(id).name;
    if (!data.count(name)) {
      throw Error(Errc::MissingInput, "no data relation '" + name + "' in " + ws.data().string());
    }
  }
  return data;
}

// Stored parameters, or a fresh initialization from the seed when none exist.
ParamStore load_params(const Workspace& ws, const Model& model, std::uint64_t seed) {
  const auto ids = model.plan.inputs_with_role(InputRole::Param);
  bool any = false;
  for (auto id : ids) any = any || relation_exists(ws.params(), model.plan.node(id).name);
  if (!any) return init_params(model.plan, seed);
  ParamStore store;
  store.seed = seed;
  for (auto id : ids) {
    const std::string& name = model.plan.node(id).name;
    store.params.emplace(name, read_relation(ws.params(), name));
  }
  return store;
}

void write_params(const Workspace& ws, const ParamStore& params) {
  write_relations(ws.params(), params.params);
}

int cmd_generate(const Options& o) {
  const Workspace ws{o.workspace};
  Bindings data;
  ModelSpec spec;
  if (o.kind == "toy-images") {
    ToyImageParams p = o.toy;
    if (o.model == "cnn") {
      spec = cnn_spec(p.images);
      if (p.extent != 32 || p.channels != 3 || p.classes != 10) {
        throw Error(Errc::InvalidParams, "model cnn needs --extent 32 --channels 3 --classes 10");
      }
    } else if (o.model.empty() || o.model == "toy-cnn") {
      spec = toy_cnn_spec(p.images, p.classes, p.extent, p.channels);
    } else {
      throw Error(Errc::InvalidParams, "toy-images pairs with model cnn or toy-cnn, not '" + o.model + "'");
    }
    data = generate_toy_images(p, o.seed);
  } else {
    if (!o.model.empty() && o.model != "gcn") {
      throw Error(Errc::InvalidParams, "sbm-graph pairs with model gcn, not '" + o.model + "'");
    }
    if (o.hidden < 1) throw Error(Errc::InvalidParams, "hidden width must be positive");
    data = generate_sbm(o.sbm, o.seed);
    spec = gcn_spec(o.sbm.nodes, o.sbm.features, o.hidden, o.sbm.blocks);
  }
  const Model model = build_model(spec);
  write_model(ws.model(), spec);
  write_relations(ws.data(), data);
  write_params(ws, init_params(model.plan, o.seed));
  std::cout << "wrote " << data.size() << " data relations and model " << spec.model << " to "
            << ws.root.string() << "\n";
  return 0;
}

int cmd_forward(const Options& o) {
  const Workspace ws{o.workspace};
  const ModelSpec spec = load_model(ws);
  const Model model = build_model(spec);
  const Bindings data = load_data(ws, model);
  const ParamStore params = load_params(ws, model, o.seed);
  const Evaluation e = evaluate_model(model, data, params);
  if (model.has_loss()) std::printf("loss %.17g\n", e.loss);
  if (model.logits != Plan::npos) {
    const auto pred = predictions_vector(argmax_predict(e.logits));
    std::vector<std::int64_t> truth;
    if (!model.labels.empty()) {
      truth = labels_vector(data.at(model.labels));
      std::printf("accuracy %.17g\n", e.accuracy);
    }
    write_text(ws.root / "predictions.csv", predictions_csv(pred, truth));
  }
  return 0;
}

int cmd_train(const Options& o) {
  const Workspace ws{o.workspace};
  const ModelSpec spec = load_model(ws);
  const Model model = build_model(spec);
  const Bindings data = load_data(ws, model);
  TrainConfig c = config_from_spec(spec);
  if (o.lr) c.learning_rate = *o.lr;
  if (o.epochs) c.max_epochs = *o.epochs;
  if (o.batch_size) c.batch_size = *o.batch_size;
  if (o.loss_threshold) c.loss_threshold = *o.loss_threshold;
  c.seed = o.seed;
  ParamStore params = load_params(ws, model, o.seed);
  const TrainResult r = c.batch_size == 0 ? train_full(model, data, std::move(params), c)
                                          : train_minibatch(model, data, std::move(params), c);
  write_text(ws.root / "history.csv", history_csv(r.history));
  write_params(ws, r.params);
  if (!r.history.empty()) {
    const auto& last = r.history.back();
    std::printf("epochs %lld loss %.17g accuracy %.17g\n", static_cast<long long>(last.epoch),
                last.loss, last.accuracy);
  }
  return 0;
}

int cmd_emit_sql(const Options& o) {
  const Workspace ws{o.workspace};
  const ModelSpec spec = load_model(ws);
  const Model model = build_model(spec);
  const Dialect d = parse_dialect(o.dialect);
  const Bindings data = load_data(ws, model);
  const ParamStore params = load_params(ws, model, o.seed);
  const std::string base = spec.model.empty() ? "model" : spec.model;
  write_text(ws.sql() / (base + "_schema.sql"), emit_schema_sql(model.plan).text());
  write_text(ws.sql() / (base + "_data.sql"),
             emit_data_sql(input_relations(model.plan, bind_params(data, params))).text());
  write_text(ws.sql() / (base + "_forward.sql"), emit_forward_sql(model.plan, d).text());
  std::cout << "wrote " << (ws.sql() / (base + "_{schema,data,forward}.sql")).string() << "\n";
  return 0;
}

void print_check(const char* what, const CheckResult& r) {
  std::printf("%s %s %s trials=%lld max_abs_err=%.3g max_rel_err=%.3g\n", r.pass ? "PASS" : "FAIL",
              what, r.name.c_str(), static_cast<long long>(r.trials), r.max_abs_err, r.max_rel_err);
}

std::vector<ModelSpec> selected_models(const Options& o, const std::vector<std::string>& fallback) {
  std::vector<ModelSpec> out;
  for (const auto& name : o.model.empty() ? fallback : std::vector<std::string>{o.model}) {
    out.push_back(builtin_spec(name));
  }
  return out;
}

int cmd_verify(const Options& o) {
  bool ok = true;
  for (const auto& c : layer_cases()) {
    const auto r = check_layer(c, o.seed, o.trials);
    print_check("layer", r);
    ok = ok && r.pass;
  }
  for (auto spec : selected_models(o, {"cnn", "toy-cnn", "gcn"})) {
    if (spec.model == "cnn") spec = cnn_spec(2);
    const auto r = check_model_forward(spec, o.seed);
    print_check("model", r);
    ok = ok && r.pass;
  }
  std::printf("%s\n", ok ? "verify passed" : "verify FAILED");
  return ok ? 0 : 1;
}

int cmd_gradcheck(const Options& o) {
  const Workspace ws{o.workspace};
  auto specs = selected_models(o, {"toy-cnn", "gcn"});
  nlohmann::json runs = nlohmann::json::array();
  bool ok = true;
  for (auto spec : specs) {
    if (spec.model == "cnn") {
      throw Error(Errc::InvalidParams, "cnn is too large for finite differences; use toy-cnn");
    }
    if (spec.model == "toy-cnn") spec = with_sample_count(spec, 4);
    for (std::int64_t s = 0; s < o.seeds; ++s) {
      const auto seed = o.seed + static_cast<std::uint64_t>(s);
      const auto report = gradcheck(spec, seed);
      nlohmann::json j = to_json(report);
      j["model"] = spec.model;
      runs.push_back(j);
      for (const auto& e : report.entries) {
        std::printf("%s %s seed=%llu %s max_abs_err=%.3g max_rel_err=%.3g\n", e.pass ? "PASS" : "FAIL",
                    spec.model.c_str(), static_cast<unsigned long long>(seed), e.node.c_str(),
                    e.max_abs_err, e.max_rel_err);
      }
      ok = ok && report.pass;
    }
  }
  write_json(ws.reports() / "gradcheck.json", {{"pass", ok}, {"runs", runs}});
  std::printf("%s\n", ok ? "gradcheck passed" : "gradcheck FAILED");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relml: neural networks as relational queries"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--workspace", o.workspace, "Workspace directory")->capture_default_str();
    sub->add_option("--seed", o.seed, "Random seed")->capture_default_str();
  };

  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset, model.json and initial params");
  common(gen);
  gen->add_option("kind", o.kind, "Dataset kind")->required()->check(CLI::IsMember({"toy-images", "sbm-graph"}));
  gen->add_option("--model", o.model, "cnn or toy-cnn for toy-images, gcn for sbm-graph");
  gen->add_option("--images", o.toy.images, "Number of images")->capture_default_str();
  gen->add_option("--classes", o.toy.classes, "Number of image classes")->capture_default_str();
  gen->add_option("--extent", o.toy.extent, "Image height and width")->capture_default_str();
  gen->add_option("--channels", o.toy.channels, "Image channels")->capture_default_str();
  gen->add_option("--noise", o.toy.noise, "Pixel noise probability")->capture_default_str();
  gen->add_option("--nodes", o.sbm.nodes, "Graph nodes")->capture_default_str();
  gen->add_option("--blocks", o.sbm.blocks, "Blocks (classes)")->capture_default_str();
  gen->add_option("--p-intra", o.sbm.p_intra, "Edge probability inside a block")->capture_default_str();
  gen->add_option("--p-inter", o.sbm.p_inter, "Edge probability across blocks")->capture_default_str();
  gen->add_option("--features", o.sbm.features, "Node feature width")->capture_default_str();
  gen->add_option("--feature-noise", o.sbm.feature_noise, "Feature noise probability")->capture_default_str();
  gen->add_option("--train-fraction", o.sbm.train_fraction, "Share of nodes in the train mask")->capture_default_str();
  gen->add_option("--hidden", o.hidden, "Hidden width of the graph network")->capture_default_str();

  auto* fwd = app.add_subcommand("forward", "Evaluate the workspace model; print loss, write predictions.csv");
  common(fwd);

  auto* tr = app.add_subcommand("train", "Train with SGD; write history.csv and params/");
  common(tr);
  tr->add_option("--lr", o.lr, "Learning rate");
  tr->add_option("--epochs", o.epochs, "Maximum epochs");
  tr->add_option("--batch-size", o.batch_size, "Minibatch size, 0 for full batch");
  tr->add_option("--loss-threshold", o.loss_threshold, "Stop once the epoch loss is at most this");

  auto* sql = app.add_subcommand("emit-sql", "Write schema, data and forward SQL scripts");
  common(sql);
  sql->add_option("--dialect", o.dialect, "SQL dialect")
      ->check(CLI::IsMember({"embedded-default", "strict-sql92"}))
      ->capture_default_str();

  auto* ver = app.add_subcommand("verify", "Compare every layer and built-in model against the dense oracle");
  common(ver);
  ver->add_option("--model", o.model, "Only this built-in model end to end")
      ->check(CLI::IsMember({"cnn", "toy-cnn", "gcn"}));
  ver->add_option("--trials", o.trials, "Random points per layer")->capture_default_str();

  auto* gc = app.add_subcommand("gradcheck", "Check gradients against finite differences");
  common(gc);
  gc->add_option("--model", o.model, "Built-in model")->check(CLI::IsMember({"cnn", "toy-cnn", "gcn"}));
  gc->add_option("--seeds", o.seeds, "Number of consecutive seeds")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error Usage: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*gen) return cmd_generate(o);
    if (*fwd) return cmd_forward(o);
    if (*tr) return cmd_train(o);
    if (*sql) return cmd_emit_sql(o);
    if (*ver) return cmd_verify(o);
    if (*gc) return cmd_gradcheck(o);
  } catch (const Error& e) {
    std::cerr << "error " << errc_name(e.code()) << ": " << e.what() + errc_name(e.code()).size() + 2
              << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error Internal: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
