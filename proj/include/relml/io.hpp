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

// Relation files: <name>.csv holds the stored entries (header: index
// columns, then val) and <name>.schema.json holds
// {"columns": [{"name", "domain_size"[, "lo"]}], "default"}.

#ifndef RELML_IO_HPP
#define RELML_IO_HPP

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "relml/model_spec.hpp"
#include "relml/relation.hpp"
#include "relml/train.hpp"

namespace relml {

namespace fs = std::filesystem;

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::MissingInput, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::InvalidParams, "cannot write " + path.string());
  out << text;
}

inline nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what());
  }
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

inline nlohmann::json sidecar_json(const TensorRelation& rel) {
  return {{"columns", columns_to_json(rel.schema().columns())}, {"default", rel.default_value()}};
}

inline void write_relation(const fs::path& dir, const std::string& name, const TensorRelation& rel) {
  rel.require_unique("write_relation");
  std::string csv;
  for (const auto& c : rel.schema().columns()) csv += c.name + ",";
  csv += "val\n";
  for (std::size_t k = 0; k < rel.size(); ++k) {
    for (auto i : rel.index(k)) csv += std::to_string(i) + ",";
    csv += format_double(rel.value(k)) + "\n";
  }
  write_text(dir / (name + ".csv"), csv);
  write_json(dir / (name + ".schema.json"), sidecar_json(rel));
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <typename T>
T parse_number(const std::string& s, const std::string& where) {
  T v{};
  if constexpr (std::is_integral_v<T>) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
      throw Error(Errc::ParseError, where + ": bad integer '" + s + "'");
    }
  } else {
    std::size_t used = 0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw Error(Errc::ParseError, where + ": bad number '" + s + "'");
  }
  return v;
}

}  // namespace detail

inline bool relation_exists(const fs::path& dir, const std::string& name) {
  return fs::exists(dir / (name + ".csv")) && fs::exists(dir / (name + ".schema.json"));
}

inline TensorRelation read_relation(const fs::path& dir, const std::string& name) {
  const fs::path csv_path = dir / (name + ".csv");
  const fs::path side_path = dir / (name + ".schema.json");
  if (!fs::exists(csv_path) || !fs::exists(side_path)) {
    throw Error(Errc::MissingInput, "no relation '" + name + "' in " + dir.string());
  }
  const nlohmann::json side = read_json(side_path);
  IndexSchema schema;
  double def = 0.0;
  try {
    schema = IndexSchema(columns_from_json(side.at("columns")));
    def = side.value("default", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, side_path.string() + ": " + e.what());
  }
  std::istringstream in(read_text(csv_path));
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::ParseError, csv_path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv(line);
  const std::size_t rank = schema.rank();
  bool header_ok = header.size() == rank + 1 && header.back() == "val";
  for (std::size_t k = 0; header_ok && k < rank; ++k) header_ok = header[k] == schema[k].name;
  if (!header_ok) {
    throw Error(Errc::SchemaMismatch, csv_path.string() + ": header does not match " + schema.to_string());
  }
  RelationBuilder b(schema, def);
  std::vector<std::int64_t> idx(rank);
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_csv(line);
    const std::string where = csv_path.string() + ":" + std::to_string(row);
    if (cells.size() != rank + 1) throw Error(Errc::ParseError, where + ": expected " + std::to_string(rank + 1) + " fields");
    for (std::size_t k = 0; k < rank; ++k) idx[k] = detail::parse_number<std::int64_t>(cells[k], where);
    b.push(idx, detail::parse_number<double>(cells[rank], where));
  }
  return std::move(b).canonical();
}

inline void write_relations(const fs::path& dir, const Bindings& rels) {
  for (const auto& [name, rel] : rels) write_relation(dir, name, rel);
}

/// Every <name>.csv with a sidecar in `dir`.
inline Bindings read_relations(const fs::path& dir) {
  Bindings out;
  if (!fs::is_directory(dir)) return out;
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".csv") names.push_back(e.path().stem().string());
  }
  std::sort(names.begin(), names.end());
  for (const auto& n : names) {
    if (fs::exists(dir / (n + ".schema.json"))) out.emplace(n, read_relation(dir, n));
  }
  return out;
}

inline std::string history_csv(const History& h) {
  std::string s = "epoch,loss,accuracy\n";
  for (const auto& r : h) {
    s += std::to_string(r.epoch) + "," + format_double(r.loss) + "," + format_double(r.accuracy) + "\n";
  }
  return s;
}

/// sample,predicted[,label] per row of an argmax relation.
inline std::string predictions_csv(const std::vector<std::int64_t>& predicted,
                                   const std::vector<std::int64_t>& labels) {
  std::string s = labels.empty() ? "sample,predicted\n" : "sample,predicted,label\n";
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    s += std::to_string(i) + "," + std::to_string(predicted[i]);
    if (!labels.empty()) s += "," + std::to_string(i < labels.size() ? labels[i] : -1);
    s += "\n";
  }
  return s;
}

inline ModelSpec read_model(const fs::path& path) { return model_from_json(read_json(path)); }

inline void write_model(const fs::path& path, const ModelSpec& spec) { write_json(path, to_json(spec)); }

}  // namespace relml

#endif  // RELML_IO_HPP
