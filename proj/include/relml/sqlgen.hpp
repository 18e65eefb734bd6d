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

// Forward plans as SQL scripts: one CREATE TABLE ... AS SELECT per table.
// Chains of join, reindex, filter, aggregate and scalar map collapse into a
// single SELECT where possible, so a convolution reads as one statement.
//
// A table stores some of its node's coordinates; the rest hold the node's
// static default. A table is "complete" when every coordinate is present,
// which is what aggregates other than a zero-default SUM need.

#ifndef RELML_SQLGEN_HPP
#define RELML_SQLGEN_HPP

#include <cstdio>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "relml/plan.hpp"

namespace relml {

enum class Dialect { EmbeddedDefault, StrictSql92 };

inline std::string dialect_name(Dialect d) {
  return d == Dialect::EmbeddedDefault ? "embedded-default" : "strict-sql92";
}

inline Dialect parse_dialect(const std::string& s) {
  if (s == "embedded-default") return Dialect::EmbeddedDefault;
  if (s == "strict-sql92") return Dialect::StrictSql92;
  throw Error(Errc::InvalidParams, "unknown dialect '" + s + "'");
}

struct SqlScript {
  Dialect dialect = Dialect::EmbeddedDefault;
  std::vector<std::string> statements;  // comments are statements too

  std::string text() const {
    std::string out;
    for (const auto& s : statements) {
      out += s;
      out += '\n';
    }
    return out;
  }
};

namespace detail {

inline std::string sql_number(double v) {
  if (v == static_cast<double>(static_cast<long long>(v)) && std::abs(v) < 1e15) {
    return std::to_string(static_cast<long long>(v));
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline bool is_identifier(const std::string& s) {
  static const std::regex id(R"([A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)?)");
  return std::regex_match(s, id);
}

inline std::string paren(const std::string& s) { return is_identifier(s) ? s : "(" + s + ")"; }

struct TableInfo {
  std::vector<std::string> columns;
  std::string value;
  bool complete = false;
};

// A SELECT under construction.
struct Pending {
  std::vector<std::string> from;
  std::vector<std::string> where;
  std::vector<std::pair<std::string, std::string>> columns;  // (expression, name)
  std::string value;
  bool aggregated = false;
  std::vector<std::string> group_by;
  bool complete = false;

  const std::string& column(const std::string& name) const {
    for (const auto& [expr, n] : columns) {
      if (n == name) return expr;
    }
    throw Error(Errc::UnsupportedNode, "no column '" + name + "' in pending select");
  }
};

class ForwardEmitter {
 public:
  ForwardEmitter(const Plan& plan, Dialect dialect) : plan_(plan), dialect_(dialect) {}

  SqlScript run() {
    SqlScript script;
    script.dialect = dialect_;
    out_ = &script.statements;
    out_->push_back("-- Forward pass, " + std::to_string(plan_.size()) + " plan nodes, dialect " +
                    dialect_name(dialect_) + ".");
    out_->push_back("-- Absent rows read as the node's default value.");
    if (dialect_ == Dialect::StrictSql92) emit_series();

    const auto consumers = plan_.consumer_counts();
    std::vector<bool> needs_table(plan_.size(), false);
    for (std::size_t k = 0; k < plan_.size(); ++k) {
      const auto& node = plan_.node(k);
      needs_table[k] = needs_table[k] || node.materialize || consumers[k] > 1 || k == plan_.output();
      const bool table_inputs = std::holds_alternative<JoinOp>(node.op) ||
                                std::holds_alternative<DensifyOp>(node.op) ||
                                std::holds_alternative<AddOp>(node.op);
      if (table_inputs) {
        for (auto in : node.inputs) needs_table[in] = true;
      }
    }

    pending_.assign(plan_.size(), std::nullopt);
    for (std::size_t k = 0; k < plan_.size(); ++k) {
      const auto& node = plan_.node(k);
      if (const auto* in = std::get_if<InputOp>(&node.op)) {
        tables_[k] = TableInfo{node.sig.schema.names(), in->value_column, false};
        continue;
      }
      std::visit([&](const auto& op) { lower(k, op); }, node.op);
      if (needs_table[k] && !tables_.count(k)) materialize(k);
    }
    const auto& out = plan_.node(plan_.output());
    if (out.sig.schema.rank() == 0) {
      out_->push_back("SELECT " + tables_.at(plan_.output()).value + " FROM " + out.name + ";");
    }
    return script;
  }

 private:
  // -- lowering -------------------------------------------------------------

  Pending source(std::size_t id) {
    if (auto it = tables_.find(id); it != tables_.end()) {
      const std::string& t = plan_.node(id).name;
      Pending p;
      p.from = {t};
      for (const auto& c : it->second.columns) p.columns.emplace_back(t + "." + c, c);
      p.value = t + "." + it->second.value;
      p.complete = it->second.complete;
      return p;
    }
    return *pending_[id];
  }

  // A pending input that can be extended without wrapping an aggregate.
  Pending flat_source(std::size_t id) {
    if (!tables_.count(id) && pending_[id]->aggregated) materialize(id);
    return source(id);
  }

  const TableInfo& table(std::size_t id) {
    if (!tables_.count(id)) materialize(id);
    return tables_.at(id);
  }

  void lower(std::size_t, const InputOp&) {}

  void lower(std::size_t k, const JoinOp& op) {
    const auto& node = plan_.node(k);
    const std::size_t ia = node.inputs[0], ib = node.inputs[1];
    table(ia);
    table(ib);
    const std::string& a = plan_.node(ia).name;
    const std::string& b = plan_.node(ib).name;
    if (a == b) throw Error(Errc::UnsupportedNode, "self-join in '" + node.name + "'");
    Pending p;
    p.from = {a, b};
    for (const auto& o : op.outputs) {
      const std::string& t = o.side == Side::A ? a : b;
      p.columns.emplace_back(t + "." + o.column, o.alias.empty() ? o.column : o.alias);
    }
    for (const auto& [ca, cb] : op.equalities) p.where.push_back(a + "." + ca + " = " + b + "." + cb);
    p.value = a + "." + tables_.at(ia).value + " * " + b + "." + tables_.at(ib).value;
    pending_[k] = std::move(p);
  }

  void lower(std::size_t k, const ReindexOp& op) {
    Pending p = flat_source(plan_.node(k).inputs[0]);
    std::vector<std::pair<std::string, std::string>> cols;
    bool all_copies = true;
    for (const auto& e : op.columns) {
      std::string s;
      for (const auto& [col, coef] : e.terms) {
        if (coef == 0) continue;
        const std::string& x = p.column(col);
        const long long mag = coef < 0 ? -coef : coef;
        const std::string term = mag == 1 ? (s.empty() ? x : paren(x)) : paren(x) + " * " + std::to_string(mag);
        if (s.empty()) {
          s = coef < 0 ? "-" + paren(x) + (mag == 1 ? "" : " * " + std::to_string(mag)) : term;
        } else {
          s += (coef < 0 ? " - " : " + ") + term;
        }
      }
      if (s.empty()) s = "0";
      if (e.offset != 0) {
        s += (e.offset < 0 ? " - " : " + ") + std::to_string(e.offset < 0 ? -e.offset : e.offset);
      }
      const bool copy = e.terms.size() == 1 && e.terms[0].second == 1 && e.offset == 0;
      all_copies = all_copies && copy;
      cols.emplace_back(s, e.target);
    }
    p.columns = std::move(cols);
    p.complete = p.complete && all_copies;
    pending_[k] = std::move(p);
  }

  void lower(std::size_t k, const FilterOp& op) {
    const auto& node = plan_.node(k);
    const auto& in_schema = plan_.node(node.inputs[0]).sig.schema;
    const auto [lo, hi] = op.kept(in_schema[in_schema.index_of(op.column)]);
    Pending p = flat_source(node.inputs[0]);
    for (auto& [expr, name] : p.columns) {
      if (name != op.column) continue;
      p.where.push_back(expr + " BETWEEN " + std::to_string(lo) + " AND " + std::to_string(hi));
      if (lo != 0) expr = paren(expr) + (lo < 0 ? " + " : " - ") + std::to_string(lo < 0 ? -lo : lo);
    }
    pending_[k] = std::move(p);
  }

  void lower(std::size_t k, const AggregateOp& op) {
    const auto& node = plan_.node(k);
    const auto& in_sig = plan_.node(node.inputs[0]).sig;
    Pending p = flat_source(node.inputs[0]);
    const auto plan = plan_aggregate(op, in_sig.schema);
    const double d = in_sig.default_value;
    auto unsupported = [&](const std::string& why) {
      throw Error(Errc::UnsupportedNode, "aggregate '" + node.name + "': " + why);
    };
    std::vector<std::pair<std::string, std::string>> cols;
    for (std::size_t g = 0; g < op.group.size(); ++g) {
      std::string e = p.column(op.group[g]);
      if (plan.divisor[g] != 1) {
        if (in_sig.schema[plan.group_pos[g]].lo < 0) unsupported("division of a negative index");
        e = paren(e) + " / " + std::to_string(plan.divisor[g]);
      }
      cols.emplace_back(e, op.group[g]);
    }
    const std::string& v = p.value;
    switch (op.agg) {
      case AggKind::SUM:
        if (!p.complete && d != 0.0) unsupported("sum over an incomplete table with default " + sql_number(d));
        p.value = "SUM(" + v + ")";
        break;
      case AggKind::MAX:
        if (!p.complete) unsupported("max over an incomplete table");
        p.value = "MAX(" + v + ")";
        break;
      case AggKind::AVG:
        if (p.complete) {
          p.value = "SUM(" + v + ") / COUNT(" + v + ")";
        } else if (d == 0.0 && plan.uniform) {
          p.value = "SUM(" + v + ") / " + std::to_string(plan.max_cardinality);
        } else {
          unsupported("average over an incomplete table");
        }
        break;
      case AggKind::COUNT:
        if (!p.complete) unsupported("count over an incomplete table");
        p.value = "COUNT(*)";
        break;
    }
    p.group_by.clear();
    for (const auto& c : cols) p.group_by.push_back(c.first);
    p.columns = std::move(cols);
    p.aggregated = true;
    pending_[k] = std::move(p);
  }

  void lower(std::size_t k, const MapOp& op) {
    Pending p = source(plan_.node(k).inputs[0]);
    const std::string& v = p.value;
    switch (op.fn.kind) {
      case ScalarKind::relu:
        p.value = dialect_ == Dialect::EmbeddedDefault
                      ? "MAX(0, " + v + ")"
                      : "CASE WHEN " + v + " > 0 THEN " + v + " ELSE 0 END";
        break;
      case ScalarKind::exp: p.value = "EXP(" + v + ")"; break;
      case ScalarKind::log: p.value = "LN(" + v + ")"; break;
      case ScalarKind::negate: p.value = "-" + paren(v); break;
      case ScalarKind::add_const: p.value = v + " + " + paren(sql_number(op.fn.constant)); break;
      case ScalarKind::mul_const: p.value = paren(v) + " * " + paren(sql_number(op.fn.constant)); break;
      case ScalarKind::step: p.value = "CASE WHEN " + v + " > 0 THEN 1.0 ELSE 0.0 END"; break;
      case ScalarKind::reciprocal: p.value = "1.0 / " + paren(v); break;
    }
    pending_[k] = std::move(p);
  }

  void lower(std::size_t k, const DensifyOp&) {
    const auto& node = plan_.node(k);
    const std::size_t in = node.inputs[0];
    const TableInfo& src = table(in);
    const std::string& t = plan_.node(in).name;
    const IndexSchema& s = node.sig.schema;
    std::ostringstream q;
    out_->push_back("-- " + node.name + ": every coordinate of " + s.to_string() +
                    ", missing rows filled with " + sql_number(plan_.node(in).sig.default_value) +
                    ", so later additions reach empty groups.");
    q << "CREATE TABLE " << node.name << " AS\n";
    const std::string fill = sql_number(plan_.node(in).sig.default_value);
    if (s.rank() == 0) {
      q << "  SELECT COALESCE((SELECT " << src.value << " FROM " << t << "), " << fill << ") AS val;";
      out_->push_back(q.str());
      tables_[k] = TableInfo{{}, "val", true};
      return;
    }
    std::vector<std::string> grid_col;
    if (dialect_ == Dialect::EmbeddedDefault) {
      q << "  WITH RECURSIVE\n";
      for (std::size_t c = 0; c < s.rank(); ++c) {
        const std::string g = "grid_" + s[c].name;
        q << "    " << g << "(" << s[c].name << ") AS (SELECT " << s[c].lo << " UNION ALL SELECT "
          << s[c].name << " + 1 FROM " << g << " WHERE " << s[c].name << " < " << s[c].hi() << ")"
          << (c + 1 < s.rank() ? ",\n" : "\n");
        grid_col.push_back(g + "." + s[c].name);
      }
    } else {
      for (std::size_t c = 0; c < s.rank(); ++c) {
        const std::string g = "grid_" + s[c].name;
        grid_col.push_back(s[c].lo == 0 ? g + ".n" : g + ".n + " + std::to_string(s[c].lo));
      }
    }
    q << "  SELECT ";
    for (std::size_t c = 0; c < s.rank(); ++c) q << grid_col[c] << " AS " << s[c].name << ", ";
    q << "COALESCE(" << t << "." << src.value << ", " << fill << ") AS val\n  FROM ";
    for (std::size_t c = 0; c < s.rank(); ++c) {
      const std::string g = "grid_" + s[c].name;
      if (c) q << " CROSS JOIN ";
      q << (dialect_ == Dialect::EmbeddedDefault ? g : "relml_series AS " + g);
    }
    q << "\n  LEFT JOIN " << t << " ON ";
    for (std::size_t c = 0; c < s.rank(); ++c) {
      if (c) q << " AND ";
      q << t << "." << src.columns[c] << " = " << grid_col[c];
    }
    if (dialect_ == Dialect::StrictSql92) {
      q << "\n  WHERE ";
      for (std::size_t c = 0; c < s.rank(); ++c) {
        if (c) q << " AND ";
        q << "grid_" << s[c].name << ".n < " << s[c].domain_size;
      }
    }
    q << ";";
    out_->push_back(q.str());
    tables_[k] = TableInfo{s.names(), "val", true};
    series_size_ = std::max(series_size_, max_extent(s));
  }

  void lower(std::size_t k, const AddOp& op) {
    const auto& node = plan_.node(k);
    const std::size_t ia = node.inputs[0], ib = node.inputs[1];
    const TableInfo& ta = table(ia);
    const TableInfo& tb = table(ib);
    const std::string& a = plan_.node(ia).name;
    const std::string& b = plan_.node(ib).name;
    const double db = plan_.node(ib).sig.default_value;
    const IndexSchema& s = node.sig.schema;
    Pending p;
    if (ta.complete) {
      out_->push_back("-- " + node.name + ": left join so rows without a stored addend still get " +
                      sql_number(db) + ".");
      std::string on;
      for (const auto& [ca, cb] : op.equalities) {
        on += (on.empty() ? "" : " AND ") + a + "." + ca + " = " + b + "." + cb;
      }
      std::ostringstream q;
      q << "CREATE TABLE " << node.name << " AS\n  SELECT ";
      std::vector<std::pair<std::string, std::string>> cols;
      for (const auto& c : ta.columns) cols.emplace_back(a + "." + c, c);
      const std::string value =
          a + "." + ta.value + " + COALESCE(" + b + "." + tb.value + ", " + sql_number(db) + ")";
      const std::set<std::string> names = names_of({a, b});
      q << select_list(cols, value, names) << "\n  FROM " << a << " LEFT JOIN " << b << " ON "
        << unqualify(on, names, cols) << ";";
      out_->push_back(q.str());
      tables_[k] = TableInfo{s.names(), "val", true};
      return;
    }
    const double da = plan_.node(ia).sig.default_value;
    if (da != 0.0 || db != 0.0 || op.equalities.size() != s.rank()) {
      throw Error(Errc::UnsupportedNode, "addition '" + node.name + "' needs a complete left side");
    }
    std::ostringstream q;
    q << "CREATE TABLE " << node.name << " AS\n  SELECT ";
    for (const auto& c : s.columns()) q << c.name << ", ";
    q << "SUM(val) AS val FROM (\n    SELECT ";
    for (const auto& c : ta.columns) q << c << ", ";
    q << ta.value << " AS val FROM " << a << "\n    UNION ALL SELECT ";
    for (const auto& c : s.columns()) {
      for (const auto& [ca, cb] : op.equalities) {
        if (ca == c.name) q << cb << " AS " << ca << ", ";
      }
    }
    q << tb.value << " AS val FROM " << b << "\n  ) AS summands GROUP BY ";
    for (std::size_t c = 0; c < s.rank(); ++c) q << (c ? ", " : "") << s[c].name;
    q << ";";
    out_->push_back(q.str());
    tables_[k] = TableInfo{s.names(), "val", false};
  }

  // -- rendering ------------------------------------------------------------

  std::set<std::string> names_of(const std::vector<std::string>& from) const {
    std::set<std::string> seen, dup;
    for (const auto& t : from) {
      const auto id = plan_.at(t);
      const TableInfo& info = tables_.at(id);
      std::vector<std::string> cols = info.columns;
      cols.push_back(info.value);
      for (const auto& c : cols) {
        if (!seen.insert(c).second) dup.insert(c);
      }
    }
    std::set<std::string> unique;
    for (const auto& c : seen) {
      if (!dup.count(c)) unique.insert(c);
    }
    return unique;
  }

  // Drops the table prefix from references whose column name is unambiguous
  // and is not the alias of a different output expression.
  static std::string unqualify(const std::string& text, const std::set<std::string>& unique,
                               const std::vector<std::pair<std::string, std::string>>& cols) {
    static const std::regex ref(R"(\b([A-Za-z_][A-Za-z0-9_]*)\.([A-Za-z_][A-Za-z0-9_]*)\b)");
    std::string out;
    auto begin = std::sregex_iterator(text.begin(), text.end(), ref);
    std::size_t last = 0;
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
      const auto& m = *it;
      const std::string col = m[2].str();
      bool ok = unique.count(col) > 0;
      for (const auto& [expr, name] : cols) {
        if (name == col && expr != m.str()) ok = false;
      }
      out += text.substr(last, static_cast<std::size_t>(m.position()) - last);
      out += ok ? col : m.str();
      last = static_cast<std::size_t>(m.position() + m.length());
    }
    out += text.substr(last);
    return out;
  }

  static std::string select_list(const std::vector<std::pair<std::string, std::string>>& cols,
                                 const std::string& value, const std::set<std::string>& unique) {
    std::string s;
    for (const auto& [expr, name] : cols) {
      const std::string e = unqualify(expr, unique, cols);
      s += (e == name ? e : e + " AS " + name) + ", ";
    }
    const std::string v = unqualify(value, unique, cols);
    return s + (v == "val" ? v : v + " AS val");
  }

  void materialize(std::size_t k) {
    const Pending& p = *pending_[k];
    const auto unique = names_of(p.from);
    std::ostringstream q;
    q << "CREATE TABLE " << plan_.node(k).name << " AS\n  SELECT "
      << select_list(p.columns, p.value, unique) << "\n  FROM ";
    for (std::size_t t = 0; t < p.from.size(); ++t) q << (t ? ", " : "") << p.from[t];
    if (!p.where.empty()) {
      q << "\n  WHERE ";
      for (std::size_t w = 0; w < p.where.size(); ++w) {
        q << (w ? " AND " : "") << unqualify(p.where[w], unique, p.columns);
      }
    }
    if (p.aggregated && !p.group_by.empty()) {
      q << "\n  GROUP BY ";
      for (std::size_t g = 0; g < p.group_by.size(); ++g) {
        q << (g ? ", " : "") << unqualify(p.group_by[g], unique, p.columns);
      }
    }
    q << ";";
    out_->push_back(q.str());
    std::vector<std::string> names;
    for (const auto& c : p.columns) names.push_back(c.second);
    tables_[k] = TableInfo{names, "val", p.complete};
  }

  static std::int64_t max_extent(const IndexSchema& s) {
    std::int64_t m = 0;
    for (const auto& c : s.columns()) m = std::max(m, c.domain_size);
    return m;
  }

  // Strict SQL-92 has no recursive queries; grids come from a numbers table.
  void emit_series() {
    std::int64_t n = 1;
    for (const auto& node : plan_.nodes()) {
      if (std::holds_alternative<DensifyOp>(node.op)) n = std::max(n, max_extent(node.sig.schema));
    }
    out_->push_back("CREATE TABLE relml_series (n INTEGER);");
    for (std::int64_t k = 0; k < n; ++k) {
      out_->push_back("INSERT INTO relml_series VALUES (" + std::to_string(k) + ");");
    }
    series_size_ = n;
  }

  const Plan& plan_;
  Dialect dialect_;
  std::vector<std::string>* out_ = nullptr;
  std::map<std::size_t, TableInfo> tables_;
  std::vector<std::optional<Pending>> pending_;
  std::int64_t series_size_ = 0;
};

}  // namespace detail

/// One CREATE TABLE ... AS SELECT per materialized node, in plan order,
/// ending with a SELECT of the scalar output.
inline SqlScript emit_forward_sql(const Plan& plan, Dialect dialect = Dialect::EmbeddedDefault) {
  return detail::ForwardEmitter(plan, dialect).run();
}

struct NamedRelation {
  std::string name;
  TensorRelation relation;
  std::string value_column = "val";
};

inline std::string create_table_sql(const std::string& name, const IndexSchema& s,
                                    const std::string& value_column) {
  std::string q = "CREATE TABLE " + name + " (";
  for (const auto& c : s.columns()) q += c.name + " INTEGER, ";
  return q + value_column + " REAL);";
}

/// CREATE TABLE plus one INSERT per stored entry.
inline SqlScript emit_data_sql(const std::vector<NamedRelation>& relations) {
  SqlScript script;
  for (const auto& r : relations) {
    const TensorRelation& rel = r.relation;
    rel.require_unique("emit_data_sql");
    std::string domains;
    for (const auto& c : rel.schema().columns()) {
      domains += " " + c.name + "=" + std::to_string(c.domain_size);
      if (c.lo != 0) domains += "@" + std::to_string(c.lo);
    }
    script.statements.push_back("-- " + r.name + ": default " + detail::sql_number(rel.default_value()) +
                                ", domains" + (domains.empty() ? " (scalar)" : domains) + ", " +
                                std::to_string(rel.size()) + " stored rows");
    script.statements.push_back(create_table_sql(r.name, rel.schema(), r.value_column));
    for (std::size_t k = 0; k < rel.size(); ++k) {
      std::string q = "INSERT INTO " + r.name + " VALUES (";
      for (auto i : rel.index(k)) q += std::to_string(i) + ", ";
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", rel.value(k));
      script.statements.push_back(q + buf + ");");
    }
  }
  return script;
}

/// The plan's inputs that appear in `bindings`, in plan order, with their
/// declared value column names.
inline std::vector<NamedRelation> input_relations(const Plan& plan, const Bindings& bindings) {
  std::vector<NamedRelation> out;
  for (const auto& node : plan.nodes()) {
    const auto* in = std::get_if<InputOp>(&node.op);
    if (!in) continue;
    auto it = bindings.find(node.name);
    if (it == bindings.end()) throw Error(Errc::MissingInput, "no relation for '" + node.name + "'");
    out.push_back({node.name, it->second, in->value_column});
  }
  return out;
}

/// DDL for every plan input.
inline SqlScript emit_schema_sql(const Plan& plan) {
  SqlScript script;
  for (const auto& node : plan.nodes()) {
    const auto* in = std::get_if<InputOp>(&node.op);
    if (!in) continue;
    script.statements.push_back("-- " + node.name + (in->role == InputRole::Param ? " (parameter)" : " (data)") +
                                ", default " + detail::sql_number(node.sig.default_value));
    script.statements.push_back(create_table_sql(node.name, node.sig.schema, in->value_column));
  }
  return script;
}

}  // namespace relml

#endif  // RELML_SQLGEN_HPP
