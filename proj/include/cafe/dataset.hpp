#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "cafe/error.hpp"
#include "cafe/graph.hpp"
#include "cafe/util.hpp"

namespace cafe {

/// Column-typed tabular data. Storage is shared and immutable after load;
/// `select` returns a view (row-index subset) over the same columns, so
/// parallel readers never copy.
class Dataset {
 public:
  struct Storage {
    std::vector<VariableDecl> schema;        // all present columns, incl. outcome when present
    std::vector<std::vector<double>> cols;   // column-major
    int outcome_col = -1;                    // index into schema, -1 when absent
  };

  Dataset() = default;
  Dataset(std::shared_ptr<const Storage> storage, std::vector<std::uint32_t> rows)
      : storage_(std::move(storage)), rows_(std::move(rows)) {}

  static Dataset from_columns(std::vector<VariableDecl> schema,
                              std::vector<std::vector<double>> cols, int outcome_col) {
    auto st = std::make_shared<Storage>();
    st->schema = std::move(schema);
    st->cols = std::move(cols);
    st->outcome_col = outcome_col;
    const std::size_t n = st->cols.empty() ? 0 : st->cols[0].size();
    for (const auto& c : st->cols)
      require(c.size() == n, "shape-mismatch", "ragged columns");
    std::vector<std::uint32_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = static_cast<std::uint32_t>(i);
    return Dataset(std::move(st), std::move(rows));
  }

  std::size_t n() const { return rows_.size(); }
  std::size_t column_count() const { return storage_ ? storage_->schema.size() : 0; }
  const std::vector<VariableDecl>& schema() const { return storage_->schema; }
  bool has_outcome() const { return storage_ && storage_->outcome_col >= 0; }
  int outcome_col() const { return storage_->outcome_col; }
  const std::vector<std::uint32_t>& row_index() const { return rows_; }

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < storage_->schema.size(); ++i)
      if (storage_->schema[i].name == name) return static_cast<int>(i);
    fail("unknown-feature", "no column named '" + name + "'");
  }

  double cell(std::size_t row, std::size_t col) const {
    return storage_->cols[col][rows_[row]];
  }

  double outcome(std::size_t row) const {
    require(has_outcome(), "missing-outcome", "dataset has no outcome column");
    return cell(row, static_cast<std::size_t>(storage_->outcome_col));
  }

  /// Values of one column across the view, in row order.
  std::vector<double> column_values(std::size_t col) const {
    std::vector<double> out(rows_.size());
    for (std::size_t i = 0; i < rows_.size(); ++i) out[i] = storage_->cols[col][rows_[i]];
    return out;
  }

  /// Feature column indices (schema minus outcome), declaration order.
  std::vector<int> feature_columns() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < storage_->schema.size(); ++i)
      if (static_cast<int>(i) != storage_->outcome_col) out.push_back(static_cast<int>(i));
    return out;
  }

  std::vector<std::string> feature_names() const {
    std::vector<std::string> out;
    for (int c : feature_columns()) out.push_back(storage_->schema[static_cast<std::size_t>(c)].name);
    return out;
  }

  /// One row's feature values, declaration order.
  void feature_row(std::size_t row, std::vector<double>& out) const {
    out.clear();
    for (int c : feature_columns()) out.push_back(cell(row, static_cast<std::size_t>(c)));
  }

  Dataset view(std::vector<std::uint32_t> physical_rows) const {
    return Dataset(storage_, std::move(physical_rows));
  }

  std::shared_ptr<const Storage> storage() const { return storage_; }

 private:
  std::shared_ptr<const Storage> storage_;
  std::vector<std::uint32_t> rows_;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.pop_back();
  }
  return out;
}

inline bool parse_number(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  const auto res = std::from_chars(b, e, out);
  return res.ec == std::errc() && res.ptr == e;
}

}  // namespace detail

/// Loads a comma-separated file against a schema (typically the graph's node
/// list). The header must list the schema's feature names in declaration
/// order; the outcome column is optional. Values are validated per column
/// kind: finite numbers everywhere, categorical codes restricted to the
/// declared level list. Continuous [lo, hi] bounds are grid metadata, not a
/// load-time constraint.
inline Dataset load_dataset(const std::string& path, const std::vector<VariableDecl>& schema,
                            const std::string& outcome_name) {
  std::ifstream in(path);
  require(in.good(), "file-not-found", "cannot open dataset file '" + path + "'");
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "schema-mismatch", "empty file: no header row");
  const auto header = detail::split_csv_line(line);

  // accept either all schema columns or all minus the outcome, order fixed
  std::vector<VariableDecl> present;
  std::vector<std::string> expect_with, expect_without;
  for (const auto& d : schema) {
    expect_with.push_back(d.name);
    if (d.name != outcome_name) expect_without.push_back(d.name);
  }
  int outcome_col = -1;
  if (header == expect_with) {
    present = schema;
    for (std::size_t i = 0; i < schema.size(); ++i)
      if (schema[i].name == outcome_name) outcome_col = static_cast<int>(i);
  } else if (header == expect_without) {
    for (const auto& d : schema)
      if (d.name != outcome_name) present.push_back(d);
  } else {
    std::string got;
    for (const auto& h : header) got += (got.empty() ? "" : ",") + h;
    fail("schema-mismatch", "header [" + got + "] does not match the declared columns");
  }

  std::vector<std::vector<double>> cols(present.size());
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    const auto cells = detail::split_csv_line(line);
    require(cells.size() == present.size(), "type-error",
            "row " + std::to_string(row_no) + " has " + std::to_string(cells.size()) +
                " cells, expected " + std::to_string(present.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto& decl = present[c];
      double v = 0.0;
      require(!cells[c].empty(), "type-error",
              "row " + std::to_string(row_no) + ", column '" + decl.name + "': missing value");
      require(detail::parse_number(cells[c], v) && std::isfinite(v), "type-error",
              "row " + std::to_string(row_no) + ", column '" + decl.name + "': bad value '" +
                  cells[c] + "'");
      if (decl.kind == VarKind::Categorical) {
        bool ok = false;
        for (double lv : decl.levels) ok = ok || lv == v;
        require(ok, "domain-violation",
                "row " + std::to_string(row_no) + ", column '" + decl.name + "': value '" +
                    cells[c] + "' not in the declared domain");
      }
      cols[c].push_back(v);
    }
  }
  require(!cols.empty() && !cols[0].empty(), "empty-dataset", "dataset needs at least one row");
  return Dataset::from_columns(std::move(present), std::move(cols), outcome_col);
}

inline Dataset load_dataset(const std::string& path, const CausalGraph& g) {
  return load_dataset(path, g.nodes(), g.outcome_name());
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "io-error", "cannot write dataset file '" + path + "'");
  const auto& schema = ds.schema();
  for (std::size_t c = 0; c < schema.size(); ++c) out << (c ? "," : "") << schema[c].name;
  out << "\n";
  for (std::size_t r = 0; r < ds.n(); ++r) {
    for (std::size_t c = 0; c < schema.size(); ++c)
      out << (c ? "," : "") << util::format_double(ds.cell(r, c));
    out << "\n";
  }
}

}  // namespace cafe
