#pragma once

#include <cctype>
#include <string>
#include <vector>

#include "cafe/dataset.hpp"
#include "cafe/error.hpp"
#include "cafe/util.hpp"

namespace cafe {

enum class CmpOp { Lt, Le, Gt, Ge, Eq, Ne };

inline const char* to_string(CmpOp op) {
  switch (op) {
    case CmpOp::Lt: return "<";
    case CmpOp::Le: return "<=";
    case CmpOp::Gt: return ">";
    case CmpOp::Ge: return ">=";
    case CmpOp::Eq: return "=";
    case CmpOp::Ne: return "!=";
  }
  return "?";
}

/// Conjunction of atomic comparisons over dataset columns. An empty
/// conjunction selects every row. Parse with `parse_predicate`, bind against
/// a dataset before evaluating.
struct SubgroupPredicate {
  struct Atom {
    std::string feature;
    CmpOp op = CmpOp::Eq;
    double value = 0.0;
    int column = -1;  // set by bind()
  };

  std::vector<Atom> atoms;

  bool is_all_rows() const { return atoms.empty(); }

  void bind(const Dataset& ds) {
    for (auto& a : atoms) a.column = ds.column(a.feature);
  }

  bool bound() const {
    for (const auto& a : atoms)
      if (a.column < 0) return false;
    return true;
  }

  bool eval(const Dataset& ds, std::size_t row) const {
    for (const auto& a : atoms) {
      require(a.column >= 0, "unbound-predicate", "predicate evaluated before bind()");
      const double x = ds.cell(row, static_cast<std::size_t>(a.column));
      bool ok = false;
      switch (a.op) {
        case CmpOp::Lt: ok = x < a.value; break;
        case CmpOp::Le: ok = x <= a.value; break;
        case CmpOp::Gt: ok = x > a.value; break;
        case CmpOp::Ge: ok = x >= a.value; break;
        case CmpOp::Eq: ok = x == a.value; break;
        case CmpOp::Ne: ok = x != a.value; break;
      }
      if (!ok) return false;
    }
    return true;
  }

  std::string print() const {
    std::string out;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      if (i) out += " & ";
      out += atoms[i].feature;
      out += to_string(atoms[i].op);
      out += util::format_double(atoms[i].value);
    }
    return out;
  }

  bool operator==(const SubgroupPredicate& other) const {
    if (atoms.size() != other.atoms.size()) return false;
    for (std::size_t i = 0; i < atoms.size(); ++i)
      if (atoms[i].feature != other.atoms[i].feature || atoms[i].op != other.atoms[i].op ||
          atoms[i].value != other.atoms[i].value)
        return false;
    return true;
  }
};

namespace detail {

struct PredicateParser {
  const std::string& text;
  std::size_t pos = 0;

  [[noreturn]] void error(const std::string& what) const {
    fail("syntax-error", what + " at byte " + std::to_string(pos));
  }

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }

  bool eof() {
    skip_ws();
    return pos >= text.size();
  }

  std::string ident() {
    skip_ws();
    const std::size_t start = pos;
    auto head = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; };
    auto body = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
    if (pos >= text.size() || !head(text[pos])) error("expected identifier");
    while (pos < text.size() && body(text[pos])) ++pos;
    return text.substr(start, pos - start);
  }

  CmpOp op() {
    skip_ws();
    auto two = [&](char a, char b) {
      return pos + 1 < text.size() && text[pos] == a && text[pos + 1] == b;
    };
    if (two('<', '=')) { pos += 2; return CmpOp::Le; }
    if (two('>', '=')) { pos += 2; return CmpOp::Ge; }
    if (two('!', '=')) { pos += 2; return CmpOp::Ne; }
    if (pos < text.size()) {
      const char c = text[pos];
      if (c == '<') { ++pos; return CmpOp::Lt; }
      if (c == '>') { ++pos; return CmpOp::Gt; }
      if (c == '=') { ++pos; return CmpOp::Eq; }
    }
    error("expected comparison operator");
  }

  double literal() {
    skip_ws();
    const std::size_t start = pos;
    if (pos < text.size() && (text[pos] == '+' || text[pos] == '-')) ++pos;
    auto digit = [&] { return pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos])); };
    while (digit()) ++pos;
    if (pos < text.size() && text[pos] == '.') {
      ++pos;
      while (digit()) ++pos;
    }
    if (pos < text.size() && (text[pos] == 'e' || text[pos] == 'E')) {
      ++pos;
      if (pos < text.size() && (text[pos] == '+' || text[pos] == '-')) ++pos;
      while (digit()) ++pos;
    }
    double v = 0.0;
    const std::string tok = text.substr(start, pos - start);
    if (tok.empty() || !parse_number(tok, v)) {
      pos = start;
      error("expected numeric literal");
    }
    return v;
  }
};

}  // namespace detail

/// Parses `atom ("&" atom)*` with `atom := ident op literal`. Whitespace is
/// insignificant; the empty string is the all-rows predicate. Rejects
/// anything else with a byte-offset diagnostic.
inline SubgroupPredicate parse_predicate(const std::string& text) {
  SubgroupPredicate pred;
  detail::PredicateParser p{text};
  if (p.eof()) return pred;
  for (;;) {
    SubgroupPredicate::Atom a;
    a.feature = p.ident();
    a.op = p.op();
    a.value = p.literal();
    pred.atoms.push_back(std::move(a));
    if (p.eof()) break;
    p.skip_ws();
    if (p.text[p.pos] != '&') p.error("expected '&' or end of input");
    ++p.pos;
  }
  return pred;
}

/// Rows of `ds` satisfying `p`, as a view in original order.
inline Dataset select(const Dataset& ds, const SubgroupPredicate& p) {
  SubgroupPredicate bound = p;
  if (!bound.bound()) bound.bind(ds);
  std::vector<std::uint32_t> keep;
  for (std::size_t r = 0; r < ds.n(); ++r)
    if (bound.eval(ds, r)) keep.push_back(ds.row_index()[r]);
  return ds.view(std::move(keep));
}

/// The audit target: which rows (selector) and which features must carry no
/// causal influence. The product form (selector x feature set) covers every
/// subgroup scenario exercised here; ragged per-row feature sets are out of
/// scope.
struct UnlearningTarget {
  SubgroupPredicate selector;          // all-rows when empty
  std::vector<std::string> features;   // nonempty, outcome excluded

  /// Checks the target against a graph and dataset: features are declared
  /// non-outcome nodes and the materialized S is nonempty.
  void validate(const CausalGraph& g, const Dataset& ds) const {
    require(!features.empty(), "empty-target", "unlearning target needs at least one feature");
    for (const auto& f : features) {
      const int idx = g.index(f);
      require(idx != g.outcome(), "bad-target", "outcome '" + f + "' cannot be a target feature");
    }
    const Dataset rows = select(ds, selector);
    require(rows.n() >= 1, "empty-target", "target selector matches no rows");
  }
};

}  // namespace cafe
