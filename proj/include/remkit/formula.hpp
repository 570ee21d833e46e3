#pragma once

// Model formula parser.
//
// Grammar:
//   formula   := term ('+' term)* ('|' 'strata' '(' NAME ')')?
//   term      := NAME
//              | 's'  '(' NAME ',' 'k' '=' INT (',' 'basis' '=' ('bs'|'tp'))? ')'
//              | 'tv' '(' NAME ',' 'k' '=' INT ')'
//              | 're' '(' NAME ')'
//
// NAME refers to a declared statistic (or, for re(), a grouping factor such
// as sender or receiver). Errors carry the offending position and are
// rendered with a caret under the formula text.

#include <cctype>
#include <string>
#include <vector>

#include "remkit/error.hpp"

namespace remkit {

enum class TermKind { linear, smooth, time_varying, random_effect };

enum class SmoothBasis { bspline, thinplate };

struct FormulaTerm {
  TermKind kind = TermKind::linear;
  std::string target;
  int k = 0;
  SmoothBasis basis = SmoothBasis::bspline;
};

struct Formula {
  std::vector<FormulaTerm> terms;
  std::string strata;  // empty when absent
};

namespace detail {

[[noreturn]] inline void formula_fail(const std::string& text, std::size_t pos,
                                      const std::string& what) {
  std::string msg = "formula error at position " + std::to_string(pos) + ": " + what;
  msg += "\n  " + text + "\n  ";
  msg.append(pos, ' ');
  msg += '^';
  fail(errc::parse, msg);
}

class FormulaLexer {
 public:
  explicit FormulaLexer(const std::string& text) : text_(text) {}

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool done() {
    skip_space();
    return pos_ >= text_.size();
  }

  std::size_t pos() {
    skip_space();
    return pos_;
  }

  char peek() {
    skip_space();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  void expect(char c, const std::string& what) {
    skip_space();
    if (pos_ >= text_.size() || text_[pos_] != c) formula_fail(text_, pos_, what);
    ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  std::string identifier(const std::string& what) {
    skip_space();
    const std::size_t start = pos_;
    auto head = [](char c) {
      return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
    };
    auto tail = [](char c) {
      return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
    };
    if (pos_ >= text_.size() || !head(text_[pos_])) formula_fail(text_, pos_, what);
    while (pos_ < text_.size() && tail(text_[pos_])) ++pos_;
    return text_.substr(start, pos_ - start);
  }

  int integer(const std::string& what) {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (pos_ == start) formula_fail(text_, start, what);
    return std::stoi(text_.substr(start, pos_ - start));
  }

  const std::string& text() const { return text_; }

 private:
  const std::string& text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// Parses a formula and resolves every referenced name. `stat_names` are the
// declared statistics; `factor_names` are the admissible grouping factors
// for re(). Duplicate terms and unknown names are errors.
inline Formula parse_formula(const std::string& text, const std::vector<std::string>& stat_names,
                             const std::vector<std::string>& factor_names = {"sender", "receiver",
                                                                             "type"}) {
  detail::FormulaLexer lex(text);
  Formula out;

  auto known_stat = [&](const std::string& name) {
    for (const auto& s : stat_names)
      if (s == name) return true;
    return false;
  };
  auto known_factor = [&](const std::string& name) {
    for (const auto& f : factor_names)
      if (f == name) return true;
    return false;
  };
  auto check_duplicate = [&](const FormulaTerm& term, std::size_t pos) {
    for (const auto& t : out.terms)
      if (t.kind == term.kind && t.target == term.target)
        detail::formula_fail(text, pos, "duplicate term '" + term.target + "'");
  };

  if (lex.done()) fail(errc::parse, "empty formula");

  bool more = true;
  while (more) {
    const std::size_t term_pos = lex.pos();
    const std::string head = lex.identifier("expected a term name");
    FormulaTerm term;

    const bool call = lex.peek() == '(' &&
                      (head == "s" || head == "tv" || head == "re");
    if (!call) {
      term.kind = TermKind::linear;
      term.target = head;
      if (!known_stat(head))
        detail::formula_fail(text, term_pos, "unknown statistic '" + head + "'");
    } else {
      lex.expect('(', "expected '('");
      const std::size_t name_pos = lex.pos();
      term.target = lex.identifier("expected a name");
      if (head == "re") {
        term.kind = TermKind::random_effect;
        if (!known_factor(term.target))
          detail::formula_fail(text, name_pos,
                               "unknown grouping factor '" + term.target + "'");
      } else {
        term.kind = head == "s" ? TermKind::smooth : TermKind::time_varying;
        if (!known_stat(term.target))
          detail::formula_fail(text, name_pos, "unknown statistic '" + term.target + "'");
        lex.expect(',', "expected ',' before k=");
        const std::size_t k_pos = lex.pos();
        const std::string kw = lex.identifier("expected k=");
        if (kw != "k") detail::formula_fail(text, k_pos, "expected k=");
        lex.expect('=', "expected '=' after k");
        const std::size_t kval_pos = lex.pos();
        term.k = lex.integer("expected an integer basis dimension");
        if (term.k < 3)
          detail::formula_fail(text, kval_pos, "basis dimension k must be at least 3");
        if (head == "s" && lex.accept(',')) {
          const std::size_t b_pos = lex.pos();
          const std::string bw = lex.identifier("expected basis=");
          if (bw != "basis") detail::formula_fail(text, b_pos, "expected basis=");
          lex.expect('=', "expected '=' after basis");
          const std::size_t bval_pos = lex.pos();
          const std::string bv = lex.identifier("expected a basis name");
          if (bv == "bs")
            term.basis = SmoothBasis::bspline;
          else if (bv == "tp")
            term.basis = SmoothBasis::thinplate;
          else
            detail::formula_fail(text, bval_pos, "unknown basis '" + bv + "' (use bs or tp)");
        }
        if (head == "tv") term.basis = SmoothBasis::thinplate;
      }
      lex.expect(')', "expected ')'");
    }

    check_duplicate(term, term_pos);
    out.terms.push_back(term);
    more = lex.accept('+');
  }

  if (lex.accept('|')) {
    const std::size_t s_pos = lex.pos();
    const std::string kw = lex.identifier("expected strata(...)");
    if (kw != "strata") detail::formula_fail(text, s_pos, "expected strata(...)");
    lex.expect('(', "expected '('");
    out.strata = lex.identifier("expected a stratification name");
    lex.expect(')', "expected ')'");
  }

  if (!lex.done()) detail::formula_fail(text, lex.pos(), "unexpected trailing input");
  return out;
}

}  // namespace remkit
