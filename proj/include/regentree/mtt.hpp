#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "regentree/tree.hpp"

namespace regentree {

// MTT text format, one tree per line:
//   node := '(' node (',' node)* ')' ':' length | ':' length
// The outermost node is the root edge.

inline std::string format_length(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline std::string serialize_tree(const MarkedTree& tree) {
  const auto& s = tree.shape();
  std::string out;
  // (node, next child); emit ":len" when a node is closed.
  std::vector<std::pair<Index, std::size_t>> stack{{0, 0}};
  while (!stack.empty()) {
    auto& [x, next] = stack.back();
    const Index node = x;
    const std::size_t k = s.child_count(node);
    if (next == 0 && k > 0) out += '(';
    if (next < k) {
      if (next > 0) out += ',';
      const Index c = s.children(node)[next++];
      stack.emplace_back(c, 0);
      continue;
    }
    if (k > 0) out += ')';
    out += ':';
    out += format_length(tree.length(node));
    stack.pop_back();
  }
  return out;
}

namespace detail {

[[noreturn]] inline void mtt_error(std::size_t line, std::size_t col, const std::string& what) {
  throw Error(ErrorKind::parse_error, "line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + what);
}

}  // namespace detail

/// Parses one MTT tree. Columns in errors are 0-based byte offsets.
inline MarkedTree parse_tree(std::string_view text, std::size_t line = 1) {
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t' || text[pos] == '\r')) ++pos;
  };
  auto read_length = [&]() -> double {
    skip_ws();
    if (pos >= text.size() || text[pos] != ':') detail::mtt_error(line, pos, "expected ':'");
    ++pos;
    skip_ws();
    double x = 0.0;
    const char* first = text.data() + pos;
    auto res = std::from_chars(first, text.data() + text.size(), x);
    if (res.ec != std::errc{} || res.ptr == first) detail::mtt_error(line, pos, "expected a length");
    if (!std::isfinite(x)) detail::mtt_error(line, pos, "length must be finite");
    if (x < 0.0 || std::signbit(x)) detail::mtt_error(line, pos, "length must be nonnegative");
    pos = static_cast<std::size_t>(res.ptr - text.data());
    return x;
  };

  TreeBuilder b;
  std::vector<Index> open;
  auto new_node = [&]() -> Index {
    if (b.size() == 0) return b.add_root(0.0);
    if (open.empty()) detail::mtt_error(line, pos, "trailing content after the root");
    return b.add_child(open.back(), 0.0);
  };

  bool expect_node = true;
  for (;;) {
    skip_ws();
    if (expect_node) {
      if (pos >= text.size()) detail::mtt_error(line, pos, "unexpected end of input");
      if (text[pos] == '(') {
        open.push_back(new_node());
        ++pos;
      } else if (text[pos] == ':') {
        const Index id = new_node();
        b.length(id) = read_length();
        expect_node = false;
      } else {
        detail::mtt_error(line, pos, "expected '(' or ':'");
      }
      continue;
    }
    if (open.empty()) {
      if (pos != text.size()) detail::mtt_error(line, pos, "trailing content after the root");
      break;
    }
    if (pos >= text.size()) detail::mtt_error(line, pos, "expected ',' or ')'");
    if (text[pos] == ',') {
      ++pos;
      expect_node = true;
    } else if (text[pos] == ')') {
      ++pos;
      const Index id = open.back();
      open.pop_back();
      b.length(id) = read_length();
    } else {
      detail::mtt_error(line, pos, "expected ',' or ')'");
    }
  }
  return b.build_marked();
}

/// Blank lines and lines starting with '#' are skipped.
inline std::vector<MarkedTree> parse_trees(std::istream& in) {
  std::vector<MarkedTree> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    out.push_back(parse_tree(line, lineno));
  }
  return out;
}

inline std::vector<MarkedTree> parse_tree_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io_error, "cannot open " + path);
  try {
    return parse_trees(in);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::parse_error) throw;
    throw Error(ErrorKind::parse_error, path + ": " + std::string(e.what()).substr(std::string("parse error: ").size()));
  }
}

inline void write_trees(std::ostream& out, const std::vector<MarkedTree>& trees) {
  for (const auto& t : trees) out << serialize_tree(t) << '\n';
}

}  // namespace regentree
