// Linearized, lexicalized constituency trees.
//
// A tree such as S(NP(Jane) VP(had NP(a cat)) .) under ROOT is written as
//
//   (ROOT (S (NP Jane )NP (VP had (NP a cat )NP )VP . )S )ROOT
//
// Closing brackets carry their label so that mismatched brackets can be
// detected in model output. Invalid token sequences are representable; only
// parse_linear() insists on well-formedness.

#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace s2t {

struct TreeToken {
  enum class Kind { Open, Close, Terminal };

  Kind kind = Kind::Terminal;
  std::string text;  // label for brackets, word for terminals

  static TreeToken open(std::string label) { return {Kind::Open, std::move(label)}; }
  static TreeToken close(std::string label) { return {Kind::Close, std::move(label)}; }
  static TreeToken terminal(std::string word) { return {Kind::Terminal, std::move(word)}; }

  bool is_open() const { return kind == Kind::Open; }
  bool is_close() const { return kind == Kind::Close; }
  bool is_terminal() const { return kind == Kind::Terminal; }

  bool operator==(const TreeToken&) const = default;
};

using LinearTree = std::vector<TreeToken>;

class ConstituencyTree {
 public:
  static ConstituencyTree leaf(std::string text);
  static ConstituencyTree node(std::string label, std::vector<ConstituencyTree> children);

  bool is_leaf() const { return children_.empty(); }
  // Label of an internal node, or text of a leaf.
  const std::string& label() const { return label_; }
  const std::vector<ConstituencyTree>& children() const { return children_; }

  std::vector<std::string> yield() const;
  std::size_t num_leaves() const;
  std::size_t num_internal() const;

  bool operator==(const ConstituencyTree&) const = default;

 private:
  std::string label_;
  std::vector<ConstituencyTree> children_;
};

enum class TreeErrorKind { UnmatchedClose, LabelMismatch, UnclosedOpen, EmptyConstituent, MultipleRoots };

const char* to_string(TreeErrorKind kind);

struct TreeError {
  std::size_t position = 0;
  TreeErrorKind kind = TreeErrorKind::MultipleRoots;
  bool operator==(const TreeError&) const = default;
};

struct ValidityReport {
  bool valid = true;
  std::optional<TreeError> first_error;
};

class InvalidTree : public std::runtime_error {
 public:
  explicit InvalidTree(TreeError error);
  const TreeError& error() const { return error_; }

 private:
  TreeError error_;
};

class SyntaxError : public std::runtime_error {
 public:
  SyntaxError(std::size_t position, const std::string& what);
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

class MalformedPreterminal : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

LinearTree linearize(const ConstituencyTree& tree);
ConstituencyTree parse_linear(const LinearTree& tokens);
ValidityReport validate(const LinearTree& tokens);

// Drops brackets and joins sub-words ending in `continuation_marker` with their
// successor. Total: works on any token sequence, valid or not.
std::vector<std::string> surface(const LinearTree& tokens, std::string_view continuation_marker = "@@");

ConstituencyTree lexicalize(const ConstituencyTree& ptb_tree);

ConstituencyTree parse_ptb(std::string_view text);
std::string print_ptb(const ConstituencyTree& tree);

std::vector<std::size_t> terminal_positions(const LinearTree& tokens);

// Token-level text forms of the linearized-tree file format.
std::string serialize_token(const TreeToken& token);
// Throws SyntaxError for a bare "(" or ")".
TreeToken tokenize_token(std::string_view text);
std::string serialize(const LinearTree& tokens);
LinearTree tokenize(std::string_view line);

// True for strings of the form "(X" or ")X" with a nonempty label; used to
// classify decoder vocabulary entries without a full tokenize.
bool is_bracket_symbol(std::string_view text);

}  // namespace s2t
