#include "s2t/treebank.hpp"

#include "s2t/subword.hpp"

namespace s2t {

ConstituencyTree ConstituencyTree::leaf(std::string text) {
  if (text.empty()) throw std::invalid_argument("leaf text must be nonempty");
  ConstituencyTree t;
  t.label_ = std::move(text);
  return t;
}

ConstituencyTree ConstituencyTree::node(std::string label, std::vector<ConstituencyTree> children) {
  if (label.empty()) throw std::invalid_argument("node label must be nonempty");
  if (children.empty()) throw std::invalid_argument("internal node needs at least one child");
  ConstituencyTree t;
  t.label_ = std::move(label);
  t.children_ = std::move(children);
  return t;
}

namespace {

void collect_yield(const ConstituencyTree& t, std::vector<std::string>& out) {
  if (t.is_leaf()) {
    out.push_back(t.label());
    return;
  }
  for (const auto& c : t.children()) collect_yield(c, out);
}

void emit_linear(const ConstituencyTree& t, LinearTree& out) {
  if (t.is_leaf()) {
    out.push_back(TreeToken::terminal(t.label()));
    return;
  }
  out.push_back(TreeToken::open(t.label()));
  for (const auto& c : t.children()) emit_linear(c, out);
  out.push_back(TreeToken::close(t.label()));
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

}  // namespace

std::vector<std::string> ConstituencyTree::yield() const {
  std::vector<std::string> out;
  collect_yield(*this, out);
  return out;
}

std::size_t ConstituencyTree::num_leaves() const {
  if (is_leaf()) return 1;
  std::size_t n = 0;
  for (const auto& c : children_) n += c.num_leaves();
  return n;
}

std::size_t ConstituencyTree::num_internal() const {
  if (is_leaf()) return 0;
  std::size_t n = 1;
  for (const auto& c : children_) n += c.num_internal();
  return n;
}

const char* to_string(TreeErrorKind kind) {
  switch (kind) {
    case TreeErrorKind::UnmatchedClose: return "UnmatchedClose";
    case TreeErrorKind::LabelMismatch: return "LabelMismatch";
    case TreeErrorKind::UnclosedOpen: return "UnclosedOpen";
    case TreeErrorKind::EmptyConstituent: return "EmptyConstituent";
    case TreeErrorKind::MultipleRoots: return "MultipleRoots";
  }
  return "?";
}

InvalidTree::InvalidTree(TreeError error)
    : std::runtime_error(std::string("invalid tree: ") + to_string(error.kind) + " at token " +
                         std::to_string(error.position)),
      error_(error) {}

SyntaxError::SyntaxError(std::size_t position, const std::string& what)
    : std::runtime_error("syntax error at " + std::to_string(position) + ": " + what), position_(position) {}

LinearTree linearize(const ConstituencyTree& tree) {
  LinearTree out;
  out.reserve(tree.num_leaves() + 2 * tree.num_internal());
  emit_linear(tree, out);
  return out;
}

ValidityReport validate(const LinearTree& tokens) {
  auto fail = [](std::size_t pos, TreeErrorKind kind) {
    return ValidityReport{false, TreeError{pos, kind}};
  };
  if (tokens.empty()) return fail(0, TreeErrorKind::MultipleRoots);

  struct Frame {
    const std::string* label;
    bool has_child;
  };
  std::vector<Frame> stack;
  bool root_seen = false;

  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const TreeToken& tok = tokens[i];
    switch (tok.kind) {
      case TreeToken::Kind::Open:
        if (stack.empty()) {
          if (root_seen) return fail(i, TreeErrorKind::MultipleRoots);
          root_seen = true;
        } else {
          stack.back().has_child = true;
        }
        stack.push_back({&tok.text, false});
        break;
      case TreeToken::Kind::Close:
        if (stack.empty()) return fail(i, TreeErrorKind::UnmatchedClose);
        if (*stack.back().label != tok.text) return fail(i, TreeErrorKind::LabelMismatch);
        if (!stack.back().has_child) return fail(i, TreeErrorKind::EmptyConstituent);
        stack.pop_back();
        break;
      case TreeToken::Kind::Terminal:
        // A terminal outside every bracket is a root-level element of its own.
        if (stack.empty()) return fail(i, TreeErrorKind::MultipleRoots);
        stack.back().has_child = true;
        break;
    }
  }
  if (!stack.empty()) return fail(tokens.size(), TreeErrorKind::UnclosedOpen);
  return {};
}

ConstituencyTree parse_linear(const LinearTree& tokens) {
  ValidityReport report = validate(tokens);
  if (!report.valid) throw InvalidTree(*report.first_error);

  struct Pending {
    std::string label;
    std::vector<ConstituencyTree> children;
  };
  std::vector<Pending> stack;
  std::optional<ConstituencyTree> root;
  for (const TreeToken& tok : tokens) {
    if (tok.is_open()) {
      stack.push_back({tok.text, {}});
    } else if (tok.is_terminal()) {
      stack.back().children.push_back(ConstituencyTree::leaf(tok.text));
    } else {
      Pending done = std::move(stack.back());
      stack.pop_back();
      auto node = ConstituencyTree::node(std::move(done.label), std::move(done.children));
      if (stack.empty())
        root = std::move(node);
      else
        stack.back().children.push_back(std::move(node));
    }
  }
  return std::move(*root);
}

std::vector<std::string> surface(const LinearTree& tokens, std::string_view continuation_marker) {
  std::vector<std::string> words;
  for (const TreeToken& tok : tokens)
    if (tok.is_terminal()) words.push_back(tok.text);
  return revert_bpe(words, continuation_marker);
}

namespace {

ConstituencyTree lexicalize_node(const ConstituencyTree& t, bool is_root) {
  if (t.is_leaf()) return t;
  const auto& kids = t.children();
  if (!is_root && kids.size() == 1 && kids.front().is_leaf()) return kids.front();
  std::vector<ConstituencyTree> out;
  out.reserve(kids.size());
  for (const auto& c : kids) out.push_back(lexicalize_node(c, false));
  return ConstituencyTree::node(t.label(), std::move(out));
}

class PtbReader {
 public:
  explicit PtbReader(std::string_view text) : text_(text) {}

  ConstituencyTree read_top() {
    skip_space();
    if (pos_ >= text_.size() || text_[pos_] != '(') throw SyntaxError(pos_, "expected '('");
    ++pos_;
    skip_space();
    ConstituencyTree result = [&] {
      if (pos_ < text_.size() && text_[pos_] == '(') {
        // Unlabeled wrapper around a single tree.
        ConstituencyTree inner = read_node();
        skip_space();
        expect_close();
        return inner;
      }
      return read_rest_of_node();
    }();
    skip_space();
    if (pos_ != text_.size()) throw SyntaxError(pos_, "trailing input after tree");
    return result;
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
  }

  void expect_close() {
    if (pos_ >= text_.size()) throw SyntaxError(pos_, "unexpected end of input");
    if (text_[pos_] != ')') throw SyntaxError(pos_, "expected ')'");
    ++pos_;
  }

  std::string read_atom() {
    std::size_t start = pos_;
    while (pos_ < text_.size() && !is_space(text_[pos_]) && text_[pos_] != '(' && text_[pos_] != ')') ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }

  ConstituencyTree read_node() {
    // at '('
    ++pos_;
    skip_space();
    return read_rest_of_node();
  }

  ConstituencyTree read_rest_of_node() {
    std::size_t label_pos = pos_;
    std::string label = read_atom();
    if (label.empty()) {
      if (pos_ >= text_.size()) throw SyntaxError(pos_, "unexpected end of input");
      throw SyntaxError(label_pos, "missing constituent label");
    }
    std::vector<ConstituencyTree> children;
    for (;;) {
      skip_space();
      if (pos_ >= text_.size()) throw SyntaxError(pos_, "unexpected end of input");
      char c = text_[pos_];
      if (c == ')') {
        if (children.empty()) throw SyntaxError(pos_, "empty constituent");
        ++pos_;
        break;
      }
      if (c == '(')
        children.push_back(read_node());
      else
        children.push_back(ConstituencyTree::leaf(read_atom()));
    }
    return ConstituencyTree::node(std::move(label), std::move(children));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

void print_ptb_into(const ConstituencyTree& t, std::string& out) {
  if (t.is_leaf()) {
    out += t.label();
    return;
  }
  out += '(';
  out += t.label();
  for (const auto& c : t.children()) {
    out += ' ';
    print_ptb_into(c, out);
  }
  out += ')';
}

}  // namespace

ConstituencyTree lexicalize(const ConstituencyTree& ptb_tree) {
  if (ptb_tree.is_leaf()) throw MalformedPreterminal("cannot lexicalize a bare leaf '" + ptb_tree.label() + "'");
  return lexicalize_node(ptb_tree, true);
}

ConstituencyTree parse_ptb(std::string_view text) { return PtbReader(text).read_top(); }

std::string print_ptb(const ConstituencyTree& tree) {
  std::string out;
  print_ptb_into(tree, out);
  return out;
}

std::vector<std::size_t> terminal_positions(const LinearTree& tokens) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i].is_terminal()) out.push_back(i);
  return out;
}

std::string serialize_token(const TreeToken& token) {
  switch (token.kind) {
    case TreeToken::Kind::Open: return "(" + token.text;
    case TreeToken::Kind::Close: return ")" + token.text;
    case TreeToken::Kind::Terminal: break;
  }
  const std::string& w = token.text;
  if (!w.empty() && (w[0] == '(' || w[0] == ')' || w[0] == '\\')) return "\\" + w;
  return w;
}

TreeToken tokenize_token(std::string_view text) {
  if (text.empty()) throw SyntaxError(0, "empty token");
  char c = text[0];
  if (c == '(' || c == ')') {
    if (text.size() == 1) throw SyntaxError(0, std::string("unlabeled bracket '") + c + "'");
    std::string label(text.substr(1));
    return c == '(' ? TreeToken::open(std::move(label)) : TreeToken::close(std::move(label));
  }
  if (c == '\\') {
    if (text.size() == 1) throw SyntaxError(0, "empty escaped terminal");
    return TreeToken::terminal(std::string(text.substr(1)));
  }
  return TreeToken::terminal(std::string(text));
}

std::string serialize(const LinearTree& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += serialize_token(tokens[i]);
  }
  return out;
}

LinearTree tokenize(std::string_view line) {
  LinearTree out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    if (i >= line.size()) break;
    std::size_t start = i;
    while (i < line.size() && !is_space(line[i])) ++i;
    try {
      out.push_back(tokenize_token(line.substr(start, i - start)));
    } catch (const SyntaxError& e) {
      throw SyntaxError(out.size(), e.what());
    }
  }
  return out;
}

bool is_bracket_symbol(std::string_view text) {
  return text.size() >= 2 && (text[0] == '(' || text[0] == ')');
}

}  // namespace s2t
