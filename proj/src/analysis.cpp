#include "s2t/analysis.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "s2t/subword.hpp"

namespace s2t {

using Eigen::Index;

std::vector<std::size_t> Alignment::as_function() const {
  std::vector<std::size_t> out;
  out.reserve(links.size());
  for (std::size_t i = 0; i < links.size(); ++i) {
    if (i > 0 && links[i].target == links[i - 1].target)
      throw std::invalid_argument("alignment is not a function: target " + std::to_string(links[i].target) +
                                  " has several links");
    out.push_back(links[i].source);
  }
  return out;
}

std::string Alignment::to_line() const {
  std::string out;
  for (std::size_t i = 0; i < links.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(links[i].source) + "-" + std::to_string(links[i].target);
  }
  return out;
}

Alignment Alignment::from_line(const std::string& line) {
  Alignment a;
  for (const auto& item : split_whitespace(line)) {
    const auto dash = item.find('-');
    if (dash == std::string::npos || dash == 0 || dash + 1 == item.size())
      throw std::invalid_argument("bad alignment pair '" + item + "'");
    std::size_t used1 = 0, used2 = 0;
    const std::string s = item.substr(0, dash), t = item.substr(dash + 1);
    AlignmentLink link;
    try {
      link.source = std::stoul(s, &used1);
      link.target = std::stoul(t, &used2);
    } catch (const std::exception&) {
      throw std::invalid_argument("bad alignment pair '" + item + "'");
    }
    if (used1 != s.size() || used2 != t.size()) throw std::invalid_argument("bad alignment pair '" + item + "'");
    a.links.push_back(link);
  }
  std::sort(a.links.begin(), a.links.end());
  a.links.erase(std::unique(a.links.begin(), a.links.end()), a.links.end());
  return a;
}

bool is_terminal_row_token(const std::string& token) {
  return token != kEosToken && !is_bracket_symbol(token);
}

namespace {

void check_record(const AttentionRecord& r) {
  if (r.weights.rows() != static_cast<Index>(r.tgt_tokens.size()) ||
      r.weights.cols() != static_cast<Index>(r.src_tokens.size()))
    throw std::invalid_argument("attention record dimensions do not match its tokens");
}

}  // namespace

Alignment hard_align_argmax(const AttentionRecord& record, bool terminal_only) {
  check_record(record);
  Alignment a;
  for (std::size_t i = 0; i < record.tgt_tokens.size(); ++i) {
    const std::string& tok = record.tgt_tokens[i];
    if (tok == kEosToken) continue;
    if (terminal_only && !is_terminal_row_token(tok)) continue;
    if (record.weights.cols() == 0) continue;
    Index best = 0;
    for (Index j = 1; j < record.weights.cols(); ++j)
      if (record.weights(static_cast<Index>(i), j) > record.weights(static_cast<Index>(i), best)) best = j;
    a.links.push_back({i, static_cast<std::size_t>(best)});
  }
  return a;
}

Alignment hard_align_threshold(const AttentionRecord& record, double threshold) {
  check_record(record);
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("threshold must be in (0, 1)");
  Alignment a;
  for (std::size_t i = 0; i < record.tgt_tokens.size(); ++i) {
    if (record.tgt_tokens[i] == kEosToken) continue;
    for (Index j = 0; j < record.weights.cols(); ++j)
      if (record.weights(static_cast<Index>(i), j) > threshold) a.links.push_back({i, static_cast<std::size_t>(j)});
  }
  return a;
}

Alignment to_terminal_ordinals(const Alignment& alignment, const AttentionRecord& record) {
  std::vector<long> ordinal(record.tgt_tokens.size(), -1);
  long next = 0;
  for (std::size_t i = 0; i < record.tgt_tokens.size(); ++i)
    if (is_terminal_row_token(record.tgt_tokens[i])) ordinal[i] = next++;
  Alignment out;
  for (const auto& l : alignment.links)
    if (l.target < ordinal.size() && ordinal[l.target] >= 0)
      out.links.push_back({static_cast<std::size_t>(ordinal[l.target]), l.source});
  return out;
}

double distortion(std::span<const std::size_t> aligned_sources) {
  const std::size_t n = aligned_sources.size();
  if (n <= 1) return 0.0;
  std::size_t jumps = 0;
  for (std::size_t i = 1; i < n; ++i) {
    const std::size_t a = aligned_sources[i], b = aligned_sources[i - 1];
    jumps += a > b ? a - b : b - a;
  }
  return static_cast<double>(jumps) / static_cast<double>(n);
}

double distortion(const Alignment& argmax_alignment) {
  const auto a = argmax_alignment.as_function();
  return distortion(std::span<const std::size_t>(a));
}

double DistortionReport::mean() const {
  if (scores.empty()) return 0.0;
  double s = 0.0;
  for (double d : scores) s += d;
  return s / static_cast<double>(scores.size());
}

DistortionReport distortion_histogram(std::span<const double> scores) {
  DistortionReport r;
  r.scores.assign(scores.begin(), scores.end());
  for (double d : scores) {
    if (!(d >= 0.0)) throw std::invalid_argument("distortion scores must be nonnegative");
    const double bin = std::floor(d);
    r.histogram[bin >= static_cast<double>(kDistortionBins - 1) ? kDistortionBins - 1 : static_cast<std::size_t>(bin)]++;
  }
  return r;
}

std::string DistortionReport::to_table() const {
  std::ostringstream out;
  out << "bin\tcount\n";
  for (std::size_t b = 0; b < kDistortionBins; ++b)
    out << b << (b + 1 == kDistortionBins ? "+" : "") << '\t' << histogram[b] << '\n';
  out << "sentences\t" << scores.size() << "\nmean\t" << mean() << '\n';
  return out.str();
}

std::string DistortionReport::to_json() const {
  nlohmann::ordered_json j;
  j["sentences"] = scores.size();
  j["mean"] = mean();
  j["histogram"] = histogram;
  j["scores"] = scores;
  return j.dump();
}

std::vector<double> distortion_over_checkpoints(std::span<const ModelParams> checkpoints,
                                                const std::vector<std::vector<std::string>>& dev_sources,
                                                const Vocabulary& src_vocab, const Vocabulary& tgt_vocab,
                                                const BeamOptions& options) {
  std::vector<double> means;
  for (const ModelParams& p : checkpoints) {
    auto translations = translate_corpus(std::span<const ModelParams>(&p, 1), dev_sources, src_vocab, tgt_vocab, options);
    std::vector<double> scores;
    for (const auto& tr : translations) scores.push_back(distortion(hard_align_argmax(tr.attention, true)));
    means.push_back(distortion_histogram(scores).mean());
  }
  return means;
}

// ---------------------------------------------------------------------------
// GHKM minimal rules

std::string GhkmRule::rhs_string() const {
  std::string out;
  for (std::size_t i = 0; i < rhs.size(); ++i) {
    if (i) out += ' ';
    if (rhs[i].is_variable)
      out += "x" + std::to_string(rhs[i].variable);
    else
      out += "\"" + rhs[i].literal + "\"";
  }
  return out;
}

namespace {

struct FlatNode {
  const ConstituencyTree* tree = nullptr;
  std::vector<std::size_t> kids;
  std::size_t first_leaf = 0, end_leaf = 0;
  std::set<std::size_t> span;
  bool frontier = false;
  std::size_t lo = 0, hi = 0;
};

class GhkmExtractor {
 public:
  GhkmExtractor(const ConstituencyTree& tree, const std::vector<std::string>& src, const Alignment& alignment)
      : src_(src) {
    flatten(tree);
    const std::size_t leaves = leaf_nodes_.size();
    aligned_leaves_.resize(src.size());
    for (const auto& l : alignment.links) {
      if (l.target >= leaves || l.source >= src.size())
        throw std::invalid_argument("alignment link " + std::to_string(l.source) + "-" + std::to_string(l.target) +
                                    " is outside the sentence pair");
      nodes_[leaf_nodes_[l.target]].span.insert(l.source);
      aligned_leaves_[l.source].push_back(l.target);
    }
    for (std::size_t n = nodes_.size(); n-- > 0;)
      for (std::size_t k : nodes_[n].kids) nodes_[n].span.insert(nodes_[k].span.begin(), nodes_[k].span.end());
    for (auto& node : nodes_) mark_frontier(node);
  }

  GhkmExtraction run() {
    GhkmExtraction out;
    for (std::size_t n = 0; n < nodes_.size(); ++n) {
      if (nodes_[n].kids.empty() || !nodes_[n].frontier) continue;
      try {
        out.rules.push_back(rule_at(n));
      } catch (const OverlappingVariableSpans& e) {
        out.skipped.push_back(e.what());
      }
    }
    return out;
  }

 private:
  std::size_t flatten(const ConstituencyTree& t) {
    const std::size_t id = nodes_.size();
    nodes_.emplace_back();
    nodes_[id].tree = &t;
    nodes_[id].first_leaf = leaf_nodes_.size();
    if (t.is_leaf()) {
      leaf_nodes_.push_back(id);
    } else {
      for (const auto& c : t.children()) {
        std::size_t k = flatten(c);
        nodes_[id].kids.push_back(k);
      }
    }
    nodes_[id].end_leaf = leaf_nodes_.size();
    return id;
  }

  void mark_frontier(FlatNode& node) const {
    if (node.span.empty()) return;
    node.lo = *node.span.begin();
    node.hi = *node.span.rbegin();
    for (std::size_t s = node.lo; s <= node.hi; ++s)
      for (std::size_t leaf : aligned_leaves_[s])
        if (leaf < node.first_leaf || leaf >= node.end_leaf) return;
    node.frontier = true;
  }

  bool is_leaf(std::size_t n) const { return nodes_[n].kids.empty(); }

  void build_lhs(std::size_t n, std::string& out, std::vector<std::size_t>& vars) const {
    const FlatNode& node = nodes_[n];
    const bool mixed = std::any_of(node.kids.begin(), node.kids.end(), [&](std::size_t k) { return !is_leaf(k); });
    out += node.tree->label();
    out += '(';
    for (std::size_t i = 0; i < node.kids.size(); ++i) {
      if (i) out += ' ';
      const std::size_t c = node.kids[i];
      const FlatNode& kid = nodes_[c];
      if (is_leaf(c)) {
        // A terminal becomes a TER variable only beside phrase-level siblings;
        // all-terminal phrases keep their words as literals.
        if (kid.frontier && mixed) {
          out += "x" + std::to_string(vars.size()) + ":TER";
          vars.push_back(c);
        } else {
          out += kid.tree->label();
        }
      } else if (kid.frontier) {
        out += "x" + std::to_string(vars.size()) + ":" + kid.tree->label();
        vars.push_back(c);
      } else {
        build_lhs(c, out, vars);
      }
    }
    out += ')';
  }

  GhkmRule rule_at(std::size_t n) const {
    GhkmRule rule;
    std::vector<std::size_t> vars;
    build_lhs(n, rule.lhs, vars);
    rule.closure = {nodes_[n].lo, nodes_[n].hi};
    for (std::size_t v : vars) rule.variable_closures.emplace_back(nodes_[v].lo, nodes_[v].hi);
    for (std::size_t a = 0; a < vars.size(); ++a)
      for (std::size_t b = a + 1; b < vars.size(); ++b) {
        const auto& x = rule.variable_closures[a];
        const auto& y = rule.variable_closures[b];
        if (x.first <= y.second && y.first <= x.second)
          throw OverlappingVariableSpans("variables x" + std::to_string(a) + " and x" + std::to_string(b) +
                                         " overlap in " + rule.lhs);
      }

    std::vector<std::size_t> order;
    for (std::size_t s = rule.closure.first; s <= rule.closure.second; ++s) {
      auto hit = std::find_if(rule.variable_closures.begin(), rule.variable_closures.end(),
                              [&](const auto& c) { return c.first <= s && s <= c.second; });
      if (hit != rule.variable_closures.end()) {
        if (hit->first == s) {
          const auto v = static_cast<std::size_t>(hit - rule.variable_closures.begin());
          rule.rhs.push_back({true, v, {}, s});
          order.push_back(v);
        }
      } else {
        rule.rhs.push_back({false, 0, src_[s], s});
      }
    }
    rule.reordering = order.size() >= 2 && !std::is_sorted(order.begin(), order.end());
    return rule;
  }

  const std::vector<std::string>& src_;
  std::vector<FlatNode> nodes_;
  std::vector<std::size_t> leaf_nodes_;
  std::vector<std::vector<std::size_t>> aligned_leaves_;
};

}  // namespace

GhkmExtraction extract_ghkm(const ConstituencyTree& tree, const std::vector<std::string>& src_tokens,
                            const Alignment& alignment) {
  return GhkmExtractor(tree, src_tokens, alignment).run();
}

std::vector<RuleGroup> group_rules(std::span<const GhkmRule> rules, std::size_t top_k) {
  struct Acc {
    std::map<std::string, std::pair<std::size_t, bool>> rhs;
  };
  std::map<std::string, Acc> by_lhs;
  for (const auto& r : rules) {
    auto& slot = by_lhs[r.lhs].rhs[r.rhs_string()];
    slot.first += r.count;
    slot.second = r.reordering;
  }
  std::vector<RuleGroup> groups;
  for (auto& [lhs, acc] : by_lhs) {
    RuleGroup g;
    g.lhs = lhs;
    for (auto& [rhs, cf] : acc.rhs) {
      g.total += cf.first;
      if (cf.second) g.reordering_total += cf.first;
      g.top.push_back({rhs, cf.first, cf.second});
    }
    std::stable_sort(g.top.begin(), g.top.end(), [](const RhsCount& a, const RhsCount& b) {
      if (a.count != b.count) return a.count > b.count;
      return a.rhs < b.rhs;
    });
    if (g.top.size() > top_k) g.top.resize(top_k);
    groups.push_back(std::move(g));
  }
  std::stable_sort(groups.begin(), groups.end(), [](const RuleGroup& a, const RuleGroup& b) {
    return a.reordering_total > b.reordering_total;
  });
  return groups;
}

void write_rules(std::ostream& out, std::span<const GhkmRule> rules) {
  std::map<std::pair<std::string, std::string>, std::pair<std::size_t, bool>> merged;
  for (const auto& r : rules) {
    auto& slot = merged[{r.lhs, r.rhs_string()}];
    slot.first += r.count;
    slot.second = r.reordering;
  }
  for (const auto& [key, cf] : merged)
    out << key.first << '\t' << key.second << '\t' << cf.first << '\t' << (cf.second ? 1 : 0) << '\n';
}

std::vector<GhkmRule> read_rules(std::istream& in) {
  std::vector<GhkmRule> rules;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 4) throw std::runtime_error("rules line " + std::to_string(lineno) + ": expected 4 fields");
    GhkmRule r;
    r.lhs = fields[0];
    for (const auto& tok : split_whitespace(fields[1])) {
      RhsItem item;
      if (tok.size() >= 2 && tok.front() == '"' && tok.back() == '"') {
        item.literal = tok.substr(1, tok.size() - 2);
      } else if (tok.size() >= 2 && tok[0] == 'x') {
        item.is_variable = true;
        item.variable = std::stoul(tok.substr(1));
      } else {
        throw std::runtime_error("rules line " + std::to_string(lineno) + ": bad rhs item '" + tok + "'");
      }
      r.rhs.push_back(std::move(item));
    }
    r.count = std::stoul(fields[2]);
    r.reordering = fields[3] == "1";
    rules.push_back(std::move(r));
  }
  return rules;
}

std::array<std::size_t, 5> count_relative_pronouns(const std::vector<std::vector<std::string>>& lines) {
  std::array<std::size_t, 5> counts{};
  for (const auto& line : lines)
    for (const auto& tok : line) {
      std::string lower = tok;
      std::transform(lower.begin(), lower.end(), lower.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      for (std::size_t k = 0; k < kRelativePronouns.size(); ++k)
        if (lower == kRelativePronouns[k]) ++counts[k];
    }
  return counts;
}

FirstBracketReport first_bracket_report(const AttentionRecord& record) {
  check_record(record);
  if (record.tgt_tokens.empty() || record.tgt_tokens.front().size() < 2 || record.tgt_tokens.front()[0] != '(')
    throw NotATree("first generated token is not an opening bracket");
  if (record.weights.cols() == 0) throw std::invalid_argument("attention record has no source columns");
  FirstBracketReport rep;
  Index best = 0;
  for (Index j = 1; j < record.weights.cols(); ++j)
    if (record.weights(0, j) > record.weights(0, best)) best = j;
  rep.source_index = static_cast<std::size_t>(best);
  for (std::size_t i = 0; i < record.tgt_tokens.size(); ++i) {
    if (!is_terminal_row_token(record.tgt_tokens[i])) continue;
    if (!rep.target_row || record.weights(static_cast<Index>(i), best) >
                               record.weights(static_cast<Index>(*rep.target_row), best))
      rep.target_row = i;
  }
  return rep;
}

}  // namespace s2t
