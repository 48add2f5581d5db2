// Measurements over attention-derived alignments: distortion, GHKM rules,
// relative pronouns and first-bracket attention.

#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "s2t/decode.hpp"
#include "s2t/treebank.hpp"

namespace s2t {

struct AlignmentLink {
  std::size_t target = 0;
  std::size_t source = 0;
  auto operator<=>(const AlignmentLink&) const = default;
};

// Links sorted by (target, source). Indices are 0-based token positions.
struct Alignment {
  std::vector<AlignmentLink> links;

  // Source index per target, in target order; throws std::invalid_argument
  // when a target has more than one link.
  std::vector<std::size_t> as_function() const;

  // "s-t" pairs separated by spaces.
  std::string to_line() const;
  static Alignment from_line(const std::string& line);

  bool operator==(const Alignment&) const = default;
};

// Rows holding end-of-sequence are never included. With terminal_only, rows
// holding bracket symbols are skipped as well; target indices stay row indices.
Alignment hard_align_argmax(const AttentionRecord& record, bool terminal_only);
Alignment hard_align_threshold(const AttentionRecord& record, double threshold = 0.5);

// Re-indexes targets from record rows to ordinals among terminal rows, dropping
// links on bracket and end-of-sequence rows.
Alignment to_terminal_ordinals(const Alignment& alignment, const AttentionRecord& record);

bool is_terminal_row_token(const std::string& token);

// (1/n) * sum_{i=2..n} |a(i) - a(i-1)|; zero for n <= 1.
double distortion(std::span<const std::size_t> aligned_sources);
double distortion(const Alignment& argmax_alignment);

inline constexpr std::size_t kDistortionBins = 8;

struct DistortionReport {
  std::vector<double> scores;
  std::array<std::size_t, kDistortionBins> histogram{};
  double mean() const;

  std::string to_table() const;
  std::string to_json() const;
};

// Bin floor(d), the last bin open-ended.
DistortionReport distortion_histogram(std::span<const double> scores);

// Decodes the dev sources with each checkpoint and averages the terminal-only
// argmax distortion.
std::vector<double> distortion_over_checkpoints(std::span<const ModelParams> checkpoints,
                                                const std::vector<std::vector<std::string>>& dev_sources,
                                                const Vocabulary& src_vocab, const Vocabulary& tgt_vocab,
                                                const BeamOptions& options);

struct RhsItem {
  bool is_variable = false;
  std::size_t variable = 0;  // x<variable>
  std::string literal;       // source token
  std::size_t source_position = 0;
};

struct GhkmRule {
  std::string lhs;  // e.g. VP(x0:TER x1:NP)
  std::vector<RhsItem> rhs;
  std::size_t count = 1;
  bool reordering = false;

  // Source spans [first, last] of the rule root and of each variable.
  std::pair<std::size_t, std::size_t> closure;
  std::vector<std::pair<std::size_t, std::size_t>> variable_closures;

  std::string rhs_string() const;  // x1 x0 "eine"
};

class OverlappingVariableSpans : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GhkmExtraction {
  std::vector<GhkmRule> rules;
  // Frontier nodes skipped because two variable closures intersected.
  std::vector<std::string> skipped;
};

// `alignment` links target terminal ordinals (positions in tree.yield()) to
// source positions. Minimal rules, one per internal frontier node, in
// depth-first order.
GhkmExtraction extract_ghkm(const ConstituencyTree& tree, const std::vector<std::string>& src_tokens,
                            const Alignment& alignment);

struct RhsCount {
  std::string rhs;
  std::size_t count = 0;
  bool reordering = false;
};

struct RuleGroup {
  std::string lhs;
  std::size_t reordering_total = 0;
  std::size_t total = 0;
  std::vector<RhsCount> top;
};

std::vector<RuleGroup> group_rules(std::span<const GhkmRule> rules, std::size_t top_k = 5);

// LHS<TAB>RHS<TAB>count<TAB>reordering_flag, identical rules merged.
void write_rules(std::ostream& out, std::span<const GhkmRule> rules);
std::vector<GhkmRule> read_rules(std::istream& in);

inline const std::array<std::string, 5> kRelativePronouns = {"who", "which", "that", "whom", "whose"};

// Counts in kRelativePronouns order; case-insensitive exact token match.
std::array<std::size_t, 5> count_relative_pronouns(const std::vector<std::vector<std::string>>& lines);

class NotATree : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FirstBracketReport {
  std::size_t source_index = 0;
  std::optional<std::size_t> target_row;  // absent when no terminal row exists
};

FirstBracketReport first_bracket_report(const AttentionRecord& record);

}  // namespace s2t
