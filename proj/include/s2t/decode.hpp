// Beam-search translation with attention capture, checkpoint ensembling and an
// optional bracket-discipline constraint for tree-shaped targets.

#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "s2t/corpus.hpp"
#include "s2t/model.hpp"

namespace s2t {

// Rows are generated target tokens (end-of-sequence included), columns are
// source tokens (the appended end-of-sequence included).
struct AttentionRecord {
  std::vector<std::string> src_tokens;
  std::vector<std::string> tgt_tokens;
  Matrix weights;

  // {"src_tokens": [...], "tgt_tokens": [...], "weights": [[...], ...]} on one line.
  std::string to_json_line() const;
  static AttentionRecord from_json_line(const std::string& line);
};

std::vector<AttentionRecord> read_attention_records(const std::string& path);

struct Hypothesis {
  IdSequence ids;
  double score = 0.0;       // sum of chosen-token log probabilities
  double normalized = 0.0;  // score / ids.size()
  Matrix attention;         // ids.size() x source length
};

inline constexpr std::size_t kMaxTreeDepth = 40;

struct BeamOptions {
  std::size_t beam_size = 12;
  // Upper bound on generated tokens; the effective limit is
  // min(max_len, 3 * source words + 10). Zero means no cap beyond that rule.
  std::size_t max_len = 300;
  bool constrain_tree = false;
  // Needed to classify ids when constrain_tree is set.
  const Vocabulary* target_vocab = nullptr;
};

std::size_t effective_max_len(std::size_t source_words, std::size_t cap);

// Returns finished hypotheses ranked by length-normalized score, best first.
// With several parameter sets the per-step distributions (and attention) are
// arithmetic means over members.
std::vector<Hypothesis> beam_search(std::span<const ModelParams> param_set, const IdSequence& src_ids,
                                    const BeamOptions& options);

struct Translation {
  std::vector<std::string> tokens;   // without end-of-sequence
  std::vector<std::string> surface;  // brackets removed, sub-words merged
  bool is_tree = false;
  AttentionRecord attention;
};

// Source lines are already sub-word segmented. A target vocabulary containing
// bracket symbols marks tree output.
std::vector<Translation> translate_corpus(std::span<const ModelParams> param_set,
                                          const std::vector<std::vector<std::string>>& src_lines,
                                          const Vocabulary& src_vocab, const Vocabulary& tgt_vocab,
                                          const BeamOptions& options,
                                          std::string_view continuation_marker = "@@");

bool vocabulary_has_brackets(const Vocabulary& vocab);

}  // namespace s2t
