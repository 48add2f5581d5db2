// Byte-pair encoding in the subword-nmt style: words are split into characters
// with an end-of-word suffix on the last one, frequent adjacent pairs are
// merged, and every emitted sub-word except a word's last carries a
// continuation marker ("@@" by default).

#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace s2t {

inline constexpr std::string_view kEndOfWord = "</w>";
inline constexpr std::string_view kDefaultContinuationMarker = "@@";

class BpeModel {
 public:
  using Merge = std::pair<std::string, std::string>;

  BpeModel() = default;
  explicit BpeModel(std::vector<Merge> merges, std::string continuation_marker = std::string(kDefaultContinuationMarker));

  const std::vector<Merge>& merges() const { return merges_; }
  const std::string& continuation_marker() const { return marker_; }

  // Position of a merge in learning order, or -1.
  long rank(std::string_view left, std::string_view right) const;

  // "#version: 0.2" header followed by one "left right" pair per line.
  void save(std::ostream& out) const;
  static BpeModel load(std::istream& in, std::string continuation_marker = std::string(kDefaultContinuationMarker));

 private:
  std::vector<Merge> merges_;
  std::string marker_ = std::string(kDefaultContinuationMarker);
  std::unordered_map<std::string, long> ranks_;
};

// Lines are whitespace-tokenized. Ties between equally frequent pairs go to the
// lexicographically smallest (left, right). Learning stops early once no pair
// occurs at least twice.
BpeModel learn_bpe(const std::vector<std::string>& corpus, std::size_t num_merges);

std::vector<std::string> apply_bpe(const BpeModel& model, const std::vector<std::string>& words);
std::vector<std::string> segment_word(const BpeModel& model, std::string_view word);

std::vector<std::string> revert_bpe(const std::vector<std::string>& tokens,
                                    std::string_view continuation_marker = kDefaultContinuationMarker);

// UTF-8 aware character split; malformed bytes are kept as single units.
std::vector<std::string> split_characters(std::string_view word);

std::vector<std::string> split_whitespace(std::string_view line);
std::string join(const std::vector<std::string>& tokens, std::string_view sep = " ");

}  // namespace s2t
