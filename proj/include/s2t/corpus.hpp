#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace s2t {

using TokenId = int;
using IdSequence = std::vector<TokenId>;

inline constexpr TokenId kEosId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr std::string_view kEosToken = "</s>";
inline constexpr std::string_view kUnkToken = "<unk>";

class Vocabulary {
 public:
  // Only the two reserved symbols.
  Vocabulary();

  // Token ids are assigned in the given order after the reserved ones.
  // Reserved spellings and duplicates are rejected.
  explicit Vocabulary(const std::vector<std::string>& tokens);

  std::size_t size() const { return tokens_.size(); }
  TokenId id(std::string_view token) const;  // kUnkId when absent
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;  // throws std::out_of_range

  const std::vector<std::string>& tokens() const { return tokens_; }

  // One token per line; line i holds id i + 2 (reserved ids are implicit).
  void save(std::ostream& out) const;
  static Vocabulary load(std::istream& in);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// Frequency-ranked, ties broken lexicographically; max_size counts the
// reserved symbols.
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& lines,
                       std::optional<std::size_t> max_size = std::nullopt);

// Appends end-of-sequence.
IdSequence encode(const Vocabulary& vocab, const std::vector<std::string>& tokens);
// Throws std::out_of_range on an id outside the vocabulary.
std::vector<std::string> decode(const Vocabulary& vocab, const IdSequence& ids);

struct ParallelPair {
  IdSequence source;
  IdSequence target;
  bool target_is_tree = false;
};

class LengthMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Drops pairs whose token counts (before end-of-sequence is appended) exceed
// either limit; survivors keep their order.
std::vector<ParallelPair> prepare_pairs(const std::vector<std::vector<std::string>>& src_lines,
                                        const std::vector<std::vector<std::string>>& tgt_lines,
                                        const Vocabulary& src_vocab, const Vocabulary& tgt_vocab,
                                        std::size_t max_src, std::size_t max_tgt, bool target_is_tree = false);

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Whitespace-tokenized lines of a text file.
std::vector<std::vector<std::string>> read_token_lines(const std::string& path);
std::vector<std::string> read_lines(const std::string& path);

}  // namespace s2t
