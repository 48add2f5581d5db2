#include "s2t/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "s2t/subword.hpp"

namespace s2t {

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
  tokens_.reserve(tokens.size() + 2);
  tokens_.emplace_back(kEosToken);
  tokens_.emplace_back(kUnkToken);
  index_.emplace(std::string(kEosToken), kEosId);
  index_.emplace(std::string(kUnkToken), kUnkId);
  for (const auto& t : tokens) {
    if (t.empty()) throw std::invalid_argument("empty vocabulary entry");
    auto [it, inserted] = index_.emplace(t, static_cast<TokenId>(tokens_.size()));
    if (!inserted) throw std::invalid_argument("duplicate or reserved vocabulary entry '" + t + "'");
    tokens_.push_back(t);
  }
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(tokens_.size()));
  return tokens_[static_cast<std::size_t>(id)];
}

void Vocabulary::save(std::ostream& out) const {
  for (std::size_t i = 2; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
}

Vocabulary Vocabulary::load(std::istream& in) {
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocabulary(tokens);
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& lines, std::optional<std::size_t> max_size) {
  std::map<std::string, long> freq;
  for (const auto& line : lines)
    for (const auto& t : line)
      if (t != kEosToken && t != kUnkToken) ++freq[t];

  std::vector<std::pair<std::string, long>> ranked(freq.begin(), freq.end());
  // std::map iteration is already lexicographic; a stable sort keeps that order for ties.
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  std::size_t keep = ranked.size();
  if (max_size) keep = std::min(keep, *max_size > 2 ? *max_size - 2 : std::size_t{0});
  std::vector<std::string> tokens;
  tokens.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) tokens.push_back(ranked[i].first);
  return Vocabulary(tokens);
}

IdSequence encode(const Vocabulary& vocab, const std::vector<std::string>& tokens) {
  IdSequence ids;
  ids.reserve(tokens.size() + 1);
  for (const auto& t : tokens) ids.push_back(vocab.id(t));
  ids.push_back(kEosId);
  return ids;
}

std::vector<std::string> decode(const Vocabulary& vocab, const IdSequence& ids) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId id : ids) out.push_back(vocab.token(id));
  return out;
}

std::vector<ParallelPair> prepare_pairs(const std::vector<std::vector<std::string>>& src_lines,
                                        const std::vector<std::vector<std::string>>& tgt_lines,
                                        const Vocabulary& src_vocab, const Vocabulary& tgt_vocab,
                                        std::size_t max_src, std::size_t max_tgt, bool target_is_tree) {
  if (src_lines.size() != tgt_lines.size())
    throw LengthMismatch("source has " + std::to_string(src_lines.size()) + " lines, target has " +
                         std::to_string(tgt_lines.size()));
  std::vector<ParallelPair> out;
  for (std::size_t i = 0; i < src_lines.size(); ++i) {
    if (src_lines[i].size() > max_src || tgt_lines[i].size() > max_tgt) continue;
    out.push_back({encode(src_vocab, src_lines[i]), encode(tgt_vocab, tgt_lines[i]), target_is_tree});
  }
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  if (in.bad()) throw std::runtime_error("read error on '" + path + "'");
  return lines;
}

std::vector<std::vector<std::string>> read_token_lines(const std::string& path) {
  std::vector<std::vector<std::string>> out;
  for (const auto& l : read_lines(path)) out.push_back(split_whitespace(l));
  return out;
}

}  // namespace s2t
