#include "s2t/subword.hpp"

#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>
#include <tuple>

namespace s2t {

namespace {

std::string merge_key(std::string_view left, std::string_view right) {
  std::string k;
  k.reserve(left.size() + right.size() + 1);
  k.append(left);
  k.push_back(' ');
  k.append(right);
  return k;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;
}

}  // namespace

BpeModel::BpeModel(std::vector<Merge> merges, std::string continuation_marker)
    : merges_(std::move(merges)), marker_(std::move(continuation_marker)) {
  if (marker_.empty()) throw std::invalid_argument("continuation marker must be nonempty");
  for (std::size_t i = 0; i < merges_.size(); ++i) {
    auto [it, inserted] = ranks_.emplace(merge_key(merges_[i].first, merges_[i].second), static_cast<long>(i));
    if (!inserted) throw std::invalid_argument("duplicate merge '" + it->first + "'");
  }
}

long BpeModel::rank(std::string_view left, std::string_view right) const {
  auto it = ranks_.find(merge_key(left, right));
  return it == ranks_.end() ? -1 : it->second;
}

void BpeModel::save(std::ostream& out) const {
  out << "#version: 0.2\n";
  for (const auto& [l, r] : merges_) out << l << ' ' << r << '\n';
}

BpeModel BpeModel::load(std::istream& in, std::string continuation_marker) {
  std::vector<Merge> merges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.rfind("#version", 0) == 0) continue;
    if (line.empty()) continue;
    auto parts = split_whitespace(line);
    if (parts.size() != 2) throw std::runtime_error("merges file line " + std::to_string(lineno) + ": expected 'left right'");
    merges.emplace_back(std::move(parts[0]), std::move(parts[1]));
  }
  return BpeModel(std::move(merges), std::move(continuation_marker));
}

std::vector<std::string> split_characters(std::string_view word) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < word.size()) {
    std::size_t n = utf8_length(static_cast<unsigned char>(word[i]));
    if (i + n > word.size()) n = 1;
    out.emplace_back(word.substr(i, n));
    i += n;
  }
  return out;
}

std::vector<std::string> split_whitespace(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  auto space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (i < line.size()) {
    while (i < line.size() && space(line[i])) ++i;
    std::size_t start = i;
    while (i < line.size() && !space(line[i])) ++i;
    if (i > start) out.emplace_back(line.substr(start, i - start));
  }
  return out;
}

std::string join(const std::vector<std::string>& tokens, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.append(sep);
    out += tokens[i];
  }
  return out;
}

// Pair statistics are maintained incrementally: only words that contain the
// chosen pair are re-counted after each merge.
BpeModel learn_bpe(const std::vector<std::string>& corpus, std::size_t num_merges) {
  std::map<std::string, long> word_freq;
  for (const auto& line : corpus)
    for (auto& w : split_whitespace(line)) ++word_freq[w];

  struct Word {
    std::vector<std::string> symbols;
    long freq;
  };
  std::vector<Word> words;
  words.reserve(word_freq.size());
  for (const auto& [w, f] : word_freq) {
    auto chars = split_characters(w);
    chars.back() += kEndOfWord;
    words.push_back({std::move(chars), f});
  }

  using Pair = std::pair<std::string, std::string>;
  std::map<Pair, long> counts;
  std::map<Pair, std::set<std::size_t>> where;
  // Ordered by descending count, then ascending pair.
  std::set<std::tuple<long, std::string, std::string>> queue;

  auto adjust = [&](const Pair& p, long delta, std::size_t word_index) {
    long& c = counts[p];
    if (c > 0) queue.erase({-c, p.first, p.second});
    c += delta;
    if (c > 0) queue.insert({-c, p.first, p.second});
    if (delta > 0) where[p].insert(word_index);
  };
  auto add_word = [&](std::size_t wi, long sign) {
    const Word& w = words[wi];
    for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i)
      adjust({w.symbols[i], w.symbols[i + 1]}, sign * w.freq, wi);
  };
  for (std::size_t wi = 0; wi < words.size(); ++wi) add_word(wi, +1);

  std::vector<BpeModel::Merge> merges;
  while (merges.size() < num_merges && !queue.empty()) {
    auto [neg_count, left, right] = *queue.begin();
    if (-neg_count < 2) break;
    Pair best{left, right};
    merges.push_back(best);
    std::string joined = left + right;

    std::set<std::size_t> affected = where[best];
    for (std::size_t wi : affected) {
      Word& w = words[wi];
      bool present = false;
      for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i)
        if (w.symbols[i] == left && w.symbols[i + 1] == right) present = true;
      if (!present) continue;
      add_word(wi, -1);
      std::vector<std::string> merged;
      merged.reserve(w.symbols.size());
      for (std::size_t i = 0; i < w.symbols.size();) {
        if (i + 1 < w.symbols.size() && w.symbols[i] == left && w.symbols[i + 1] == right) {
          merged.push_back(joined);
          i += 2;
        } else {
          merged.push_back(w.symbols[i]);
          ++i;
        }
      }
      w.symbols = std::move(merged);
      add_word(wi, +1);
    }
  }
  return BpeModel(std::move(merges));
}

std::vector<std::string> segment_word(const BpeModel& model, std::string_view word) {
  if (word.empty()) return {};
  std::vector<std::string> symbols = split_characters(word);
  symbols.back() += kEndOfWord;

  while (symbols.size() > 1) {
    long best_rank = -1;
    std::size_t best_at = 0;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      long r = model.rank(symbols[i], symbols[i + 1]);
      if (r >= 0 && (best_rank < 0 || r < best_rank)) {
        best_rank = r;
        best_at = i;
      }
    }
    if (best_rank < 0) break;
    const std::string left = symbols[best_at];
    const std::string right = symbols[best_at + 1];
    std::vector<std::string> merged;
    merged.reserve(symbols.size());
    for (std::size_t i = 0; i < symbols.size();) {
      if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
        merged.push_back(left + right);
        i += 2;
      } else {
        merged.push_back(symbols[i]);
        ++i;
      }
    }
    symbols = std::move(merged);
  }

  std::string& last = symbols.back();
  last.resize(last.size() - kEndOfWord.size());
  if (last.empty()) symbols.pop_back();
  for (std::size_t i = 0; i + 1 < symbols.size(); ++i) symbols[i] += model.continuation_marker();
  return symbols;
}

std::vector<std::string> apply_bpe(const BpeModel& model, const std::vector<std::string>& words) {
  std::vector<std::string> out;
  std::unordered_map<std::string, std::vector<std::string>> cache;
  for (const auto& w : words) {
    auto it = cache.find(w);
    if (it == cache.end()) it = cache.emplace(w, segment_word(model, w)).first;
    out.insert(out.end(), it->second.begin(), it->second.end());
  }
  return out;
}

std::vector<std::string> revert_bpe(const std::vector<std::string>& tokens, std::string_view continuation_marker) {
  std::vector<std::string> out;
  std::string pending;
  bool open = false;
  for (const auto& t : tokens) {
    if (ends_with(t, continuation_marker)) {
      pending.append(t, 0, t.size() - continuation_marker.size());
      open = true;
    } else {
      pending += t;
      out.push_back(std::move(pending));
      pending.clear();
      open = false;
    }
  }
  if (open) out.push_back(std::move(pending));
  return out;
}

}  // namespace s2t
