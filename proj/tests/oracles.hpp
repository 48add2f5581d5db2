// Independent reference computations used as test oracles. None of these call
// the code path they are compared against.

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "s2t/analysis.hpp"
#include "s2t/corpus.hpp"
#include "s2t/model.hpp"
#include "s2t/treebank.hpp"

namespace oracle {

using s2t::ConstituencyTree;

// Random tree with labels from a small set and words that include characters
// needing escapes.
inline ConstituencyTree random_tree(std::mt19937_64& rng, int depth = 0) {
  static const std::vector<std::string> labels = {"S", "NP", "VP", "PP", "SBAR", "ADJP", "X-1", "NP|2"};
  static const std::vector<std::string> words = {"jane", "had", "a", "cat", ".", ",", "(", ")", "(x", ")y",
                                                 "\\", "\\(", "don't", "über", "a@@", "42", "--", "()"};
  auto pick = [&](const std::vector<std::string>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };
  const std::size_t n = std::uniform_int_distribution<std::size_t>(1, depth >= 4 ? 2 : 4)(rng);
  std::vector<ConstituencyTree> kids;
  for (std::size_t i = 0; i < n; ++i) {
    const bool internal = depth < 5 && std::uniform_real_distribution<double>(0, 1)(rng) < 0.45;
    kids.push_back(internal ? random_tree(rng, depth + 1) : ConstituencyTree::leaf(pick(words)));
  }
  return ConstituencyTree::node(depth == 0 ? "ROOT" : pick(labels), std::move(kids));
}

inline bool same_tree(const ConstituencyTree& a, const ConstituencyTree& b) {
  if (a.is_leaf() != b.is_leaf() || a.label() != b.label()) return false;
  if (a.children().size() != b.children().size()) return false;
  for (std::size_t i = 0; i < a.children().size(); ++i)
    if (!same_tree(a.children()[i], b.children()[i])) return false;
  return true;
}

// Straightforward BPE learning loop: recount every pair after every merge.
inline std::vector<std::pair<std::string, std::string>> reference_bpe(const std::vector<std::string>& lines,
                                                                      std::size_t num_merges) {
  std::map<std::string, std::size_t> word_freq;
  for (const auto& line : lines) {
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      std::size_t j = i;
      while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
      if (j > i) ++word_freq[line.substr(i, j - i)];
      i = j;
    }
  }
  // ASCII only: one symbol per byte, end-of-word glued to the last symbol.
  std::vector<std::pair<std::vector<std::string>, std::size_t>> vocab;
  for (const auto& [w, f] : word_freq) {
    std::vector<std::string> syms;
    for (char c : w) syms.emplace_back(1, c);
    syms.back() += "</w>";
    vocab.emplace_back(syms, f);
  }
  std::vector<std::pair<std::string, std::string>> merges;
  while (merges.size() < num_merges) {
    std::map<std::pair<std::string, std::string>, std::size_t> counts;
    for (const auto& [syms, f] : vocab)
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) counts[{syms[i], syms[i + 1]}] += f;
    std::pair<std::string, std::string> best;
    std::size_t best_count = 0;
    for (const auto& [pair, c] : counts)  // map order gives the lexicographic tie-break
      if (c > best_count) {
        best = pair;
        best_count = c;
      }
    if (best_count < 2) break;
    merges.push_back(best);
    for (auto& [syms, f] : vocab) {
      std::vector<std::string> out;
      for (std::size_t i = 0; i < syms.size(); ++i) {
        if (i + 1 < syms.size() && syms[i] == best.first && syms[i + 1] == best.second) {
          out.push_back(syms[i] + syms[i + 1]);
          ++i;
        } else {
          out.push_back(syms[i]);
        }
      }
      syms = std::move(out);
    }
  }
  return merges;
}

// (1/n) sum_{i=2..n} |a(i) - a(i-1)| with a given 1-based.
inline double direct_distortion(const std::vector<long>& a) {
  if (a.size() <= 1) return 0.0;
  long total = 0;
  for (std::size_t i = 1; i < a.size(); ++i) total += std::labs(a[i] - a[i - 1]);
  return static_cast<double>(total) / static_cast<double>(a.size());
}

// Maximum of |a - n| / max(|a|, |n|, 1e-6) over every parameter.
inline double gradient_check(const s2t::ModelParams& params, const std::vector<s2t::ParallelPair>& batch,
                             double eps = 1e-5) {
  const auto analytic = s2t::loss_and_grads(params, batch).grads.flatten();
  auto flat = params.flatten();
  s2t::ModelParams probe = params;
  double worst = 0.0;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double keep = flat[i];
    flat[i] = keep + eps;
    probe.unflatten(flat);
    const double plus = s2t::loss_and_grads(probe, batch).loss;
    flat[i] = keep - eps;
    probe.unflatten(flat);
    const double minus = s2t::loss_and_grads(probe, batch).loss;
    flat[i] = keep;
    const double numeric = (plus - minus) / (2 * eps);
    const double rel =
        std::abs(analytic[i] - numeric) / std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
    worst = std::max(worst, rel);
  }
  return worst;
}

inline std::vector<s2t::ParallelPair> random_batch(std::mt19937_64& rng, std::size_t batch, std::size_t src_vocab,
                                                   std::size_t tgt_vocab, std::size_t max_len) {
  std::vector<s2t::ParallelPair> out;
  auto len = std::uniform_int_distribution<std::size_t>(1, max_len);
  for (std::size_t b = 0; b < batch; ++b) {
    s2t::ParallelPair p;
    for (std::size_t i = len(rng); i > 0; --i)
      p.source.push_back(std::uniform_int_distribution<int>(2, static_cast<int>(src_vocab) - 1)(rng));
    for (std::size_t i = len(rng); i > 0; --i)
      p.target.push_back(std::uniform_int_distribution<int>(2, static_cast<int>(tgt_vocab) - 1)(rng));
    p.source.push_back(s2t::kEosId);
    p.target.push_back(s2t::kEosId);
    out.push_back(std::move(p));
  }
  return out;
}

// Step-by-step log probability of a target prefix, one decoder call per token.
inline double chain_log_prob(const s2t::ModelParams& params, const s2t::EncodedSource& enc,
                             const s2t::IdSequence& target) {
  s2t::Matrix state = s2t::initial_state(params, enc);
  s2t::TokenId prev = s2t::kEosId;
  double total = 0.0;
  for (s2t::TokenId y : target) {
    auto step = s2t::decode_step(params, std::span<const s2t::TokenId>(&prev, 1), state, enc);
    total += std::log(step.probs(y, 0));
    state = step.state;
    prev = y;
  }
  return total;
}

// Best sequence by length-normalized log probability among every sequence that
// ends at end-of-sequence within max_len tokens or runs to exactly max_len.
inline std::pair<s2t::IdSequence, double> enumerate_best(const s2t::ModelParams& params, const s2t::IdSequence& src,
                                                         std::size_t max_len) {
  const auto enc = s2t::encode(params, src);
  const int V = static_cast<int>(params.config.tgt_vocab_size);
  s2t::IdSequence best;
  double best_norm = -std::numeric_limits<double>::infinity();
  s2t::IdSequence seq;
  auto consider = [&](const s2t::IdSequence& s) {
    const double norm = chain_log_prob(params, enc, s) / static_cast<double>(s.size());
    if (norm > best_norm || (norm == best_norm && s < best)) {
      best_norm = norm;
      best = s;
    }
  };
  auto rec = [&](auto&& self) -> void {
    for (int v = 0; v < V; ++v) {
      seq.push_back(v);
      if (v == s2t::kEosId || seq.size() == max_len)
        consider(seq);
      else
        self(self);
      seq.pop_back();
    }
  };
  rec(rec);
  return {best, best_norm};
}

// Argmax decoding with attention rows, stopping at end-of-sequence or max_len.
inline std::pair<s2t::IdSequence, std::vector<s2t::Vector>> greedy(const s2t::ModelParams& params,
                                                                    const s2t::IdSequence& src, std::size_t max_len) {
  const auto enc = s2t::encode(params, src);
  s2t::Matrix state = s2t::initial_state(params, enc);
  s2t::TokenId prev = s2t::kEosId;
  s2t::IdSequence ids;
  std::vector<s2t::Vector> rows;
  while (ids.size() < max_len) {
    auto step = s2t::decode_step(params, std::span<const s2t::TokenId>(&prev, 1), state, enc);
    Eigen::Index arg = 0;
    step.probs.col(0).maxCoeff(&arg);
    ids.push_back(static_cast<s2t::TokenId>(arg));
    rows.push_back(step.weights.col(0));
    state = step.state;
    prev = ids.back();
    if (prev == s2t::kEosId) break;
  }
  return {ids, rows};
}

}  // namespace oracle
