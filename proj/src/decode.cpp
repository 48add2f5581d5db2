#include "s2t/decode.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>

#include <json.hpp>

#include "s2t/subword.hpp"
#include "s2t/treebank.hpp"

namespace s2t {

namespace {

using Eigen::Index;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Token classes of the target vocabulary for constrained decoding.
struct TreeAlphabet {
  enum class Kind { Eos, Open, Close, Terminal };
  std::vector<Kind> kind;
  std::vector<int> label;  // interned label for brackets, -1 otherwise

  explicit TreeAlphabet(const Vocabulary& vocab) {
    std::map<std::string, int> labels;
    for (std::size_t i = 0; i < vocab.size(); ++i) {
      const std::string& t = vocab.token(static_cast<TokenId>(i));
      if (i == static_cast<std::size_t>(kEosId)) {
        kind.push_back(Kind::Eos);
        label.push_back(-1);
      } else if (is_bracket_symbol(t)) {
        kind.push_back(t[0] == '(' ? Kind::Open : Kind::Close);
        auto [it, _] = labels.emplace(t.substr(1), static_cast<int>(labels.size()));
        label.push_back(it->second);
      } else {
        kind.push_back(Kind::Terminal);
        label.push_back(-1);
      }
    }
  }
};

struct TreeState {
  std::vector<int> stack;
  bool started = false;
  bool last_open = false;

  bool closed() const { return started && stack.empty(); }

  // Fewest tokens (end-of-sequence included) that complete a valid tree.
  std::size_t min_completion() const {
    if (!started) return 4;  // open, terminal, close, end
    if (stack.empty()) return 1;
    return stack.size() + 1 + (last_open ? 1 : 0);
  }

  // `remaining` counts tokens still allowed, the candidate included.
  bool allows(const TreeAlphabet& a, TokenId v, std::size_t remaining) const {
    if (remaining == 0) return false;
    const auto k = a.kind[static_cast<std::size_t>(v)];
    TreeState next = *this;
    switch (k) {
      case TreeAlphabet::Kind::Eos:
        return closed();
      case TreeAlphabet::Kind::Open:
        if (closed() || stack.size() + 1 > kMaxTreeDepth) return false;
        break;
      case TreeAlphabet::Kind::Close:
        if (stack.empty() || last_open || stack.back() != a.label[static_cast<std::size_t>(v)]) return false;
        break;
      case TreeAlphabet::Kind::Terminal:
        if (stack.empty()) return false;
        break;
    }
    next.advance(a, v);
    return next.min_completion() <= remaining - 1;
  }

  void advance(const TreeAlphabet& a, TokenId v) {
    const auto k = a.kind[static_cast<std::size_t>(v)];
    last_open = false;
    if (k == TreeAlphabet::Kind::Open) {
      stack.push_back(a.label[static_cast<std::size_t>(v)]);
      started = true;
      last_open = true;
    } else if (k == TreeAlphabet::Kind::Close && !stack.empty()) {
      stack.pop_back();
    }
  }

  // Dead-end fallback: the matching close, or end-of-sequence.
  TokenId forced(const TreeAlphabet& a) const {
    if (!stack.empty()) {
      for (std::size_t i = 0; i < a.kind.size(); ++i)
        if (a.kind[i] == TreeAlphabet::Kind::Close && a.label[i] == stack.back()) return static_cast<TokenId>(i);
    }
    return kEosId;
  }
};

struct Live {
  IdSequence ids;
  double score = 0.0;
  std::vector<Vector> rows;  // attention per emitted token
  TreeState tree;
  Index slot = 0;            // column in the state matrices
};

struct Candidate {
  double score;
  std::size_t parent;
  TokenId token;
};

// Orders a + [a_last] before b + [b_last] lexicographically; only used on score ties.
bool lex_less(const IdSequence& a, TokenId a_last, const IdSequence& b, TokenId b_last) {
  IdSequence x = a, y = b;
  x.push_back(a_last);
  y.push_back(b_last);
  return x < y;
}

Hypothesis finish(const Live& h) {
  Hypothesis out;
  out.ids = h.ids;
  out.score = h.score;
  out.normalized = h.ids.empty() ? h.score : h.score / static_cast<double>(h.ids.size());
  const Index rows = static_cast<Index>(h.rows.size());
  const Index cols = rows ? h.rows.front().size() : 0;
  out.attention.resize(rows, cols);
  for (Index r = 0; r < rows; ++r) out.attention.row(r) = h.rows[static_cast<std::size_t>(r)].transpose();
  return out;
}

}  // namespace

std::size_t effective_max_len(std::size_t source_words, std::size_t cap) {
  const std::size_t rule = 3 * source_words + 10;
  return cap == 0 ? rule : std::min(rule, cap);
}

std::vector<Hypothesis> beam_search(std::span<const ModelParams> param_set, const IdSequence& src_ids,
                                    const BeamOptions& options) {
  if (param_set.empty()) throw std::invalid_argument("beam_search: no parameter sets");
  if (src_ids.empty()) throw std::invalid_argument("beam_search: empty source");
  if (options.beam_size == 0) throw std::invalid_argument("beam_search: beam size must be positive");
  const ModelConfig& cfg0 = param_set.front().config;
  for (const auto& p : param_set)
    if (p.config.tgt_vocab_size != cfg0.tgt_vocab_size || p.config.src_vocab_size != cfg0.src_vocab_size)
      throw std::invalid_argument("beam_search: ensemble members have incompatible vocabularies");

  std::optional<TreeAlphabet> alphabet;
  if (options.constrain_tree) {
    if (!options.target_vocab) throw std::invalid_argument("beam_search: tree constraint needs the target vocabulary");
    if (options.target_vocab->size() != cfg0.tgt_vocab_size)
      throw std::invalid_argument("beam_search: target vocabulary does not match the model");
    alphabet.emplace(*options.target_vocab);
  }

  const std::size_t source_words = src_ids.back() == kEosId ? src_ids.size() - 1 : src_ids.size();
  const std::size_t max_len = effective_max_len(source_words, options.max_len);
  const std::size_t K = options.beam_size;
  const std::size_t M = param_set.size();
  const Index V = static_cast<Index>(cfg0.tgt_vocab_size);

  std::vector<EncodedSource> single(M);
  std::vector<Matrix> states(M);
  for (std::size_t m = 0; m < M; ++m) {
    single[m] = encode(param_set[m], src_ids);
    states[m] = initial_state(param_set[m], single[m]);
  }

  std::vector<Live> live(1);
  std::vector<Hypothesis> finished;

  for (std::size_t t = 0; t < max_len && !live.empty() && finished.size() < K; ++t) {
    const Index L = static_cast<Index>(live.size());
    std::vector<TokenId> prev(live.size());
    for (std::size_t k = 0; k < live.size(); ++k) prev[k] = live[k].ids.empty() ? kEosId : live[k].ids.back();

    Matrix probs = Matrix::Zero(V, L);
    Matrix weights = Matrix::Zero(static_cast<Index>(single[0].length), L);
    std::vector<Matrix> new_states(M);
    for (std::size_t m = 0; m < M; ++m) {
      Matrix st(states[m].rows(), L);
      for (Index k = 0; k < L; ++k) st.col(k) = states[m].col(live[static_cast<std::size_t>(k)].slot);
      EncodedSource enc = single[m].replicate(live.size());
      DecodeStep step = decode_step(param_set[m], prev, st, enc);
      probs += step.probs;
      weights += step.weights;
      new_states[m] = std::move(step.state);
    }
    if (M > 1) {
      probs /= static_cast<double>(M);
      weights /= static_cast<double>(M);
    }

    const std::size_t remaining = max_len - t;
    std::vector<Candidate> cands;
    cands.reserve(live.size() * static_cast<std::size_t>(V));
    for (std::size_t k = 0; k < live.size(); ++k) {
      bool any = false;
      for (Index v = 0; v < V; ++v) {
        if (alphabet && !live[k].tree.allows(*alphabet, static_cast<TokenId>(v), remaining)) continue;
        const double lp = std::log(probs(v, static_cast<Index>(k)));
        if (lp == kNegInf) continue;
        cands.push_back({live[k].score + lp, k, static_cast<TokenId>(v)});
        any = true;
      }
      if (!any && alphabet) {
        const TokenId f = live[k].tree.forced(*alphabet);
        cands.push_back({live[k].score + std::log(probs(f, static_cast<Index>(k))), k, f});
      }
    }

    const std::size_t slots = K - finished.size();
    auto better = [&](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      return lex_less(live[a.parent].ids, a.token, live[b.parent].ids, b.token);
    };
    const std::size_t take = std::min(slots, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(take), cands.end(), better);

    std::vector<Live> next;
    for (std::size_t c = 0; c < take; ++c) {
      const Candidate& cand = cands[c];
      const Live& parent = live[cand.parent];
      Live h;
      h.ids = parent.ids;
      h.ids.push_back(cand.token);
      h.score = cand.score;
      h.rows = parent.rows;
      h.rows.push_back(weights.col(static_cast<Index>(cand.parent)));
      h.tree = parent.tree;
      if (alphabet) h.tree.advance(*alphabet, cand.token);
      h.slot = static_cast<Index>(cand.parent);
      if (cand.token == kEosId)
        finished.push_back(finish(h));
      else
        next.push_back(std::move(h));
    }
    live = std::move(next);
    states = std::move(new_states);
  }
  // Hypotheses cut off by the length limit all compete in the final ranking.
  for (const Live& h : live) finished.push_back(finish(h));

  std::sort(finished.begin(), finished.end(), [](const Hypothesis& a, const Hypothesis& b) {
    if (a.normalized != b.normalized) return a.normalized > b.normalized;
    return a.ids < b.ids;
  });
  return finished;
}

bool vocabulary_has_brackets(const Vocabulary& vocab) {
  for (const auto& t : vocab.tokens())
    if (is_bracket_symbol(t)) return true;
  return false;
}

std::vector<Translation> translate_corpus(std::span<const ModelParams> param_set,
                                          const std::vector<std::vector<std::string>>& src_lines,
                                          const Vocabulary& src_vocab, const Vocabulary& tgt_vocab,
                                          const BeamOptions& options, std::string_view continuation_marker) {
  BeamOptions opts = options;
  opts.target_vocab = &tgt_vocab;
  const bool is_tree = vocabulary_has_brackets(tgt_vocab);
  std::vector<Translation> out;
  out.reserve(src_lines.size());
  for (const auto& line : src_lines) {
    IdSequence src = encode(src_vocab, line);
    auto hyps = beam_search(param_set, src, opts);
    const Hypothesis& best = hyps.front();
    Translation tr;
    tr.is_tree = is_tree;
    tr.attention.src_tokens = decode(src_vocab, src);
    tr.attention.tgt_tokens = decode(tgt_vocab, best.ids);
    tr.attention.weights = best.attention;
    IdSequence body = best.ids;
    if (!body.empty() && body.back() == kEosId) body.pop_back();
    tr.tokens = decode(tgt_vocab, body);
    if (is_tree) {
      LinearTree lt;
      lt.reserve(tr.tokens.size());
      for (const auto& tok : tr.tokens) lt.push_back(tokenize_token(tok));
      tr.surface = surface(lt, continuation_marker);
    } else {
      tr.surface = revert_bpe(tr.tokens, continuation_marker);
    }
    out.push_back(std::move(tr));
  }
  return out;
}

std::string AttentionRecord::to_json_line() const {
  nlohmann::ordered_json j;
  j["src_tokens"] = src_tokens;
  j["tgt_tokens"] = tgt_tokens;
  auto rows = nlohmann::ordered_json::array();
  for (Index r = 0; r < weights.rows(); ++r) {
    auto row = nlohmann::ordered_json::array();
    for (Index c = 0; c < weights.cols(); ++c) row.push_back(weights(r, c));
    rows.push_back(std::move(row));
  }
  j["weights"] = std::move(rows);
  return j.dump();
}

AttentionRecord AttentionRecord::from_json_line(const std::string& line) {
  auto j = nlohmann::json::parse(line);
  AttentionRecord rec;
  rec.src_tokens = j.at("src_tokens").get<std::vector<std::string>>();
  rec.tgt_tokens = j.at("tgt_tokens").get<std::vector<std::string>>();
  const auto& rows = j.at("weights");
  if (rows.size() != rec.tgt_tokens.size()) throw std::runtime_error("attention record: row count differs from tgt_tokens");
  rec.weights.resize(static_cast<Index>(rows.size()), static_cast<Index>(rec.src_tokens.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rec.src_tokens.size())
      throw std::runtime_error("attention record: column count differs from src_tokens");
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      rec.weights(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c].get<double>();
  }
  return rec;
}

std::vector<AttentionRecord> read_attention_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<AttentionRecord> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(AttentionRecord::from_json_line(line));
  return out;
}

}  // namespace s2t
