#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "s2t/decode.hpp"
#include "s2t/subword.hpp"
#include "s2t/treebank.hpp"

using namespace s2t;

namespace {

ModelParams random_model(std::size_t src_vocab, std::size_t tgt_vocab, std::uint64_t seed, std::size_t dim = 4) {
  ModelConfig c;
  c.src_vocab_size = src_vocab;
  c.tgt_vocab_size = tgt_vocab;
  c.embed_dim = dim;
  c.hidden_dim = dim;
  c.seed = seed;
  return init_params(c);
}

IdSequence random_source(std::mt19937_64& rng, int vocab, int max_words) {
  IdSequence src;
  for (int i = std::uniform_int_distribution<int>(1, max_words)(rng); i > 0; --i)
    src.push_back(std::uniform_int_distribution<int>(2, vocab - 1)(rng));
  src.push_back(kEosId);
  return src;
}

const Vocabulary& tree_vocab() {
  static const Vocabulary v({"(ROOT", ")ROOT", "(NP", ")NP", "(VP", ")VP", "a", "b", "c"});
  return v;
}

}  // namespace

TEST_SUITE("decode") {
  TEST_CASE("beam of one is greedy decoding") {
    std::mt19937_64 rng(1);
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const auto p = random_model(8, 9, seed, 6);
      const IdSequence src = random_source(rng, 8, 5);
      BeamOptions o;
      o.beam_size = 1;
      o.max_len = 12;
      const auto hyps = beam_search(std::span(&p, 1), src, o);
      const auto [ids, rows] = oracle::greedy(p, src, effective_max_len(src.size() - 1, 12));
      REQUIRE(hyps.size() == 1);
      CHECK(hyps[0].ids == ids);
      REQUIRE(static_cast<std::size_t>(hyps[0].attention.rows()) == rows.size());
      for (std::size_t r = 0; r < rows.size(); ++r)
        CHECK(hyps[0].attention.row(static_cast<Eigen::Index>(r)).transpose() == rows[r]);
    }
  }

  TEST_CASE("top hypothesis matches exhaustive enumeration on a tiny model") {
    const auto p = random_model(5, 5, 1234);
    std::mt19937_64 rng(2);
    BeamOptions o;
    o.beam_size = 12;
    o.max_len = 4;
    for (int i = 0; i < 10; ++i) {
      const IdSequence src = random_source(rng, 5, 4);
      const auto hyps = beam_search(std::span(&p, 1), src, o);
      const auto [best, norm] = oracle::enumerate_best(p, src, 4);
      CHECK(hyps.front().ids == best);
      CHECK(hyps.front().normalized == doctest::Approx(norm).epsilon(1e-12));
    }
  }

  TEST_CASE("hypotheses are ranked, scored and carry normalized attention") {
    const auto p = random_model(8, 9, 3, 6);
    std::mt19937_64 rng(3);
    const IdSequence src = random_source(rng, 8, 5);
    const auto enc = encode(p, src);
    const auto hyps = beam_search(std::span(&p, 1), src, BeamOptions{});
    for (std::size_t i = 0; i < hyps.size(); ++i) {
      const auto& h = hyps[i];
      if (i) CHECK(hyps[i - 1].normalized >= h.normalized);
      CHECK(h.score == doctest::Approx(oracle::chain_log_prob(p, enc, h.ids)).epsilon(1e-10));
      CHECK(h.normalized == doctest::Approx(h.score / static_cast<double>(h.ids.size())));
      CHECK(static_cast<std::size_t>(h.attention.cols()) == src.size());
      for (Eigen::Index r = 0; r < h.attention.rows(); ++r) CHECK(std::abs(h.attention.row(r).sum() - 1.0) < 1e-12);
    }
  }

  TEST_CASE("ensembles average their members") {
    const auto a = random_model(8, 9, 4, 6);
    const auto b = random_model(8, 9, 5, 6);
    std::mt19937_64 rng(4);
    const IdSequence src = random_source(rng, 8, 5);
    const BeamOptions o;
    const auto single = beam_search(std::span(&a, 1), src, o);
    const std::vector<ModelParams> twice = {a, a};
    const auto doubled = beam_search(twice, src, o);
    CHECK(single.front().ids == doubled.front().ids);
    CHECK(single.front().score == doctest::Approx(doubled.front().score).epsilon(1e-12));

    // The first step of a two-member ensemble is the mean of both first steps.
    const std::vector<ModelParams> pair = {a, b};
    BeamOptions one_step;
    one_step.max_len = 1;
    one_step.beam_size = 9;
    const auto hyps = beam_search(pair, src, one_step);
    auto first_probs = [&](const ModelParams& p) {
      const auto enc = encode(p, src);
      const TokenId prev = kEosId;
      return decode_step(p, std::span(&prev, 1), initial_state(p, enc), enc);
    };
    const auto sa = first_probs(a), sb = first_probs(b);
    for (const auto& h : hyps) {
      const auto y = h.ids.front();
      CHECK(h.score == doctest::Approx(std::log(0.5 * (sa.probs(y, 0) + sb.probs(y, 0)))).epsilon(1e-12));
      CHECK(h.attention.row(0).transpose().isApprox(0.5 * (sa.weights.col(0) + sb.weights.col(0)), 1e-12));
    }
  }

  TEST_CASE("tree constraint always yields valid trees") {
    const Vocabulary& v = tree_vocab();
    std::mt19937_64 rng(5);
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
      const auto p = random_model(8, v.size(), seed, 5);
      BeamOptions o;
      o.beam_size = 3;
      o.max_len = seed % 3 == 0 ? 6 : 40;
      o.constrain_tree = true;
      o.target_vocab = &v;
      const IdSequence src = random_source(rng, 8, 5);
      for (const auto& h : beam_search(std::span(&p, 1), src, o)) {
        IdSequence body = h.ids;
        REQUIRE(body.back() == kEosId);
        body.pop_back();
        LinearTree lt;
        for (const auto& tok : decode(v, body)) lt.push_back(tokenize_token(tok));
        CHECK(validate(lt).valid);
      }
    }
  }

  TEST_CASE("length limit") {
    CHECK(effective_max_len(5, 300) == 25);
    CHECK(effective_max_len(100, 300) == 300);
    CHECK(effective_max_len(100, 0) == 310);
    const auto p = random_model(8, 9, 6);
    BeamOptions o;
    o.max_len = 3;
    std::mt19937_64 rng(6);
    for (const auto& h : beam_search(std::span(&p, 1), random_source(rng, 8, 5), o)) CHECK(h.ids.size() <= 3);
  }

  TEST_CASE("corpus translation") {
    const Vocabulary src_vocab({"x", "y", "z"});
    const Vocabulary& tgt = tree_vocab();
    const auto p = random_model(src_vocab.size(), tgt.size(), 7, 5);
    BeamOptions o;
    o.constrain_tree = true;
    CHECK(translate_corpus(std::span(&p, 1), {}, src_vocab, tgt, o).empty());
    const std::vector<std::vector<std::string>> lines = {{"x", "y"}, {"z"}, {"y", "y", "x"}};
    const auto out = translate_corpus(std::span(&p, 1), lines, src_vocab, tgt, o);
    REQUIRE(out.size() == lines.size());
    for (const auto& t : out) {
      CHECK(t.is_tree);
      const ConstituencyTree tree = parse_linear(tokenize(join(t.tokens)));
      CHECK(t.surface == tree.yield());
      CHECK(t.attention.tgt_tokens.back() == kEosToken);
      CHECK(t.attention.src_tokens.back() == kEosToken);
      CHECK(static_cast<std::size_t>(t.attention.weights.rows()) == t.tokens.size() + 1);
    }
  }

  TEST_CASE("attention records roundtrip exactly") {
    AttentionRecord r;
    r.src_tokens = {"a", "\"q\"", "</s>"};
    r.tgt_tokens = {"(ROOT", "b", ")ROOT", "</s>"};
    r.weights = Matrix::Random(4, 3).cwiseAbs();
    r.weights(0, 0) = 0.1 + 0.2;
    const auto back = AttentionRecord::from_json_line(r.to_json_line());
    CHECK(back.src_tokens == r.src_tokens);
    CHECK(back.tgt_tokens == r.tgt_tokens);
    CHECK(back.weights == r.weights);
    CHECK_THROWS(AttentionRecord::from_json_line("{\"src_tokens\":[\"a\"],\"tgt_tokens\":[\"b\"],\"weights\":[[1,2]]}"));
  }
}
