#include "s2t/toy.hpp"

#include <random>
#include <stdexcept>
#include <utility>

namespace s2t {

namespace {

using Entry = std::pair<const char*, const char*>;  // target word, source word

constexpr Entry kNames[] = {{"jane", "jane"}, {"john", "john"}, {"mary", "mary"},
                            {"peter", "peter"}, {"anna", "anna"}, {"tom", "tom"}};
constexpr Entry kNouns[] = {{"cat", "katze"},  {"dog", "hund"},   {"house", "haus"}, {"car", "auto"},
                            {"book", "buch"},  {"tree", "baum"},  {"bird", "vogel"}, {"apple", "apfel"},
                            {"garden", "garten"}, {"letter", "brief"}};
constexpr Entry kDets[] = {{"a", "ein"}, {"the", "der"}};
constexpr Entry kAdjs[] = {{"big", "gross"}, {"small", "klein"}, {"red", "rot"}, {"old", "alt"}};
constexpr Entry kVerbs[] = {{"bought", "kaufte"}, {"saw", "sah"},    {"found", "fand"},  {"likes", "mag"},
                            {"sold", "verkaufte"}, {"painted", "malte"}, {"took", "nahm"}, {"wants", "will"}};
constexpr Entry kPreps[] = {{"in", "in"}, {"near", "bei"}, {"behind", "hinter"}, {"with", "mit"}};

// A target-side phrase: its tree and, per target word, the source word.
struct Phrase {
  ConstituencyTree tree;
  std::vector<std::string> source;  // source words in source order
  std::vector<std::size_t> target_to_source;  // indices into `source`
};

class ToyGrammar {
 public:
  explicit ToyGrammar(std::uint64_t seed) : rng_(seed) {}

  ToyPair sentence() {
    Phrase subj = noun_phrase(0.5, 0.3);
    Phrase obj = noun_phrase(0.1, 0.6);
    const bool with_pp = coin(0.3);
    Phrase pp;
    if (with_pp) pp = prep_phrase();
    const Entry& verb = pick(kVerbs);

    // Source order: subject, object, [pp], verb, "."
    std::vector<std::string> source;
    auto append = [&](const Phrase& p) {
      const std::size_t base = source.size();
      source.insert(source.end(), p.source.begin(), p.source.end());
      return base;
    };
    const std::size_t subj_at = append(subj);
    const std::size_t obj_at = append(obj);
    const std::size_t pp_at = with_pp ? append(pp) : 0;
    const std::size_t verb_at = source.size();
    source.emplace_back(verb.second);
    const std::size_t stop_at = source.size();
    source.emplace_back(".");

    // Target order: subject, verb, object, [pp], "."
    std::vector<std::size_t> links;
    for (std::size_t s : subj.target_to_source) links.push_back(subj_at + s);
    links.push_back(verb_at);
    for (std::size_t s : obj.target_to_source) links.push_back(obj_at + s);
    if (with_pp)
      for (std::size_t s : pp.target_to_source) links.push_back(pp_at + s);
    links.push_back(stop_at);

    std::vector<ConstituencyTree> vp_kids{ConstituencyTree::leaf(verb.first), obj.tree};
    if (with_pp) vp_kids.push_back(pp.tree);
    auto s = ConstituencyTree::node(
        "S", {subj.tree, ConstituencyTree::node("VP", std::move(vp_kids)), ConstituencyTree::leaf(".")});

    ToyPair out{std::move(source), ConstituencyTree::node("ROOT", {std::move(s)}), {}};
    for (std::size_t t = 0; t < links.size(); ++t) out.gold.links.push_back({t, links[t]});
    return out;
  }

 private:
  template <std::size_t N>
  const Entry& pick(const Entry (&table)[N]) {
    return table[std::uniform_int_distribution<std::size_t>(0, N - 1)(rng_)];
  }

  bool coin(double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < p; }

  Phrase noun_phrase(double p_name, double p_det_noun) {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
    Phrase p;
    std::vector<ConstituencyTree> kids;
    std::vector<const Entry*> words;
    if (u < p_name) {
      words.push_back(&pick(kNames));
    } else {
      words.push_back(&pick(kDets));
      if (u >= p_name + p_det_noun) words.push_back(&pick(kAdjs));
      words.push_back(&pick(kNouns));
    }
    for (std::size_t i = 0; i < words.size(); ++i) {
      kids.push_back(ConstituencyTree::leaf(words[i]->first));
      p.source.emplace_back(words[i]->second);
      p.target_to_source.push_back(i);
    }
    p.tree = ConstituencyTree::node("NP", std::move(kids));
    return p;
  }

  Phrase prep_phrase() {
    const Entry& prep = pick(kPreps);
    Phrase np = noun_phrase(0.0, 0.7);
    Phrase p;
    p.source.emplace_back(prep.second);
    p.source.insert(p.source.end(), np.source.begin(), np.source.end());
    p.target_to_source.push_back(0);
    for (std::size_t s : np.target_to_source) p.target_to_source.push_back(s + 1);
    p.tree = ConstituencyTree::node("PP", {ConstituencyTree::leaf(prep.first), std::move(np.tree)});
    return p;
  }

  std::mt19937_64 rng_;
};

}  // namespace

std::vector<ToyPair> gen_toy(std::size_t size, std::uint64_t seed) {
  if (size == 0) throw std::invalid_argument("gen_toy: size must be at least 1");
  ToyGrammar grammar(seed);
  std::vector<ToyPair> out;
  out.reserve(size);
  for (std::size_t i = 0; i < size; ++i) out.push_back(grammar.sentence());
  return out;
}

}  // namespace s2t
