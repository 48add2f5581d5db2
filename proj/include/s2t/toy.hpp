// Synthetic reordering corpus: verb-final source sentences paired with
// verb-medial target trees, with gold word alignments.
//
//   source: jane eine grosse katze kaufte .
//   target: (ROOT (S (NP jane )NP (VP bought (NP a big cat )NP )VP . )S )ROOT

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "s2t/analysis.hpp"
#include "s2t/treebank.hpp"

namespace s2t {

struct ToyPair {
  std::vector<std::string> source;
  ConstituencyTree tree;
  Alignment gold;  // target terminal ordinal -> source position
};

std::vector<ToyPair> gen_toy(std::size_t size, std::uint64_t seed);

}  // namespace s2t
