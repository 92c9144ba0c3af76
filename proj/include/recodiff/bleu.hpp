#pragma once

#include <vector>

#include "recodiff/vocab.hpp"

namespace recodiff {

// Sentence BLEU in [0, 1]: geometric mean of modified (clip-counted) n-gram
// precisions times the standard brevity penalty. Unigram precision is raw;
// orders n >= 2 are add-one smoothed so short sequences keep a usable signal.
// Orders longer than the candidate contribute a neutral factor.
double bleu(const TokenSeq& candidate, const TokenSeq& reference, int max_n = 4);

// Mean sentence BLEU over a set of (candidate, reference) pairs. This is the
// corpus-level figure reported by eval.
double corpus_bleu(const std::vector<TokenSeq>& candidates,
                   const std::vector<TokenSeq>& references, int max_n = 4);

}  // namespace recodiff
