#include "recodiff/bleu.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace recodiff {

namespace {

using Ngram = std::vector<int>;

std::map<Ngram, int> ngram_counts(const std::vector<int>& ids, int n) {
    std::map<Ngram, int> counts;
    const int total = static_cast<int>(ids.size()) - n + 1;
    for (int i = 0; i < total; ++i) {
        counts[Ngram(ids.begin() + i, ids.begin() + i + n)] += 1;
    }
    return counts;
}

}  // namespace

double bleu(const TokenSeq& candidate, const TokenSeq& reference, int max_n) {
    if (reference.empty()) throw std::invalid_argument("bleu: reference must be nonempty");
    if (max_n < 1) throw std::invalid_argument("bleu: max_n must be >= 1");
    if (candidate.empty()) return 0.0;

    const int c_len = candidate.length();
    const int r_len = reference.length();

    double log_prec_sum = 0.0;
    for (int n = 1; n <= max_n; ++n) {
        const int c_total = std::max(0, c_len - n + 1);
        int matched = 0;
        if (c_total > 0) {
            const auto cand_counts = ngram_counts(candidate.ids, n);
            const auto ref_counts = ngram_counts(reference.ids, n);
            for (const auto& [gram, count] : cand_counts) {
                auto it = ref_counts.find(gram);
                if (it != ref_counts.end()) matched += std::min(count, it->second);
            }
        }
        double p;
        if (n == 1) {
            p = static_cast<double>(matched) / c_total;
            if (p == 0.0) return 0.0;
        } else {
            p = (matched + 1.0) / (c_total + 1.0);
        }
        log_prec_sum += std::log(p);
    }

    const double bp = c_len >= r_len ? 1.0 : std::exp(1.0 - static_cast<double>(r_len) / c_len);
    return bp * std::exp(log_prec_sum / max_n);
}

double corpus_bleu(const std::vector<TokenSeq>& candidates,
                   const std::vector<TokenSeq>& references, int max_n) {
    if (candidates.size() != references.size()) {
        throw std::invalid_argument("corpus_bleu: size mismatch");
    }
    if (candidates.empty()) throw std::invalid_argument("corpus_bleu: empty corpus");
    double sum = 0.0;
    for (size_t i = 0; i < candidates.size(); ++i) sum += bleu(candidates[i], references[i], max_n);
    return sum / static_cast<double>(candidates.size());
}

}  // namespace recodiff
