#include <doctest.h>

#include <cmath>
#include <map>
#include <string>
#include <unordered_map>

#include "recodiff/bleu.hpp"
#include "recodiff/rng.hpp"

using namespace recodiff;

TEST_SUITE_BEGIN("bleu");

namespace {

// Independent n-gram-counting oracle: string-keyed counting and a literal
// transcription of the metric definition, separate from the library path.
double oracle_bleu(const std::vector<int>& cand, const std::vector<int>& ref, int max_n = 4) {
    if (cand.empty()) return 0.0;
    auto count_ngrams = [](const std::vector<int>& ids, int n) {
        std::unordered_map<std::string, int> counts;
        for (int i = 0; i + n <= static_cast<int>(ids.size()); ++i) {
            std::string key;
            for (int j = 0; j < n; ++j) key += std::to_string(ids[static_cast<size_t>(i + j)]) + ",";
            counts[key] += 1;
        }
        return counts;
    };

    double log_sum = 0.0;
    for (int n = 1; n <= max_n; ++n) {
        const auto cc = count_ngrams(cand, n);
        const auto rc = count_ngrams(ref, n);
        int total = 0, matched = 0;
        for (const auto& [key, count] : cc) {
            total += count;
            auto it = rc.find(key);
            if (it != rc.end()) matched += std::min(count, it->second);
        }
        double p;
        if (n == 1) {
            if (matched == 0) return 0.0;
            p = static_cast<double>(matched) / total;
        } else {
            p = (matched + 1.0) / (total + 1.0);
        }
        log_sum += std::log(p);
    }
    double bp = 1.0;
    if (cand.size() < ref.size()) {
        bp = std::exp(1.0 - static_cast<double>(ref.size()) / cand.size());
    }
    return bp * std::exp(log_sum / max_n);
}

}  // namespace

TEST_CASE("identity scores 1") {
    const TokenSeq s(std::vector<int>{4, 5, 6, 7, 8});
    CHECK(bleu(s, s) == doctest::Approx(1.0).epsilon(1e-15));
    const TokenSeq one(std::vector<int>{9});
    CHECK(bleu(one, one) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("zero unigram overlap scores 0") {
    const TokenSeq cand(std::vector<int>{1, 2, 3});
    const TokenSeq ref(std::vector<int>{4, 5, 6});
    CHECK(bleu(cand, ref) == 0.0);
    CHECK(oracle_bleu(cand.ids, ref.ids) == 0.0);
}

TEST_CASE("clipped-count hand case: 'a a a a' vs 'a b'") {
    // p1 clips the repeated token at the reference count: 1/4. Higher orders
    // are add-one smoothed: p2 = 1/4, p3 = 1/3, p4 = 1/2. The candidate is
    // longer than the reference, so no brevity penalty applies.
    const TokenSeq cand(std::vector<int>{7, 7, 7, 7});
    const TokenSeq ref(std::vector<int>{7, 8});
    const double expected = std::pow((1.0 / 4) * (1.0 / 4) * (1.0 / 3) * (1.0 / 2), 0.25);
    CHECK(bleu(cand, ref) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(std::abs(bleu(cand, ref) - oracle_bleu(cand.ids, ref.ids)) < 1e-12);
}

TEST_CASE("brevity penalty applies to short candidates") {
    const TokenSeq cand(std::vector<int>{4, 5});
    const TokenSeq ref(std::vector<int>{4, 5, 6, 7});
    const double b = bleu(cand, ref);
    CHECK(b < 1.0);
    CHECK(std::abs(b - oracle_bleu(cand.ids, ref.ids)) < 1e-12);
    // p1 = 1, p2 = 1, p3 = p4 = 1 (no such n-grams), bp = e^{1 - 4/2}
    CHECK(b == doctest::Approx(std::exp(1.0 - 2.0)).epsilon(1e-12));
}

TEST_CASE("agrees with the oracle on random pairs") {
    Rng rng(42);
    for (int trial = 0; trial < 500; ++trial) {
        const int lc = rng.uniform_int(1, 10);
        const int lr = rng.uniform_int(1, 10);
        std::vector<int> cand(static_cast<size_t>(lc)), ref(static_cast<size_t>(lr));
        for (int& v : cand) v = rng.uniform_int(0, 5);
        for (int& v : ref) v = rng.uniform_int(0, 5);
        const double a = bleu(TokenSeq(cand), TokenSeq(ref));
        const double b = oracle_bleu(cand, ref);
        REQUIRE(std::abs(a - b) < 1e-12);
        REQUIRE(a >= 0.0);
        REQUIRE(a <= 1.0 + 1e-12);
    }
}

TEST_CASE("invariant under vocabulary relabeling") {
    Rng rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        const int lc = rng.uniform_int(1, 8);
        const int lr = rng.uniform_int(1, 8);
        std::vector<int> cand(static_cast<size_t>(lc)), ref(static_cast<size_t>(lr));
        for (int& v : cand) v = rng.uniform_int(0, 7);
        for (int& v : ref) v = rng.uniform_int(0, 7);

        // random permutation of ids 0..7
        std::vector<int> perm{0, 1, 2, 3, 4, 5, 6, 7};
        rng.shuffle(perm);
        auto relabel = [&perm](std::vector<int> ids) {
            for (int& v : ids) v = perm[static_cast<size_t>(v)];
            return ids;
        };
        const double before = bleu(TokenSeq(cand), TokenSeq(ref));
        const double after = bleu(TokenSeq(relabel(cand)), TokenSeq(relabel(ref)));
        REQUIRE(before == doctest::Approx(after).epsilon(1e-15));
    }
}

TEST_CASE("scores 1 exactly when sequences are equal (short sequences)") {
    Rng rng(99);
    for (int trial = 0; trial < 300; ++trial) {
        const int lr = rng.uniform_int(1, 8);
        std::vector<int> ref(static_cast<size_t>(lr));
        for (int& v : ref) v = rng.uniform_int(0, 3);
        CHECK(bleu(TokenSeq(ref), TokenSeq(ref)) == doctest::Approx(1.0).epsilon(1e-15));

        // perturb one position to a fresh symbol: never scores 1
        std::vector<int> cand = ref;
        cand[static_cast<size_t>(rng.uniform_int(0, lr - 1))] = 9;
        REQUIRE(bleu(TokenSeq(cand), TokenSeq(ref)) < 1.0);
    }
}

TEST_CASE("preconditions") {
    CHECK_THROWS_AS(bleu(TokenSeq({1}), TokenSeq({})), std::invalid_argument);
    CHECK(bleu(TokenSeq({}), TokenSeq({1})) == 0.0);
    CHECK_THROWS_AS(corpus_bleu({}, {}), std::invalid_argument);
    CHECK(corpus_bleu({TokenSeq({1, 2})}, {TokenSeq({1, 2})}) == doctest::Approx(1.0));
}

TEST_SUITE_END();
