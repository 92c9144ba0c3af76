#include <doctest.h>

#include <cmath>

#include "recodiff/codec.hpp"
#include "recodiff/rng.hpp"

using namespace recodiff;

TEST_SUITE_BEGIN("codec");

namespace {

EmbeddingTable identity_table(int n) {
    EmbeddingTable t(n, n);
    for (int i = 0; i < n; ++i) t.weights.at(i, i) = 1.0;
    return t;
}

}  // namespace

TEST_CASE("embed is row lookup") {
    const EmbeddingTable t = identity_table(2);
    const Latent z = embed(TokenSeq({0, 1}), t);
    CHECK(z.values.rows == 2);
    CHECK(z.values.cols == 2);
    CHECK(z.values.at(0, 0) == 1.0);
    CHECK(z.values.at(0, 1) == 0.0);
    CHECK(z.values.at(1, 0) == 0.0);
    CHECK(z.values.at(1, 1) == 1.0);
}

TEST_CASE("embed rejects out-of-range ids and missing rng") {
    const EmbeddingTable t = identity_table(2);
    CHECK_THROWS_AS(embed(TokenSeq({2}), t), std::out_of_range);
    CHECK_THROWS_AS(embed(TokenSeq({0}), t, 0.5, nullptr), std::invalid_argument);
}

TEST_CASE("anchor noise has the right mean") {
    // Monte-Carlo mean of the noisy anchor must recover Emb(y) per coordinate
    EmbeddingTable t(3, 2);
    Rng init(3);
    init.fill_normal(t.weights);
    const TokenSeq y({0, 2});
    Rng rng(17);
    const int n_draws = 100000;
    Mat mean(2, 2);
    for (int i = 0; i < n_draws; ++i) {
        const Latent z = embed(y, t, 0.1, &rng);
        axpy(1.0, z.values, mean);
    }
    for (double& v : mean.a) v /= n_draws;
    const Latent clean = embed(y, t);
    for (size_t i = 0; i < mean.size(); ++i) {
        const double ref = clean.values.a[i];
        REQUIRE(std::abs(mean.a[i] - ref) < std::max(0.01 * std::abs(ref), 0.002));
    }
}

TEST_CASE("logits is z times table transposed") {
    EmbeddingTable t(2, 2);
    t.weights = Mat(2, 2, {1.0, 0.0, 0.0, 1.0});
    Mat z(1, 2, {1.0, 0.0});
    const Mat scores = logits(z, t);
    CHECK(scores.rows == 1);
    CHECK(scores.cols == 2);
    CHECK(scores.at(0, 0) == doctest::Approx(1.0));
    CHECK(scores.at(0, 1) == doctest::Approx(0.0));

    // softmax of [1, 0] is [e/(e+1), 1/(e+1)]
    const Mat p = softmax_rows(scores);
    const double e = std::exp(1.0);
    CHECK(p.at(0, 0) == doctest::Approx(e / (e + 1.0)).epsilon(1e-12));
    CHECK(p.at(0, 1) == doctest::Approx(1.0 / (e + 1.0)).epsilon(1e-12));
}

TEST_CASE("zero latent gives uniform softmax") {
    Rng rng(5);
    EmbeddingTable t(7, 4);
    rng.fill_normal(t.weights);
    const Mat z(3, 4);
    const Mat p = softmax_rows(logits(z, t));
    for (int i = 0; i < p.rows; ++i) {
        for (int j = 0; j < p.cols; ++j) {
            REQUIRE(p.at(i, j) == doctest::Approx(1.0 / 7).epsilon(1e-12));
        }
    }
}

TEST_CASE("logits rejects width mismatch") {
    const EmbeddingTable t = identity_table(3);
    CHECK_THROWS_AS(logits(Mat(2, 4), t), std::invalid_argument);
}

TEST_CASE("logits is linear in z") {
    Rng rng(9);
    EmbeddingTable t(5, 3);
    rng.fill_normal(t.weights);
    const Mat z1 = random_normal(2, 3, rng);
    const Mat z2 = random_normal(2, 3, rng);
    const double a = 1.7, b = -0.4;
    Mat combo(2, 3);
    for (size_t i = 0; i < combo.size(); ++i) combo.a[i] = a * z1.a[i] + b * z2.a[i];
    const Mat lhs = logits(combo, t);
    const Mat l1 = logits(z1, t);
    const Mat l2 = logits(z2, t);
    for (size_t i = 0; i < lhs.size(); ++i) {
        REQUIRE(lhs.a[i] == doctest::Approx(a * l1.a[i] + b * l2.a[i]).epsilon(1e-12));
    }
}

TEST_CASE("softmax rows sum to one") {
    Rng rng(21);
    const Mat scores = random_normal(6, 9, rng);
    const Mat p = softmax_rows(scores);
    for (int i = 0; i < p.rows; ++i) {
        double sum = 0.0;
        for (int j = 0; j < p.cols; ++j) sum += p.at(i, j);
        REQUIRE(std::abs(sum - 1.0) < 1e-6);
    }
}

TEST_CASE("round_to_tokens: round trip, eos truncation, tie break") {
    const int eos = 2;
    const EmbeddingTable t = identity_table(5);

    // round trip through an orthonormal table
    const TokenSeq y({4, 3, 4});
    CHECK(round_to_tokens(embed(y, t).values, t, eos) == y);

    // eos truncates
    const TokenSeq with_eos({3, eos, 4});
    const TokenSeq got = round_to_tokens(embed(with_eos, t).values, t, eos);
    CHECK(got == TokenSeq({3}));

    // all-zero latent: zero logits everywhere, lowest index wins
    const TokenSeq zero_case = round_to_tokens(Mat(2, 5), t, eos);
    CHECK(zero_case == TokenSeq({0, 0}));
}

TEST_CASE("rounding survives noise below the margin radius") {
    // orthonormal rows are separated by sqrt(2); dot-product rounding keeps
    // the right token while the perturbation stays well inside half of that
    const int eos = 2;
    const EmbeddingTable t = identity_table(6);
    const TokenSeq y({1, 4, 5, 3});
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        Latent z = embed(y, t);
        for (double& v : z.values.a) v += 0.2 * rng.normal();
        REQUIRE(round_to_tokens(z.values, t, eos) == y);
    }
}

TEST_CASE("embed then argmax recovers tokens on an orthogonal table") {
    const EmbeddingTable t = identity_table(8);
    const TokenSeq y({7, 0, 3, 5, 1});
    const Mat scores = logits(embed(y, t).values, t);
    for (int i = 0; i < y.length(); ++i) {
        int best = 0;
        for (int j = 1; j < scores.cols; ++j) {
            if (scores.at(i, j) > scores.at(i, best)) best = j;
        }
        REQUIRE(best == y.ids[static_cast<size_t>(i)]);
    }
}

TEST_SUITE_END();
