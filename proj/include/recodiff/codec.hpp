#pragma once

#include "recodiff/mat.hpp"
#include "recodiff/rng.hpp"
#include "recodiff/schedule.hpp"
#include "recodiff/vocab.hpp"

namespace recodiff {

// V x d word-embedding table. Trainable, and tied: it is both the diffusion
// anchor (embed) and the reconstruction head (logits).
struct EmbeddingTable {
    Mat weights;

    EmbeddingTable() = default;
    EmbeddingTable(int vocab_size, int dim) : weights(vocab_size, dim) {}

    int vocab_size() const { return weights.rows; }
    int dim() const { return weights.cols; }
};

// z0 = Emb(y) row by row. With anchor_noise_std > 0 a Gaussian of that std is
// added per entry (off by default; rng required only then).
Latent embed(const TokenSeq& y, const EmbeddingTable& table, double anchor_noise_std = 0.0,
             Rng* rng = nullptr);

// Position-wise tied-weight scores z * W^T, one row of V scores per position.
Mat logits(const Mat& z, const EmbeddingTable& table);

// Softmax over the last axis of a score matrix; rows sum to 1.
Mat softmax_rows(const Mat& scores);

// Per-position argmax of the tied logits, truncated at the first eos. Ties
// break toward the lowest token index.
TokenSeq round_to_tokens(const Mat& z, const EmbeddingTable& table, int eos_id);

}  // namespace recodiff
