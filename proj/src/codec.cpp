#include "recodiff/codec.hpp"

#include <cmath>
#include <stdexcept>

namespace recodiff {

Latent embed(const TokenSeq& y, const EmbeddingTable& table, double anchor_noise_std, Rng* rng) {
    const int d = table.dim();
    Mat out(y.length(), d);
    for (int i = 0; i < y.length(); ++i) {
        const int id = y.ids[static_cast<size_t>(i)];
        if (id < 0 || id >= table.vocab_size()) {
            throw std::out_of_range("embed: token id " + std::to_string(id) + " out of range");
        }
        const double* src = table.weights.row(id);
        double* dst = out.row(i);
        for (int j = 0; j < d; ++j) dst[j] = src[j];
    }
    if (anchor_noise_std > 0.0) {
        if (!rng) throw std::invalid_argument("embed: anchor noise requires an rng");
        for (double& v : out.a) v += anchor_noise_std * rng->normal();
    }
    return Latent(std::move(out), 0);
}

Mat logits(const Mat& z, const EmbeddingTable& table) {
    if (z.cols != table.dim()) {
        throw std::invalid_argument("logits: latent width " + std::to_string(z.cols) +
                                    " does not match embedding dim " + std::to_string(table.dim()));
    }
    return matmul_nt(z, table.weights);
}

Mat softmax_rows(const Mat& scores) {
    Mat out(scores.rows, scores.cols);
    for (int i = 0; i < scores.rows; ++i) {
        const double* in = scores.row(i);
        double* o = out.row(i);
        double mx = in[0];
        for (int j = 1; j < scores.cols; ++j) mx = std::max(mx, in[j]);
        double sum = 0.0;
        for (int j = 0; j < scores.cols; ++j) {
            o[j] = std::exp(in[j] - mx);
            sum += o[j];
        }
        for (int j = 0; j < scores.cols; ++j) o[j] /= sum;
    }
    return out;
}

TokenSeq round_to_tokens(const Mat& z, const EmbeddingTable& table, int eos_id) {
    const Mat scores = logits(z, table);
    TokenSeq out;
    for (int i = 0; i < scores.rows; ++i) {
        const double* row = scores.row(i);
        int best = 0;
        for (int j = 1; j < scores.cols; ++j) {
            if (row[j] > row[best]) best = j;  // strict: ties keep the lowest index
        }
        if (best == eos_id) break;
        out.ids.push_back(best);
    }
    return out;
}

}  // namespace recodiff
