#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "recodiff/mat.hpp"

namespace recodiff {

// Reverse-mode autodiff over Mat values. Nodes are appended in evaluation
// order; backward() walks them in reverse. Leaves created through param()
// carry an index into an external parameter registry so their gradients can
// be exported after backward.
//
// One tape per forward pass. Detachment is by construction: feeding a Mat
// value (not a node) into a new op makes it a constant.
//
// param() stores a pointer into the caller's parameter storage instead of a
// copy; the tape must not outlive that storage.
class Tape {
  public:
    using BackFn = std::function<void(Tape&)>;

    int leaf(Mat value);
    int param(const Mat& value, int param_index);

    const Mat& val(int id) const {
        const Node& n = nodes_[static_cast<size_t>(id)];
        return n.ext ? *n.ext : n.val;
    }
    double scalar(int id) const { return val(id).a[0]; }

    // gradient accumulator for a node, allocated (zeroed) on first access
    Mat& grad(int id);
    bool has_grad(int id) const { return nodes_[static_cast<size_t>(id)].grad.rows > 0; }

    void backward(int loss_id, double seed = 1.0);

    // visits (param_index, grad) for every param leaf that received gradient
    void export_param_grads(const std::function<void(int, const Mat&)>& sink) const;

    size_t n_nodes() const { return nodes_.size(); }
    void reserve(size_t n) { nodes_.reserve(n); }

    int emit(Mat value, BackFn back);
    void set_back(int id, BackFn back);

  private:
    struct Node {
        Mat val;
        const Mat* ext = nullptr;  // set for param leaves; val is unused then
        Mat grad;
        BackFn back;
        int param = -1;
    };
    std::vector<Node> nodes_;
};

// ---- elementwise and linear ops ----
int op_add(Tape& t, int a, int b);
int op_sub(Tape& t, int a, int b);
int op_scale(Tape& t, int a, double c);
int op_hadamard(Tape& t, int a, int b);
int op_relu(Tape& t, int a);
// broadcast a 1 x n row vector over every row of a
int op_add_rowvec(Tape& t, int a, int rowvec);
// add a constant matrix (no gradient into the constant)
int op_add_const(Tape& t, int a, const Mat& c);
int op_matmul(Tape& t, int a, int b);     // (m x k)(k x n)
int op_matmul_nt(Tape& t, int a, int b);  // (m x k)(n x k)^T -> m x n
int op_concat_cols(Tape& t, int a, int b);
// y[i,:] = table[ids[i],:]
int op_gather_rows(Tape& t, int table, const std::vector<int>& ids);

// ---- normalization / attention ----
int op_layer_norm(Tape& t, int a, int gain, int bias, double eps = 1e-5);
// q: m x d_model, k/v: n x d_model, key_mask: n entries (nonzero = attend).
// Scaled dot-product attention per head, softmax over unmasked keys. With
// causal set, query i additionally ignores keys j > i.
int op_multi_head_attention(Tape& t, int q, int k, int v, int n_heads,
                            const std::vector<uint8_t>& key_mask, bool causal = false);

// ---- reductions to 1 x 1 scalars ----
// mean over all entries of (a - target)^2
int op_mse_to_const(Tape& t, int a, const Mat& target);
// mean over used positions of -log softmax(scores)[gold]
int op_cross_entropy(Tape& t, int scores, const std::vector<int>& gold,
                     const std::vector<uint8_t>& used);
// sum of coeff[i] * scalars[i]
int op_linear_comb(Tape& t, const std::vector<int>& scalars, const std::vector<double>& coeffs);
// 1 x n mean of rows where mask is nonzero
int op_mean_rows_masked(Tape& t, int a, const std::vector<uint8_t>& mask);

}  // namespace recodiff
