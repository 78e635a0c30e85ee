#pragma once

// Minimal reverse-mode automatic differentiation over dense matrices.
//
// A Tape records every operation applied to Vars during a forward pass and
// replays the recorded backward closures in reverse order. Parameters are leaf
// nodes that reference externally owned storage; their gradients are
// accumulated into Parameter::grad. Rows of a batched activation are grouped
// into equally long segments (one per sequence) for the sequence-aware ops.

#include "mcm/types.hpp"

#include <deque>
#include <functional>
#include <span>
#include <vector>

namespace mcm::ad {

struct Parameter {
    Mat value;
    // Gradient sink written by Tape::backward, including through const model access.
    mutable Mat grad;
    bool trainable = true;

    Parameter() = default;
    explicit Parameter(Mat v) : value(std::move(v)), grad(Mat::Zero(value.rows(), value.cols())) {}

    void zero_grad() const { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

class Var {
public:
    Var() = default;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}

    const Mat& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    Tape* tape() const { return tape_; }
    int id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    Tape* tape_ = nullptr;
    int id_ = -1;
};

class Tape {
public:
    using Backward = std::function<void(Tape&, const Mat& grad_out)>;

    /// `record = false` gives an inference tape: values only, no closures.
    explicit Tape(bool record = true) : record_(record) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Mat value);
    /// Leaf that reads `p.value` in place; `p` must outlive the tape.
    Var param(const Parameter& p);

    /// Registers an op result. `backward` runs only if the node needs a gradient.
    Var push(Mat value, bool needs_grad, Backward backward);

    const Mat& value(int id) const;
    bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
    bool needs_grad(const Var& v) const { return needs_grad(v.id()); }
    bool recording() const { return record_; }

    /// Adds `g` into the gradient buffer of node `id` (no-op if it needs none).
    void accumulate(int id, const Mat& g);

    /// Seeds d(out)/d(out) = 1 for a 1x1 output and propagates to all leaves.
    void backward(const Var& scalar);
    void backward(const Var& out, const Mat& seed);

    /// Gradient reaching node `id` after backward (zero matrix if none).
    Mat grad(const Var& v) const;

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Mat value;
        const Mat* ref = nullptr;
        Mat grad;
        bool needs_grad = false;
        bool has_grad = false;
        const Parameter* param = nullptr;
        Backward backward;
    };

    bool record_;
    std::deque<Node> nodes_;
};

// Elementwise and linear algebra.
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// a (n x m) + row (1 x m) broadcast over rows.
Var add_row(const Var& a, const Var& row);
/// Row r of `a` gets row (r / seg_len) of `s` added / multiplied.
Var seg_add(const Var& a, const Var& s, int seg_len);
Var seg_mul(const Var& a, const Var& s, int seg_len);
/// Replicates a 1 x m row into n rows.
Var broadcast_rows(const Var& row, Eigen::Index n);
Var gather_rows(const Var& table, std::span<const int> ids);
Var concat_cols(std::span<const Var> parts);
Var gelu(const Var& a);
Var silu(const Var& a);

/// Row-wise layer normalization with learned gain/bias (1 x m each).
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

/// Mean squared error against a constant target; returns 1x1.
Var mse(const Var& pred, const Mat& target);
/// 0.5 * sum of squares; returns 1x1.
Var half_sum_squares(const Var& a);

/// Multi-head scaled dot-product attention over segments.
/// Query rows [q_off[b], q_off[b+1]) attend to key rows [k_off[b], k_off[b+1]).
/// `key_valid` (empty, or one flag per key row) drops masked keys from the softmax.
struct AttentionLayout {
    std::vector<int> q_offsets;
    std::vector<int> k_offsets;
    std::vector<unsigned char> key_valid;

    static AttentionLayout uniform(int batch, int q_len, int k_len);
};

Var multi_head_attention(const Var& q, const Var& k, const Var& v, int heads, const AttentionLayout& layout);

/// Attention across the channel axis within `groups` channel groups, per segment of `seg_len` rows.
Var channel_attention(const Var& q, const Var& k, const Var& v, int groups, int seg_len);

// Plain (tape-free) kernels shared with the forward-only API and tests.
namespace kernels {

Mat softmax_rows(const Mat& logits);
Mat layer_norm(const Mat& x, const RowVec& gain, const RowVec& bias, double eps = 1e-5);
double gelu(double x);

}  // namespace kernels

}  // namespace mcm::ad
