#pragma once

// Reverse-mode differentiation over a small set of dense row-major matrix
// operations. A Tape records every operation of one forward pass; calling
// backward() walks the records in reverse and accumulates gradients into
// the Parameter objects that were bound as leaves.

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace relrec {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

struct Var {
    std::size_t id = 0;
};

class Tape {
public:
    // With grad disabled no backward records are kept and parameter leaves
    // do not accumulate anything (inference mode).
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool grad_enabled() const noexcept { return grad_enabled_; }

    Var constant(Matrix value);
    // Binds a parameter by reference; it must outlive the tape.
    Var param(Parameter& p);
    Var param(const Parameter& p);

    const Matrix& value(Var v) const;
    std::size_t size() const noexcept { return nodes_.size(); }

    // Seeds d(out) = seed and propagates to every parameter leaf.
    void backward(Var out, const Matrix& seed);
    // Scalar (1x1) output with seed 1.
    void backward(Var out);

    // Used by op implementations.
    using Backward = std::function<void(Tape&, const Matrix& grad_out)>;
    Var record(Matrix value, bool needs_grad, Backward backward);
    bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
    // Gradient sink for v (allocated on first use, zero-initialized).
    Matrix& grad(Var v);

private:
    struct Node {
        Matrix value;
        const Matrix* ref = nullptr;   // parameter value, when a leaf
        Parameter* sink = nullptr;     // parameter to accumulate into
        Matrix grad;
        bool needs_grad = false;
        Backward backward;
    };

    bool grad_enabled_;
    std::vector<Node> nodes_;
};

// ----- operations ---------------------------------------------------------

// out[r] = table[ids[r]]
Var gather_rows(Tape& tape, Var table, std::span<const std::int32_t> ids);
Var matmul(Tape& tape, Var a, Var b);
// x * w + b (b is a 1 x cols row broadcast over rows)
Var linear(Tape& tape, Var x, Var w, Var b);
Var add(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var a, double factor);
// Multiplies row r by row_mask[r] (a constant).
Var mask_rows(Tape& tape, Var a, std::span<const double> row_mask);
// Elementwise multiply by a constant matrix of the same shape.
Var mul_constant(Tape& tape, Var a, Matrix factor);
Var relu(Tape& tape, Var a);
Var layer_norm(Tape& tape, Var x, Var gamma, Var beta, double eps);

struct AttentionSpec {
    std::size_t seq_len = 0;
    std::size_t num_heads = 1;
    // key_valid[r] == 0 excludes row r from being attended to.
    std::span<const double> key_valid;
    // Optional dropout on attention probabilities: keep mask per
    // (sequence, head, query, key) entry, already scaled by 1/(1-rate).
    const std::vector<Matrix>* dropout_masks = nullptr;
    // When set, receives the attention probabilities per (sequence, head).
    std::vector<Matrix>* probabilities_out = nullptr;
};

// Causal multi-head attention over consecutive blocks of seq_len rows.
// Query t of a block attends to keys s <= t of the same block with
// key_valid set; rows with no admissible key produce zeros.
Var causal_attention(Tape& tape, Var q, Var k, Var v, const AttentionSpec& spec);

// out[j] = dot(h[rows[j]], table[items[j]]), returned as an n x 1 column.
Var gather_dot(Tape& tape, Var h, std::span<const std::size_t> rows, Var table,
               std::span<const std::int32_t> items);

}  // namespace relrec
