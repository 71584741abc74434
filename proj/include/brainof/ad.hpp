#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "brainof/tensor.hpp"

namespace brainof::ad {

// Tape-free reverse-mode autodiff: each op builds a Node holding its value,
// its parents and a closure that distributes the node's gradient to them.
// Parameters are long-lived Nodes; intermediate nodes are rebuilt per step.
struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = true;
    std::vector<Var> parents;
    std::function<void(Node&)> backprop;

    Node(Tensor v, bool rq)
        : value(std::move(v)), grad(Tensor::zeros(value.shape)), requires_grad(rq) {}
};

Var param(Tensor v);
Var constant(Tensor v);

// Reverse pass from a scalar root (numel == 1). Accumulates into .grad.
void backward(const Var& root);

// ---- elementwise / structural ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_const(const Var& a, double c);
Var scale_var(const Var& x, const Var& s);  // s scalar
Var div_var(const Var& x, const Var& s);    // s scalar, nonzero
Var sqrt_elem(const Var& x);
Var sigmoid(const Var& x);
Var gelu(const Var& x);  // tanh approximation

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var concat_rows(const Var& a, const Var& b);
Var concat_cols(const Var& a, const Var& b);
Var mul_rowvec(const Var& x, const Var& v);   // v is 1xD, broadcast over rows
Var slice_rows(const Var& a, std::size_t r0, std::size_t r1);
Var slice_cols(const Var& a, std::size_t c0, std::size_t c1);
Var gather_cols(const Var& a, const std::vector<std::size_t>& idx);  // a is 1xE
Var add_rowvec(const Var& x, const Var& b);   // b is 1xD, broadcast over rows
Var mul_rowmask(const Var& x, const std::vector<double>& mask);  // per-row scale

// Row reindexing by a flat source-index map; entries < 0 produce zeros.
Var reindex(const Var& x, std::vector<std::size_t> out_shape,
            const std::vector<long>& src_of_dst);

// ---- reductions ----
Var sum(const Var& x);        // scalar
Var mean(const Var& x);       // scalar
Var mean_rows(const Var& x);  // [R x D] -> [1 x D]

// ---- attention / norm primitives ----
// mask, if given, has either cols() entries (key mask shared by all rows) or
// rows()*cols() entries. Masked entries are exactly zero in the output.
Var softmax_rows(const Var& x, const std::vector<std::uint8_t>* mask = nullptr);
Var rms_norm_rows(const Var& x, const Var& gain);  // gain: [D], eps = 1e-6
Var rope_rows(const Var& x, const std::vector<std::size_t>& positions);

// ---- scalar helpers (for the differential-attention mixing weight) ----
Var vdot(const Var& a, const Var& b);              // scalar
Var clamp(const Var& s, double lo, double hi);     // pass-through grad inside
Var vexp(const Var& s);

// ---- losses ----
Var smooth_l1(const Var& pred, const Var& target, double beta = 1.0);
Var cross_entropy_logits(const Var& logits, const std::vector<std::size_t>& labels);

// ---- convolution over patch rows ----
// x: [L x (ch_in*T)] (each row one patch, channel-major), w: [ch_out x (ch_in*3)],
// kernel 3, stride 1, zero padding 1, no bias. Output [L x (ch_out*T)].
Var conv1d_patches(const Var& x, const Var& w, std::size_t ch_in, std::size_t t_len);

}  // namespace brainof::ad
