#pragma once

#include "mgvae/autodiff.hpp"
#include "mgvae/segment.hpp"

#include <optional>
#include <vector>

// Differentiable ops over ad::Var. All ops throw ShapeError (naming the op and
// operand shapes) when shapes do not conform. The only broadcast supported is
// add_row: one row vector added to every frame.
namespace mgvae::ad {

Var matmul(Var a, Var b);     // [m,k] x [k,n]
Var matmul_nt(Var a, Var b);  // [m,k] x [n,k]^T, i.e. a * b^T
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var add_row(Var a, Var row);  // row [1,n] added to every row of a [m,n]
Var scale(Var a, Real s);
Var add_scalar(Var a, Real s);

Var concat_cols(std::span<const Var> parts);
Var concat_cols(std::initializer_list<Var> parts);
Var concat_rows(std::span<const Var> parts);
Var concat_rows(std::initializer_list<Var> parts);
Var slice_cols(Var a, std::size_t start, std::size_t count);
Var slice_rows(Var a, std::size_t start, std::size_t count);
// out.row(i) = a.row(indices[i]); gradients scatter-add back.
Var gather_rows(Var a, std::span<const std::uint32_t> indices);
// Row k is the mean of a over interval k. Intervals must lie within a's rows.
Var segment_mean(Var a, std::span<const Interval> intervals);

Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);

Var sum(Var a);   // -> [1,1]
Var mean(Var a);  // -> [1,1]

// Same value, no gradient flows through.
Var stop_gradient(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }

// Long short-term memory recursion over a whole sequence, fused into one node.
// `gates_x` holds the input projections x_t W_x^T + b for all frames, columns
// ordered (input, forget, cell, output) gates, each of width H. `w_h` is the
// [4H,H] recurrent weight. With `reverse`, frames are consumed from last to
// first and outputs stay aligned with their input frames. Returns [T,H]
// hidden states.
struct LstmInitial {
  std::optional<Var> h;  // [1,H]
  std::optional<Var> c;  // [1,H]
};
Var lstm_sequence(Var gates_x, Var w_h, bool reverse, const LstmInitial& initial = {});

}  // namespace mgvae::ad
