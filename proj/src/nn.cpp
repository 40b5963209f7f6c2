#include "mgvae/nn.hpp"

#include "mgvae/error.hpp"

#include <cmath>

namespace mgvae::nn {

using ad::Var;

Dense Dense::create(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out,
                    Activation activation, Rng& rng) {
  const Real bound = Real(1) / std::sqrt(static_cast<Real>(in));
  Dense d;
  d.in = in;
  d.out = out;
  d.activation = activation;
  d.weight = params.add(name + ".w", Tensor::uniform(out, in, rng, -bound, bound));
  d.bias = params.add(name + ".b", Tensor(1, out));
  return d;
}

Var dense_forward(Session& s, const Dense& layer, Var x) {
  if (x.cols() != layer.in) {
    throw ShapeError("dense_forward", "input " + shape_string(x.value()) + " for layer with " +
                                          std::to_string(layer.in) + " inputs");
  }
  Var y = ad::add_row(ad::matmul_nt(x, s.param(layer.weight)), s.param(layer.bias));
  return layer.activation == Activation::tanh ? ad::tanh(y) : y;
}

namespace {

LstmWeights create_direction(ParameterSet& params, const std::string& name, std::size_t in,
                             std::size_t hidden, Rng& rng) {
  const Real bound = Real(1) / std::sqrt(static_cast<Real>(hidden));
  LstmWeights w;
  w.w_x = params.add(name + ".w_x", Tensor::uniform(4 * hidden, in, rng, -bound, bound));
  w.w_h = params.add(name + ".w_h", Tensor::uniform(4 * hidden, hidden, rng, -bound, bound));
  w.bias = params.add(name + ".b", Tensor(1, 4 * hidden));
  return w;
}

Var run_direction(Session& s, const LstmWeights& w, Var x, bool reverse, const ad::LstmInitial& init) {
  Var gates = ad::add_row(ad::matmul_nt(x, s.param(w.w_x)), s.param(w.bias));
  return ad::lstm_sequence(gates, s.param(w.w_h), reverse, init);
}

}  // namespace

Recurrent Recurrent::create(ParameterSet& params, const std::string& name, std::size_t in,
                            std::size_t hidden, Direction direction, Rng& rng) {
  Recurrent r;
  r.in = in;
  r.hidden = hidden;
  r.direction = direction;
  if (direction != Direction::backward) r.fwd = create_direction(params, name + ".fwd", in, hidden, rng);
  if (direction != Direction::forward) r.bwd = create_direction(params, name + ".bwd", in, hidden, rng);
  return r;
}

Var recurrent_forward(Session& s, const Recurrent& layer, Var x, const RecurrentInitial& initial) {
  if (x.cols() != layer.in) {
    throw ShapeError("recurrent_forward", "input " + shape_string(x.value()) +
                                              " for layer with " + std::to_string(layer.in) +
                                              " inputs");
  }
  switch (layer.direction) {
    case Direction::forward:
      return run_direction(s, layer.fwd, x, false, initial.fwd);
    case Direction::backward:
      return run_direction(s, layer.bwd, x, true, initial.bwd);
    case Direction::bidirectional:
      return ad::concat_cols({run_direction(s, layer.fwd, x, false, initial.fwd),
                              run_direction(s, layer.bwd, x, true, initial.bwd)});
  }
  throw ShapeError("recurrent_forward", "unknown direction");
}

CellState zero_state(Session& s, std::size_t hidden) {
  return {s.constant(Tensor(1, hidden)), s.constant(Tensor(1, hidden))};
}

CellState lstm_step(Session& s, const LstmWeights& w, Var x_t, const CellState& prev) {
  Var wh = s.param(w.w_h);
  const std::size_t hidden = wh.cols();
  if (x_t.rows() != 1 || prev.h.cols() != hidden || prev.c.cols() != hidden) {
    throw ShapeError("lstm_step", "input " + shape_string(x_t.value()) + ", state " +
                                      shape_string(prev.h.value()) + " for hidden size " +
                                      std::to_string(hidden));
  }
  Var a = ad::add_row(ad::matmul_nt(x_t, s.param(w.w_x)), s.param(w.bias)) + ad::matmul_nt(prev.h, wh);
  Var i = ad::sigmoid(ad::slice_cols(a, 0, hidden));
  Var f = ad::sigmoid(ad::slice_cols(a, hidden, hidden));
  Var g = ad::tanh(ad::slice_cols(a, 2 * hidden, hidden));
  Var o = ad::sigmoid(ad::slice_cols(a, 3 * hidden, hidden));
  Var c = ad::mul(f, prev.c) + ad::mul(i, g);
  Var h = ad::mul(o, ad::tanh(c));
  return {h, c};
}

Var segment_mean_pool(Var x, const SegmentSpec& seg) {
  seg.validate(static_cast<std::uint32_t>(x.rows()));
  return ad::segment_mean(x, seg.intervals());
}

Var broadcast_segments(Var z, const SegmentSpec& seg) {
  if (z.rows() != seg.size()) {
    throw ShapeError("broadcast_segments", shape_string(z.value()) + " for " +
                                               std::to_string(seg.size()) + " segments");
  }
  seg.validate(seg.frames());
  const auto index = seg.frame_to_segment();
  return ad::gather_rows(z, index);
}

}  // namespace mgvae::nn
