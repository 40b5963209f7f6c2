#pragma once

#include "mgvae/ops.hpp"
#include "mgvae/params.hpp"
#include "mgvae/segment.hpp"

#include <string>

namespace mgvae::nn {

enum class Activation { linear, tanh };

// y = act(x W^T + b), applied per frame. W is [out,in], b is [1,out].
struct Dense {
  ParamId weight;
  ParamId bias;
  std::size_t in = 0;
  std::size_t out = 0;
  Activation activation = Activation::linear;

  static Dense create(ParameterSet& params, const std::string& name, std::size_t in,
                      std::size_t out, Activation activation, Rng& rng);
};

ad::Var dense_forward(Session& s, const Dense& layer, ad::Var x);

enum class Direction { forward, backward, bidirectional };

// One direction of a long short-term memory layer. Gate blocks are stacked
// (input, forget, cell, output): w_x is [4H,in], w_h is [4H,H], bias [1,4H].
struct LstmWeights {
  ParamId w_x;
  ParamId w_h;
  ParamId bias;
};

struct Recurrent {
  std::size_t in = 0;
  std::size_t hidden = 0;
  Direction direction = Direction::bidirectional;
  LstmWeights fwd;  // unused for Direction::backward
  LstmWeights bwd;  // unused for Direction::forward

  std::size_t out_width() const { return direction == Direction::bidirectional ? 2 * hidden : hidden; }

  static Recurrent create(ParameterSet& params, const std::string& name, std::size_t in,
                          std::size_t hidden, Direction direction, Rng& rng);
};

struct RecurrentInitial {
  ad::LstmInitial fwd;
  ad::LstmInitial bwd;
};

// [T,in] -> [T,H] (or [T,2H] for bidirectional: forward half, then backward half).
ad::Var recurrent_forward(Session& s, const Recurrent& layer, ad::Var x, const RecurrentInitial& initial = {});

// Single recurrent step built from primitive ops, for autoregressive loops
// where the next input depends on the previous output.
struct CellState {
  ad::Var h;  // [1,H]
  ad::Var c;  // [1,H]
};
CellState zero_state(Session& s, std::size_t hidden);
CellState lstm_step(Session& s, const LstmWeights& w, ad::Var x_t, const CellState& prev);

// Row k = mean of x over interval k. Throws SegmentError unless seg tiles x's rows.
ad::Var segment_mean_pool(ad::Var x, const SegmentSpec& seg);
// Inverse of pooling: frame t receives row segment(t) of z. Throws ShapeError
// if z does not have one row per interval.
ad::Var broadcast_segments(ad::Var z, const SegmentSpec& seg);

}  // namespace mgvae::nn
